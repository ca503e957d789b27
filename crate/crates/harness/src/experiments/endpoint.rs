//! `T_gamma` with the last `l` slots taken in `L^infinity`.

use std::f64::consts::PI;

use fracharm::atoms::hardy_quasinorm;
use fracharm::kernels::{apply_frac_operator, KernelSpec};
use fracharm::{weighted_lp_quasinorm, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::theorem::{atomic_sums, mollifier, record_exponents, weighted_setup};
use super::{assemble, slot_seed, Outcome, Scaled};
use crate::config::ExperimentConfig;
use crate::error::{field, reject, Result};
use crate::report::{Check, RatioReport};

/// Bounded slot `j` of a trial: a configured constant, or `1 + a cos(pi k x / s + phase)`
/// in the dilated frame so the sweep sees the same function.
fn bounded_slot(cfg: &ExperimentConfig, seed: u64, sc: &Scaled, j: usize, slot: usize) -> Result<GridFunction> {
    if let Some(values) = &cfg.params.bounded_values {
        return Ok(GridFunction::constant(sc.grid, values[j]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(slot_seed(seed, sc.trial, slot));
    let a: f64 = rng.gen_range(0.1..0.9);
    let k: [f64; 2] = [rng.gen_range(1.0..4.0), rng.gen_range(1.0..4.0)];
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let s = sc.s;
    Ok(GridFunction::from_fn(sc.grid, |x| {
        let arg: f64 = x.iter().zip(&k).map(|(xi, ki)| ki * xi / s).sum();
        1.0 + a * (PI * arg + phase).cos()
    })?)
}

pub fn run_endpoint_remark(cfg: &ExperimentConfig, seed: u64) -> Result<RatioReport> {
    let l = cfg.params.bounded_slots;
    if l == 0 || l >= cfg.m {
        return Err(field("params.bounded_slots", format!("need 1 <= l < m = {}", cfg.m)));
    }
    let atomic = cfg.m - l;
    let limit = (atomic * cfg.n) as f64;
    if !(cfg.gamma < limit) {
        return Err(reject(format!("need gamma < (m - l) n = {limit}, got {}", cfg.gamma)));
    }
    if let Some(values) = &cfg.params.bounded_values {
        if values.len() != l || values.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return Err(field("params.bounded_values", format!("need {l} finite nonzero values")));
        }
    }
    let setup = weighted_setup(cfg, atomic)?;
    let kernel = KernelSpec::kenig_stein(cfg.m, cfg.n, cfg.gamma, setup.order)?;
    let phi = mollifier(cfg)?;
    let s = &setup;
    let mut hypotheses = setup.hypotheses.clone();
    hypotheses.push(Check::at_most("gamma < (m - l) n", cfg.gamma, limit));
    let mut report = assemble("endpoint", cfg, seed, hypotheses, |sc| {
        let sums = atomic_sums(cfg, seed, sc, atomic, s.order)?;
        let gs = (0..l)
            .map(|j| bounded_slot(cfg, seed, sc, j, atomic + j))
            .collect::<Result<Vec<_>>>()?;
        let mut fs: Vec<&GridFunction> = sums.iter().map(|a| a.realized()).collect();
        fs.extend(gs.iter());
        let t = apply_frac_operator(&kernel, &fs)?;
        let lhs = weighted_lp_quasinorm(&t, s.q, &s.w_bar.cell_values(sc.grid)?)?;
        let phi = phi.dilated(sc.s)?;
        let mut rhs: f64 = gs.iter().map(|g| g.max_abs()).product();
        for (i, a) in sums.iter().enumerate() {
            rhs *= hardy_quasinorm(a.realized(), s.ps[i], &s.weights[i], &phi)?;
        }
        Ok(Outcome::new(lhs, rhs))
    })?;
    record_exponents(&mut report, &setup, &setup.gammas(cfg.n));
    report.diagnostic("bounded_slots", l);
    Ok(report)
}
