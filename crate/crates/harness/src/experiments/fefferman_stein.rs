//! Vector-valued maximal inequalities on families of weighted indicators.

use fracharm::maximal::{frac_maximal, hl_maximal, MaximalConfig};
use fracharm::weights::{ap_constant, apq_constant_for};
use fracharm::{weighted_lp_quasinorm, GridFunction};

use super::{assemble, cube_family, target_q, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{field, reject, Result};
use crate::report::{Check, RatioReport};

/// `(sum |f_k|^r)^(1/r)` pointwise.
fn r_sum(fs: &[GridFunction], r: f64) -> Result<GridFunction> {
    let mut acc = GridFunction::zeros(fs[0].grid());
    for f in fs {
        acc = acc.zip_with(f, |a, b| a + b.abs().powf(r))?;
    }
    Ok(acc.map(|v| v.powf(1.0 / r)))
}

/// `||(sum M(f_k)^r)^(1/r)||_{L^p(w)} <~ ||(sum |f_k|^r)^(1/r)||_{L^p(w)}`, or with
/// `params.fractional` the `M_gamma` form between `L^p(w^p)` and `L^q(w^q)`.
pub fn run_fefferman_stein(cfg: &ExperimentConfig, seed: u64) -> Result<RatioReport> {
    let p = *cfg
        .constant_exponents()?
        .first()
        .ok_or_else(|| field("exponents", "need the exponent p"))?;
    let r = cfg.params.r;
    if !(p > 1.0 && p.is_finite()) || !(r > 1.0 && r.is_finite()) {
        return Err(reject(format!("need 1 < p, r < infinity, got p = {p}, r = {r}")));
    }
    let functions = cfg.params.functions;
    if functions == 0 {
        return Err(field("params.functions", "need at least one function"));
    }
    let w = cfg.weight(0)?;
    let family = cfg.constants_family()?;
    let fractional = cfg.params.fractional;
    let gamma = if fractional { cfg.gamma } else { 0.0 };
    let (q, rep) = if fractional {
        (target_q(p, gamma, cfg.n)?, apq_constant_for(&w, p, gamma, &family)?)
    } else {
        (p, ap_constant(&w, p, &family)?)
    };
    let class = if fractional { format!("A_{{{p},{q}}}") } else { format!("A_{p}") };
    if !(rep.stable && rep.value.is_finite()) {
        return Err(reject(format!("weight is not {class}-stable (constant {})", rep.value)));
    }
    let hypotheses = vec![
        Check::at_least("p > 1", p, 1.0),
        Check::at_least("r > 1", r, 1.0),
        Check::at_most(format!("{class} constant"), rep.value, f64::INFINITY),
    ];
    // L^p(w) for the classical form; w^p and w^q in the off-diagonal form
    let (w_in, w_out) = if fractional { (w.pow(p), w.pow(q)) } else { (w.clone(), w) };
    let mut report = assemble("fefferman-stein", cfg, seed, hypotheses, |sc| {
        let cubes = cube_family(cfg, seed, sc.trial, 0, functions, sc.s)?;
        let fs: Vec<GridFunction> = cubes.iter().map(|(q, l)| GridFunction::indicator(sc.grid, q, *l)).collect();
        let mcfg = MaximalConfig::for_grid(sc.grid);
        let ms = fs
            .iter()
            .map(|f| if fractional { frac_maximal(f, gamma, &mcfg) } else { hl_maximal(f, &mcfg) })
            .collect::<fracharm::Result<Vec<_>>>()?;
        let lhs = weighted_lp_quasinorm(&r_sum(&ms, r)?, q, &w_out.cell_values(sc.grid)?)?;
        let rhs = weighted_lp_quasinorm(&r_sum(&fs, r)?, p, &w_in.cell_values(sc.grid)?)?;
        Ok(Outcome::new(lhs, rhs))
    })?;
    report.diagnostic("q", q);
    report.diagnostic("functions", functions);
    report.diagnostic("fractional", fractional);
    Ok(report)
}
