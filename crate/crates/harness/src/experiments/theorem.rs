//! Weighted Hardy-to-Lebesgue bounds for `T_gamma` on random atomic sums.

use fracharm::atoms::{hardy_quasinorm, AtomicSum, FamilyBlueprint};
use fracharm::kernels::{apply_frac_operator, pointwise_g1_bound_check, taylor_polynomial, taylor_remainder_check, KernelSpec};
use fracharm::maximal::Mollifier;
use fracharm::weights::Weight;
use fracharm::{weighted_lp_quasinorm, Cube, GridFunction};

use super::{assemble, harmonic_p, rh_hypothesis, rw_hypothesis, slot_seed, target_q, Outcome, Scaled};
use crate::config::ExperimentConfig;
use crate::error::{field, reject, Result};
use crate::report::{Check, RatioReport};

/// Exponents and weights of a weighted multilinear run.
pub struct WeightedSetup {
    pub ps: Vec<f64>,
    pub p: f64,
    pub q: f64,
    pub qs: Vec<f64>,
    pub weights: Vec<Weight>,
    pub w_bar: Weight,
    pub order: usize,
    pub order_threshold: f64,
    pub hypotheses: Vec<Check>,
}

impl WeightedSetup {
    /// `gamma_i = n (1/p_i - 1/q_i)`, summing to `gamma`.
    pub fn gammas(&self, n: usize) -> Vec<f64> {
        self.ps.iter().zip(&self.qs).map(|(p, q)| n as f64 * (1.0 / p - 1.0 / q)).collect()
    }
}

/// Checks the exponent relations, the reverse Hölder classes and the moment
/// order for `slots` atomic slots out of `m`.
pub fn weighted_setup(cfg: &ExperimentConfig, slots: usize) -> Result<WeightedSetup> {
    let ps = cfg.constant_exponents()?;
    if ps.len() != slots {
        return Err(field("exponents", format!("need {slots} exponents, got {}", ps.len())));
    }
    if ps.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(field("exponents", "need 0 < p_i < infinity"));
    }
    let (m, n, gamma) = (cfg.m, cfg.n, cfg.gamma);
    let dim = n as f64;
    if !(gamma > 0.0 && gamma < slots as f64 * dim) {
        return Err(reject(format!("need 0 < gamma < {}, got {gamma}", slots * n)));
    }
    let p = harmonic_p(&ps);
    let q = target_q(p, gamma, n)?;
    let mut hypotheses = vec![
        Check::at_least("1/p - gamma/n > 0", 1.0 / p - gamma / dim, 0.0),
        Check::at_most("gamma < slots * n", gamma, slots as f64 * dim),
    ];
    let qs = match &cfg.q_i {
        Some(qs) => {
            if qs.len() != slots {
                return Err(field("q_i", format!("need {slots} entries")));
            }
            if let Some(i) = (0..slots).find(|&i| !(ps[i] < qs[i])) {
                return Err(reject(format!("need p_i < q_i, slot {i} has p = {}, q = {}", ps[i], qs[i])));
            }
            let residual = (qs.iter().map(|v| 1.0 / v).sum::<f64>() - 1.0 / q).abs();
            if residual > 1e-9 / q {
                return Err(reject(format!("sum 1/q_i must equal 1/q = {}, residual {residual}", 1.0 / q)));
            }
            hypotheses.push(Check::at_most("|sum 1/q_i - 1/q|", residual, 1e-9 / q));
            qs.clone()
        }
        None => ps.iter().map(|pi| q * pi / p).collect(),
    };
    let family = cfg.constants_family()?;
    let weights = (0..slots).map(|i| cfg.weight(i)).collect::<Result<Vec<_>>>()?;
    let mut threshold: f64 = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let label = format!("w_{}", i + 1);
        hypotheses.push(rh_hypothesis(w, qs[i] / ps[i], &family, &label)?);
        let (r, check) = rw_hypothesis(w, &family, &label)?;
        hypotheses.push(check);
        threshold = threshold.max((m * n) as f64 * (r / ps[i] - 1.0));
    }
    let order = moment_order(cfg, threshold)?;
    hypotheses.push(Check::at_least("N > max mn(r_i/p_i - 1)", order as f64, threshold));
    let parts: Vec<Weight> = weights.iter().zip(&ps).map(|(w, pi)| w.pow(q / pi)).collect();
    let w_bar = Weight::product(&parts)?;
    Ok(WeightedSetup {
        ps,
        p,
        q,
        qs,
        weights,
        w_bar,
        order,
        order_threshold: threshold,
        hypotheses,
    })
}

/// Smallest integer above `threshold`, at least 1; a configured order must exceed it.
pub fn moment_order(cfg: &ExperimentConfig, threshold: f64) -> Result<usize> {
    let least = (threshold.floor() + 1.0).max(1.0) as usize;
    match cfg.corpus.order {
        Some(n) if (n as f64) <= threshold || n == 0 => Err(reject(format!("moment order N = {n} must exceed {threshold} and be at least 1"))),
        Some(n) => Ok(n),
        None => Ok(least),
    }
}

/// Atomic sums for `slots` slots of one trial, realized on the scaled grid.
pub fn atomic_sums(cfg: &ExperimentConfig, seed: u64, sc: &Scaled, slots: usize, order: usize) -> Result<Vec<AtomicSum>> {
    let law = cfg.corpus.law(cfg.corpus.atoms, order);
    (0..slots)
        .map(|i| Ok(FamilyBlueprint::sample(slot_seed(seed, sc.trial, i), &law)?.realize(sc.grid, sc.s)?))
        .collect()
}

pub fn mollifier(cfg: &ExperimentConfig) -> Result<Mollifier> {
    let (j0, j1) = cfg.params.mollifier_levels;
    Ok(Mollifier::dyadic(j0, j1)?)
}

/// `||T(f)||_{L^q(w-bar)}` over `prod ||f_i||_{H^{p_i}(w_i)}`.
pub fn run_theorem_main(cfg: &ExperimentConfig, seed: u64) -> Result<RatioReport> {
    let setup = weighted_setup(cfg, cfg.m)?;
    let kernel = KernelSpec::kenig_stein(cfg.m, cfg.n, cfg.gamma, setup.order)?;
    let phi = mollifier(cfg)?;
    let s = &setup;
    let mut report = assemble("theorem-main", cfg, seed, setup.hypotheses.clone(), |sc| {
        let sums = atomic_sums(cfg, seed, sc, cfg.m, s.order)?;
        let fs: Vec<&GridFunction> = sums.iter().map(|a| a.realized()).collect();
        let t = apply_frac_operator(&kernel, &fs)?;
        let lhs = weighted_lp_quasinorm(&t, s.q, &s.w_bar.cell_values(sc.grid)?)?;
        let phi = phi.dilated(sc.s)?;
        let mut rhs = 1.0;
        for (i, f) in fs.iter().enumerate() {
            rhs *= hardy_quasinorm(f, s.ps[i], &s.weights[i], &phi)?;
        }
        let moment = sums
            .iter()
            .flat_map(|a| a.atoms.iter().map(|x| x.max_scaled_moment()))
            .fold(0.0, f64::max);
        Ok(Outcome::new(lhs, rhs).note("max_scaled_moment", moment))
    })?;
    let gammas = setup.gammas(cfg.n);
    let (g1, taylor) = pointwise_subsample(cfg, seed, &kernel, &gammas, setup.order)?;
    report.checks.push(Check::flag("G1 ratios finite", g1.iter().all(|v| v.is_finite())));
    report.checks.push(Check::flag("Taylor ratios finite", taylor.iter().all(|v| v.is_finite())));
    record_exponents(&mut report, &setup, &gammas);
    report.diagnostic("g1_ratios", g1);
    report.diagnostic("taylor_ratios", taylor);
    Ok(report)
}

pub fn record_exponents(report: &mut RatioReport, s: &WeightedSetup, gammas: &[f64]) {
    report.diagnostic("p_i", &s.ps);
    report.diagnostic("p", s.p);
    report.diagnostic("q", s.q);
    report.diagnostic("q_i", &s.qs);
    report.diagnostic("gamma_i", gammas);
    report.diagnostic("N", s.order);
    report.diagnostic("N_threshold", s.order_threshold);
    report.diagnostic(
        "weights",
        s.weights.iter().map(|w| w.descriptor()).collect::<Vec<_>>(),
    );
}

/// G1 and Taylor-remainder ratios on the leading cubes of the first trials.
/// G1 re-centers every slot's cube on the first one so `x` lies in all stars;
/// the Taylor check expands slot 0 and evaluates at `x` just outside its star.
pub fn pointwise_subsample(cfg: &ExperimentConfig, seed: u64, kernel: &KernelSpec, gammas: &[f64], order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let law = cfg.corpus.law(1, order);
    let n = cfg.n;
    let mut g1 = Vec::new();
    let mut taylor = Vec::new();
    for trial in 0..cfg.params.diagnostic_trials.min(cfg.corpus.count) {
        let cubes = (0..kernel.m)
            .map(|i| {
                let bp = FamilyBlueprint::sample(slot_seed(seed, trial, i), &law)?;
                let a = &bp.atoms[0];
                Ok(Cube::from_corner(&a.corner, 2f64.powi(a.level))?)
            })
            .collect::<Result<Vec<_>>>()?;
        let c = cubes[0].center().to_vec();
        let centered = cubes
            .iter()
            .map(|q| Cube::new(&c, q.side()))
            .collect::<fracharm::Result<Vec<_>>>()?;
        g1.push(pointwise_g1_bound_check(kernel, &centered, gammas, &c, cfg.params.resolution)?.ratio);
        let q = &cubes[0];
        let mut x = c.clone();
        x[0] += 1.5 * q.side() * (n as f64).sqrt();
        let ys: Vec<[f64; 2]> = cubes.iter().map(|q| q.center_point()).collect();
        let data = taylor_polynomial(kernel, 0, &c, order, &x, &ys)?;
        taylor.push(taylor_remainder_check(kernel, &data, q, &lattice(q, 9))?);
    }
    Ok((g1, taylor))
}

/// `per_axis^n` points of the closed cube.
pub fn lattice(q: &Cube, per_axis: usize) -> Vec<[f64; 2]> {
    let n = q.dim();
    let count = per_axis.pow(n as u32);
    (0..count)
        .map(|code| {
            let u = [code % per_axis, code / per_axis];
            let mut y = [0.0; 2];
            for a in 0..n {
                y[a] = (q.lo(a) + q.side() * u[a] as f64 / (per_axis - 1) as f64).min(q.hi(a));
            }
            y
        })
        .collect()
}
