//! Experiment registry and the shared trial runner.

use std::collections::BTreeMap;

use fracharm::atoms::FamilyBlueprint;
use fracharm::weights::{default_p_grid, rh_constant, rw_estimate, Weight, RW_CAP};
use fracharm::{Cube, DyadicFamily, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{field, reject, HarnessError, Result};
use crate::report::{Check, RatioReport, Stability, Trial};

pub mod annuli;
pub mod diagnostics;
pub mod endpoint;
pub mod extrapolation;
pub mod fefferman_stein;
pub mod lemmas;
pub mod theorem;
pub mod var_theorem;

/// Registered experiment ids with one-line descriptions.
pub const EXPERIMENTS: &[(&str, &str)] = &[
    ("lemma22", "cube sums: l(Q)^gamma chi_{Q*} in L^q(w^{q/p}) against chi_Q in L^p(w)"),
    ("lemma23", "tail sums l(Q)^eps / |x - c|^(eps - gamma) off Q*, with a closed-form exterior bound"),
    ("annuli", "two-sided constants of the ring tiling of the complement of Q*"),
    ("fefferman-stein", "vector-valued maximal inequality, or its fractional off-diagonal form"),
    ("theorem-main", "T_gamma on atomic sums: L^q(w-bar) against the product of weighted Hardy norms"),
    ("endpoint", "T_gamma with trailing L^infinity slots"),
    ("var-theorem", "T_gamma between variable-exponent Hardy and Lebesgue spaces"),
    ("extrapolation", "the constructive extrapolation chain on concrete tuples"),
    ("diagnostics", "pointwise G1 and Taylor-remainder ratios under dilation"),
];

pub fn run(id: &str, cfg: &ExperimentConfig, seed: u64) -> Result<RatioReport> {
    if let Some(declared) = &cfg.experiment {
        if declared != id {
            return Err(field("experiment", format!("config is for `{declared}`, not `{id}`")));
        }
    }
    cfg.validate()?;
    match id {
        "lemma22" => lemmas::run_lemma22(cfg, seed),
        "lemma23" => lemmas::run_lemma23(cfg, seed),
        "annuli" => annuli::run_annuli(cfg, seed),
        "fefferman-stein" => fefferman_stein::run_fefferman_stein(cfg, seed),
        "theorem-main" => theorem::run_theorem_main(cfg, seed),
        "endpoint" => endpoint::run_endpoint_remark(cfg, seed),
        "var-theorem" => var_theorem::run_var_theorem(cfg, seed),
        "extrapolation" => extrapolation::run_extrapolation_demo(cfg, seed),
        "diagnostics" => diagnostics::run_diagnostics(cfg, seed),
        other => Err(HarnessError::UnknownExperiment(other.to_string())),
    }
}

/// Deterministic sub-seed for one slot of one trial.
pub fn slot_seed(seed: u64, trial: usize, slot: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 16) | slot as u64);
    rng.gen()
}

/// A trial evaluated at dilation `2^k`; `grid` is the base grid scaled by `s`.
pub struct Scaled<'a> {
    pub trial: usize,
    pub k: i32,
    pub s: f64,
    pub grid: &'a Grid,
}

/// Both sides of one trial plus named side measurements (aggregated by max).
pub struct Outcome {
    pub lhs: f64,
    pub rhs: f64,
    pub notes: Vec<(&'static str, f64)>,
}

impl Outcome {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Outcome {
            lhs,
            rhs,
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, key: &'static str, value: f64) -> Self {
        self.notes.push((key, value));
        self
    }
}

pub type Notes = BTreeMap<&'static str, f64>;

/// Corpus at `k = 0` followed by the dilation sweep of the first `sweep.trials` entries.
pub fn sweep_jobs(cfg: &ExperimentConfig) -> Vec<(usize, i32)> {
    let mut jobs: Vec<(usize, i32)> = (0..cfg.corpus.count).map(|t| (t, 0)).collect();
    for t in 0..cfg.sweep.trials.min(cfg.corpus.count) {
        for k in cfg.sweep.k_min..=cfg.sweep.k_max {
            if k != 0 {
                jobs.push((t, k));
            }
        }
    }
    jobs
}

/// Runs `f` over `jobs` in parallel; output order follows `jobs`.
pub fn run_trials<F>(base: &Grid, jobs: &[(usize, i32)], f: F) -> Result<(Vec<Trial>, Notes)>
where
    F: Fn(&Scaled) -> Result<Outcome> + Sync,
{
    let mut grids = BTreeMap::new();
    for &(_, k) in jobs {
        if let std::collections::btree_map::Entry::Vacant(e) = grids.entry(k) {
            e.insert(base.dilate_about_origin(2f64.powi(k))?);
        }
    }
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(trial, k)| {
            f(&Scaled {
                trial,
                k,
                s: 2f64.powi(k),
                grid: &grids[&k],
            })
        })
        .collect::<Result<_>>()?;
    let mut notes = Notes::new();
    let trials = jobs
        .iter()
        .zip(outcomes)
        .map(|(&(trial, k), o)| {
            for (key, v) in o.notes {
                let slot = notes.entry(key).or_insert(f64::NEG_INFINITY);
                *slot = nan_max(*slot, v);
            }
            Trial::new(trial, k, o.lhs, o.rhs)
        })
        .collect();
    Ok((trials, notes))
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Reruns the first trials at `h/2` and compares the max ratio.
pub fn stability_gate<F>(cfg: &ExperimentConfig, base: &Grid, trials: &[Trial], f: F) -> Result<Option<Stability>>
where
    F: Fn(&Scaled) -> Result<Outcome> + Sync,
{
    let count = cfg.tolerances.stability_trials.min(cfg.corpus.count);
    if count == 0 {
        return Ok(None);
    }
    let coarse = trials
        .iter()
        .filter(|t| t.scale_k == 0 && t.trial < count)
        .map(|t| t.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let fine = Grid::new(base.bounds().clone(), base.h() / 2.0)?;
    let jobs: Vec<(usize, i32)> = (0..count).map(|t| (t, 0)).collect();
    let (half, _) = run_trials(&fine, &jobs, f)?;
    let fine_max = half.iter().map(|t| t.ratio).fold(f64::NEG_INFINITY, f64::max);
    let change = (fine_max / coarse - 1.0).abs();
    Ok(Some(Stability {
        trials: count,
        h: base.h(),
        max_ratio: coarse,
        half_h_max_ratio: fine_max,
        relative_change: change,
        tolerance: cfg.tolerances.stability,
        pass: change <= cfg.tolerances.stability,
    }))
}

/// Full report: corpus, sweep, stability gate and aggregated notes.
pub fn assemble<F>(id: &str, cfg: &ExperimentConfig, seed: u64, hypotheses: Vec<Check>, f: F) -> Result<RatioReport>
where
    F: Fn(&Scaled) -> Result<Outcome> + Sync,
{
    let grid = cfg.grid.build()?;
    let (trials, notes) = run_trials(&grid, &sweep_jobs(cfg), &f)?;
    let stability = stability_gate(cfg, &grid, &trials, &f)?;
    let mut report = RatioReport::new(id, seed, cfg.grid.clone(), hypotheses, trials, cfg.tolerances.slope_tol);
    report.stability = stability;
    for (k, v) in notes {
        report.diagnostic(k, v);
    }
    Ok(report)
}

/// Rejects unless `w` has a finite, stable `RH_s` constant on the family.
pub fn rh_hypothesis(w: &Weight, s: f64, family: &DyadicFamily, label: &str) -> Result<Check> {
    let rep = rh_constant(w, s, family)?;
    if !(rep.stable && rep.value.is_finite()) {
        return Err(reject(format!(
            "{label}: weight {:?} is not RH_{s}-stable (constant {}, per level {:?})",
            rep.weight_descriptor, rep.value, rep.per_level
        )));
    }
    Ok(Check::at_most(format!("{label}: RH_{s} constant"), rep.value, f64::INFINITY))
}

/// `r_w` from the A_p scan, rejected when no stable exponent is found.
pub fn rw_hypothesis(w: &Weight, family: &DyadicFamily, label: &str) -> Result<(f64, Check)> {
    let r = rw_estimate(w, family, &default_p_grid(RW_SCAN_MAX), RW_CAP)?;
    if !r.is_finite() {
        return Err(reject(format!("{label}: no stable A_p constant for p <= {RW_SCAN_MAX}")));
    }
    Ok((r, Check::at_most(format!("{label}: r_w"), r, RW_SCAN_MAX)))
}

const RW_SCAN_MAX: f64 = 8.0;

/// Cubes and coefficients of one corpus entry, dilated by `s`.
pub fn cube_family(cfg: &ExperimentConfig, seed: u64, trial: usize, slot: usize, count: usize, s: f64) -> Result<Vec<(Cube, f64)>> {
    let bp = FamilyBlueprint::sample(slot_seed(seed, trial, slot), &cfg.corpus.law(count, 1))?;
    bp.atoms
        .iter()
        .map(|a| Ok((Cube::from_corner(&a.corner, 2f64.powi(a.level))?.dilate_about_origin(s), a.lambda)))
        .collect()
}

/// `1/p = sum 1/p_i`.
pub fn harmonic_p(ps: &[f64]) -> f64 {
    1.0 / ps.iter().map(|p| 1.0 / p).sum::<f64>()
}

/// `q` from `1/q = 1/p - gamma/n`, or a rejection when `p >= n/gamma`.
pub fn target_q(p: f64, gamma: f64, n: usize) -> Result<f64> {
    let inv = 1.0 / p - gamma / n as f64;
    if !(p > 0.0) || !(inv > 0.0) {
        return Err(reject(format!("need 0 < p < n/gamma, got p = {p}, n/gamma = {}", n as f64 / gamma)));
    }
    Ok(1.0 / inv)
}
