//! Cube-sum inequalities: the star-dilated sum and its off-star tails.

use std::f64::consts::PI;

use fracharm::grid::distance;
use fracharm::weights::Weight;
use fracharm::{weighted_lp_quasinorm, GridFunction};

use super::{assemble, cube_family, rh_hypothesis, rw_hypothesis, target_q, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{field, reject, Result};
use crate::report::{Check, RatioReport};

struct Setup {
    p: f64,
    q: f64,
    w: Weight,
    wq: Weight,
    hypotheses: Vec<Check>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let p = *cfg
        .constant_exponents()?
        .first()
        .ok_or_else(|| field("exponents", "need the exponent p"))?;
    if !(cfg.gamma > 0.0) {
        return Err(reject("need gamma > 0"));
    }
    let q = target_q(p, cfg.gamma, cfg.n)?;
    let w = cfg.weight(0)?;
    let family = cfg.constants_family()?;
    let mut hypotheses = vec![Check::at_most("p < n/gamma", p, cfg.n as f64 / cfg.gamma)];
    hypotheses.push(rh_hypothesis(&w, q / p, &family, "w")?);
    let wq = w.pow(q / p);
    Ok(Setup { p, q, w, wq, hypotheses })
}

/// `||sum l^gamma chi_{Q*}||_{L^q(w^{q/p})}` against `||sum chi_Q||_{L^p(w)}`.
pub fn run_lemma22(cfg: &ExperimentConfig, seed: u64) -> Result<RatioReport> {
    let Setup { p, q, w, wq, hypotheses } = setup(cfg)?;
    let gamma = cfg.gamma;
    assemble("lemma22", cfg, seed, hypotheses, |sc| {
        let cubes = cube_family(cfg, seed, sc.trial, 0, cfg.corpus.atoms, sc.s)?;
        let mut lhs = GridFunction::zeros(sc.grid);
        let mut rhs = GridFunction::zeros(sc.grid);
        for (cube, lambda) in &cubes {
            lhs.add_on_cube(&cube.star(), lambda * cube.side().powf(gamma));
            rhs.add_on_cube(cube, *lambda);
        }
        Ok(Outcome::new(
            weighted_lp_quasinorm(&lhs, q, &wq.cell_values(sc.grid)?)?,
            weighted_lp_quasinorm(&rhs, p, &w.cell_values(sc.grid)?)?,
        ))
    })
}

/// `(coefficient, exponent)` of an origin-centered power (or constant) weight.
fn origin_power(w: &Weight) -> Option<(f64, f64)> {
    match w {
        Weight::Power {
            center, exponent, scale, ..
        } if center.iter().all(|c| *c == 0.0) => Some((*scale, *exponent)),
        _ => None,
    }
}

/// Upper bound for `int_{|x| > b} (S (|x| - r)^(-d))^q c |x|^alpha dx`, valid
/// because `|x - c_j| >= |x| - r` there.
pub fn exterior_tail(n: usize, s: f64, d: f64, q: f64, coef: f64, alpha: f64, b: f64, r: f64) -> Option<f64> {
    let e = d * q;
    let radial = n as f64 - 1.0 + alpha;
    if !(b > r) || !(e > radial + 1.0) {
        return None;
    }
    // t^radial <= (b/(b-r))^radial (t-r)^radial for t >= b when radial >= 0
    let kappa = if radial > 0.0 { (b / (b - r)).powf(radial) } else { 1.0 };
    let sphere = if n == 1 { 2.0 } else { 2.0 * PI };
    Some(sphere * coef * kappa * s.powf(q) * (b - r).powf(radial + 1.0 - e) / (e - radial - 1.0))
}

/// Off-star tails `sum l^eps chi_{(Q*)^c} / |x - c|^(eps - gamma)` with the
/// exterior of the box bounded in closed form and added to the LHS.
pub fn run_lemma23(cfg: &ExperimentConfig, seed: u64) -> Result<RatioReport> {
    let Setup {
        p,
        q,
        w,
        wq,
        mut hypotheses,
    } = setup(cfg)?;
    let eps = cfg.params.epsilon.ok_or_else(|| field("params.epsilon", "lemma23 needs epsilon"))?;
    let family = cfg.constants_family()?;
    let (r_w, check) = rw_hypothesis(&w, &family, "w")?;
    hypotheses.push(check);
    let n = cfg.n as f64;
    let threshold = (n * r_w / p).max(n);
    if !(eps > threshold) {
        return Err(reject(format!("epsilon = {eps} must exceed max(n r_w / p, n) = {threshold} (r_w = {r_w})")));
    }
    hypotheses.push(Check::at_least("epsilon > max(n r_w/p, n)", eps, threshold));
    let (coef, alpha) = origin_power(&wq).ok_or_else(|| field("weights", "lemma23 tails need an origin-centered power weight"))?;
    let gamma = cfg.gamma;
    let dim = cfg.n;
    let bounds = &cfg.grid.bounds;
    let half_width = (0..dim).map(|a| (-bounds.lo[a]).min(bounds.hi[a])).fold(f64::INFINITY, f64::min);
    let mut report = assemble("lemma23", cfg, seed, hypotheses, |sc| {
        let cubes = cube_family(cfg, seed, sc.trial, 0, cfg.corpus.atoms, sc.s)?;
        let stars: Vec<_> = cubes.iter().map(|(c, _)| c.star()).collect();
        let lhs = GridFunction::from_fn(sc.grid, |x| {
            let mut v = 0.0;
            for ((cube, lambda), star) in cubes.iter().zip(&stars) {
                if !star.contains(x) {
                    let d = distance(&cube.center_point(), &to_point(x), dim);
                    v += lambda * cube.side().powf(eps) * d.powf(gamma - eps);
                }
            }
            v
        })?;
        let mut rhs = GridFunction::zeros(sc.grid);
        for (cube, lambda) in &cubes {
            rhs.add_on_cube(cube, *lambda);
        }
        let inside = weighted_lp_quasinorm(&lhs, q, &wq.cell_values(sc.grid)?)?.powf(q);
        let sum: f64 = cubes.iter().map(|(c, l)| l * c.side().powf(eps)).sum();
        let reach = cubes
            .iter()
            .map(|(c, _)| distance(&c.center_point(), &[0.0; 2], dim))
            .fold(0.0, f64::max);
        let tail = exterior_tail(dim, sum, eps - gamma, q, coef, alpha, half_width * sc.s, reach)
            .ok_or_else(|| field("grid", "box too small or exponents too weak for the exterior bound"))?;
        let lhs = (inside + tail).powf(1.0 / q);
        Ok(Outcome::new(lhs, weighted_lp_quasinorm(&rhs, p, &w.cell_values(sc.grid)?)?)
            .note("max_tail_fraction", tail / (inside + tail)))
    })?;
    report.diagnostic("epsilon", eps);
    report.diagnostic("r_w", r_w);
    Ok(report)
}

fn to_point(x: &[f64]) -> [f64; 2] {
    [x[0], if x.len() > 1 { x[1] } else { 0.0 }]
}
