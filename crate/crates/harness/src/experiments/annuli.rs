//! Ring tiling of the complement of `Q*` and the two-sided equivalence
//! `|x - c|^(-s) ~ sum (3^l l(Q))^(-s) chi_R`.

use fracharm::grid::distance;
use fracharm::{Cube, Grid};

use super::{assemble, cube_family, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{reject, Result};
use crate::report::{Check, RatioReport};

/// Sample points per axis on each closed piece.
const SCAN: usize = 33;

/// The `3^n - 1` pieces of ring `l`: the cells of `3^(l+1) Q*` other than `3^l Q*`.
pub fn ring_pieces(q: &Cube, l: u32) -> Result<Vec<Cube>> {
    let n = q.dim();
    let star = q.star();
    let side = star.side() * 3f64.powi(l as i32);
    let c = q.center();
    let corner: Vec<f64> = c.iter().map(|v| v - 1.5 * side).collect();
    let mut out = Vec::with_capacity(3usize.pow(n as u32) - 1);
    for code in 0..3usize.pow(n as u32) {
        let digits = [code % 3, (code / 3) % 3];
        if digits[..n].iter().all(|d| *d == 1) {
            continue;
        }
        let lo: Vec<f64> = (0..n).map(|a| corner[a] + digits[a] as f64 * side).collect();
        out.push(Cube::from_corner(&lo, side)?);
    }
    Ok(out)
}

/// `(min, max)` of `(3^l l(Q) / |x - c|)^s` over a lattice of each closed piece of ring `l`.
pub fn ring_extremes(q: &Cube, l: u32, s: f64) -> Result<(f64, f64)> {
    let n = q.dim();
    let c = q.center_point();
    let scale = 3f64.powi(l as i32) * q.side();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for piece in ring_pieces(q, l)? {
        let count = SCAN.pow(n as u32);
        for code in 0..count {
            let u = [code % SCAN, code / SCAN];
            let mut x = [0.0; 2];
            for a in 0..n {
                x[a] = piece.lo(a) + piece.side() * u[a] as f64 / (SCAN - 1) as f64;
            }
            let v = (scale / distance(&x, &c, n)).powf(s);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok((lo, hi))
}

/// Grid cells inside `3^rings Q*` not covered exactly once by `Q*` and the pieces.
pub fn partition_defects(grid: &Grid, q: &Cube, rings: u32) -> Result<usize> {
    let star = q.star();
    let outer = star.dilate(3f64.powi(rings as i32))?;
    let mut pieces = Vec::new();
    for l in 0..rings {
        pieces.extend(ring_pieces(q, l)?);
    }
    let mut defects = 0;
    for i in 0..grid.len() {
        let x = grid.center(i);
        let x = &x[..grid.dim()];
        if !outer.contains(x) {
            continue;
        }
        let hits = usize::from(star.contains(x)) + pieces.iter().filter(|p| p.contains(x)).count();
        if hits != 1 {
            defects += 1;
        }
    }
    Ok(defects)
}

/// Trials report `lhs = max`, `rhs = min` of the pointwise ratio over all
/// cubes and rings, so `ratio` is the spread of the two-sided constants.
pub fn run_annuli(cfg: &ExperimentConfig, seed: u64) -> Result<RatioReport> {
    let s = cfg.params.s;
    if !(s > 0.0 && s.is_finite()) {
        return Err(reject(format!("need s > 0, got {s}")));
    }
    let rings = cfg.params.rings.max(1) as u32;
    let n = cfg.n as f64;
    let hypotheses = vec![Check::at_least("s > 0", s, 0.0)];
    let mut report = assemble("annuli", cfg, seed, hypotheses, |sc| {
        let cubes = cube_family(cfg, seed, sc.trial, 0, cfg.corpus.atoms, sc.s)?;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let mut spread: f64 = 0.0;
        let mut defects = 0;
        for (q, _) in &cubes {
            let first = ring_extremes(q, 0, s)?;
            for l in 0..rings {
                let (a, b) = ring_extremes(q, l, s)?;
                spread = spread.max((a / first.0 - 1.0).abs()).max((b / first.1 - 1.0).abs());
                lo = lo.min(a);
                hi = hi.max(b);
            }
            if sc.k == 0 {
                defects += partition_defects(sc.grid, q, rings)?;
            }
        }
        Ok(Outcome::new(hi, lo)
            .note("level_spread", spread)
            .note("partition_defects", defects as f64))
    })?;
    let c1 = report.trials.iter().map(|t| t.rhs).fold(f64::INFINITY, f64::min);
    let c2 = report.trials.iter().map(|t| t.lhs).fold(0.0, f64::max);
    let lower = (3.0 * n).powf(-s);
    let upper = 3f64.powf(s);
    let level_spread = report.diagnostics["level_spread"].as_f64().unwrap_or(f64::NAN);
    let defects = report.diagnostics["partition_defects"].as_f64().unwrap_or(f64::NAN);
    report.checks = vec![
        Check::at_least("c1 >= (3n)^-s", c1, lower),
        Check::at_most("c2 <= 3^s", c2, upper),
        Check::at_most("ring/cube spread of extremes", level_spread, 1e-9),
        Check::at_most("dilation spread of extremes", report.sweep_spread, 1e-9),
        Check::at_most("partition defects", defects, 0.0),
    ];
    report.diagnostic("c1", c1);
    report.diagnostic("c2", c2);
    report.diagnostic("rings", rings);
    Ok(report)
}
