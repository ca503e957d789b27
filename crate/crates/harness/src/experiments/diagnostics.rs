//! Pointwise estimates used inside the atomic argument, checked on sampled
//! configurations and their dilations.

use fracharm::kernels::{pointwise_g1_bound_check, taylor_polynomial, taylor_remainder_check, KernelSpec};
use fracharm::Cube;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::slot_seed;
use super::theorem::{lattice, moment_order};
use crate::config::ExperimentConfig;
use crate::error::{reject, Result};
use crate::report::{Check, RatioReport, Trial};

/// Allowed relative drift of a ratio across the dilation sweep.
pub const DILATION_TOL: f64 = 0.1;

/// One sampled configuration before dilation.
struct Config {
    g1_cubes: Vec<Cube>,
    g1_x: Vec<f64>,
    taylor_cube: Cube,
    taylor_x: Vec<f64>,
    others: Vec<[f64; 2]>,
}

fn sample(seed: u64, c: usize, m: usize, n: usize, window: (f64, f64)) -> Result<Config> {
    let mut rng = ChaCha8Rng::seed_from_u64(slot_seed(seed, c, 0));
    let point = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(window.0..window.1)).collect::<Vec<f64>>();
    let side = |rng: &mut ChaCha8Rng| 2f64.powf(rng.gen_range(-3.0..=0.0));

    // x sits in every Q_i*: each center is within 0.9 sqrt(n) l(Q_i) of x per axis
    let g1_x = point(&mut rng);
    let mut g1_cubes = Vec::with_capacity(m);
    for _ in 0..m {
        let l = side(&mut rng);
        let c: Vec<f64> = g1_x.iter().map(|xa| xa + 0.9 * (n as f64).sqrt() * l * rng.gen_range(-1.0..1.0)).collect();
        g1_cubes.push(Cube::new(&c, l)?);
    }

    let c = point(&mut rng);
    let l = side(&mut rng);
    let taylor_cube = Cube::new(&c, l)?;
    let dist = rng.gen_range(1.6..4.0) * l * (n as f64).sqrt();
    let dir: Vec<f64> = if n == 1 {
        vec![if rng.gen_bool(0.5) { 1.0 } else { -1.0 }]
    } else {
        let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        vec![t.cos(), t.sin()]
    };
    let taylor_x: Vec<f64> = c.iter().zip(&dir).map(|(ca, d)| ca + dist * d).collect();
    let others = (0..m)
        .map(|_| {
            let mut y = [0.0; 2];
            for a in 0..n {
                y[a] = taylor_x[a] + rng.gen_range(-2.0..2.0) * l;
            }
            y
        })
        .collect();
    Ok(Config {
        g1_cubes,
        g1_x,
        taylor_cube,
        taylor_x,
        others,
    })
}

/// G1 ratio and Taylor-remainder ratio of one configuration dilated by `s`.
fn ratios(kernel: &KernelSpec, gammas: &[f64], order: usize, resolution: u32, cfg: &Config, s: f64) -> Result<(f64, f64)> {
    let cubes: Vec<Cube> = cfg.g1_cubes.iter().map(|q| q.dilate_about_origin(s)).collect();
    let x: Vec<f64> = cfg.g1_x.iter().map(|v| v * s).collect();
    let g1 = pointwise_g1_bound_check(kernel, &cubes, gammas, &x, resolution)?.ratio;
    let q = cfg.taylor_cube.dilate_about_origin(s);
    let tx: Vec<f64> = cfg.taylor_x.iter().map(|v| v * s).collect();
    let ys: Vec<[f64; 2]> = cfg.others.iter().map(|y| [y[0] * s, y[1] * s]).collect();
    let data = taylor_polynomial(kernel, 0, q.center(), order, &tx, &ys)?;
    let taylor = taylor_remainder_check(kernel, &data, &q, &lattice(&q, 9))?;
    Ok((g1, taylor))
}

/// Trials `0..C` are G1 ratios (`lhs = ratio`, `rhs = 1`), trials `C..2C`
/// the Taylor-remainder ratios, each at every `k` of the sweep range.
pub fn run_diagnostics(cfg: &ExperimentConfig, seed: u64) -> Result<RatioReport> {
    let (m, n, gamma) = (cfg.m, cfg.n, cfg.gamma);
    if !(gamma > 0.0 && gamma < (m * n) as f64) {
        return Err(reject(format!("need 0 < gamma < mn = {}", m * n)));
    }
    let order = moment_order(cfg, 0.0)?;
    let kernel = KernelSpec::kenig_stein(m, n, gamma, order)?;
    let gammas = vec![gamma / m as f64; m];
    let count = cfg.corpus.count;
    let w = &cfg.corpus.window;
    let window = (w.lo[0], w.hi[0]);
    let configs = (0..count).map(|c| sample(seed, c, m, n, window)).collect::<Result<Vec<_>>>()?;
    let ks: Vec<i32> = (cfg.sweep.k_min..=cfg.sweep.k_max).collect();
    let resolution = cfg.params.resolution;
    let rows: Vec<Vec<(i32, f64, f64)>> = configs
        .par_iter()
        .map(|c| {
            ks.iter()
                .map(|&k| ratios(&kernel, &gammas, order, resolution, c, 2f64.powi(k)).map(|(a, b)| (k, a, b)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let drift = |pick: fn(&(i32, f64, f64)) -> f64| {
        rows.iter()
            .map(|r| {
                let base = r.iter().find(|t| t.0 == 0).map(pick).unwrap_or(f64::NAN);
                r.iter().map(|t| (pick(t) / base - 1.0).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let g1_drift = drift(|t| t.1);
    let taylor_drift = drift(|t| t.2);
    let mut trials = Vec::new();
    for (c, r) in rows.iter().enumerate() {
        for &(k, g1, _) in r {
            trials.push(Trial::new(c, k, g1, 1.0));
        }
    }
    for (c, r) in rows.iter().enumerate() {
        for &(k, _, t) in r {
            trials.push(Trial::new(count + c, k, t, 1.0));
        }
    }
    let max_of = |pick: fn(&(i32, f64, f64)) -> f64| rows.iter().flatten().map(pick).fold(0.0, f64::max);
    let (g1_max, taylor_max) = (max_of(|t| t.1), max_of(|t| t.2));
    let mut report = RatioReport::new("diagnostics", seed, cfg.grid.clone(), Vec::new(), trials, cfg.tolerances.slope_tol);
    report.checks = vec![
        Check::flag("G1 ratios finite", rows.iter().flatten().all(|t| t.1.is_finite())),
        Check::flag("Taylor ratios finite", rows.iter().flatten().all(|t| t.2.is_finite())),
        Check::at_most("G1 dilation drift", g1_drift, DILATION_TOL),
        Check::at_most("Taylor dilation drift", taylor_drift, DILATION_TOL),
    ];
    report.diagnostic("configurations", count);
    report.diagnostic("gamma_i", &gammas);
    report.diagnostic("N", order);
    report.diagnostic("g1_max", g1_max);
    report.diagnostic("taylor_max", taylor_max);
    Ok(report)
}
