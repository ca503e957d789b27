//! `T_gamma` from variable-exponent Hardy spaces into `L^{q(.)}`.

use fracharm::kernels::{apply_frac_operator, KernelSpec};
use fracharm::maximal::grand_maximal;
use fracharm::varexp::{log_holder_estimate, luxemburg_norm, luxemburg_norm_sampled, ExponentFunction, LogHolderPlan};
use fracharm::GridFunction;

use super::lemmas::exterior_tail;
use super::theorem::{atomic_sums, mollifier, moment_order};
use super::{assemble, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{field, reject, Result};
use crate::report::{Check, RatioReport};

/// Relative slack for the truncation monotonicity check (norms are bisected to 1e-8).
const TRUNCATION_SLACK: f64 = 1e-7;

/// `1/q(x) = sum 1/p_i(x) - gamma/n`.
pub fn target_exponent(ps: &[ExponentFunction], gamma: f64, n: usize, x: &[f64]) -> f64 {
    1.0 / (ps.iter().map(|p| 1.0 / p.evaluate(x)).sum::<f64>() - gamma / n as f64)
}

fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Lower envelope of `q` beyond radius `b`, sampled along rays at `b 2^(j/4)`.
fn exterior_q_floor(ps: &[ExponentFunction], gamma: f64, n: usize, b: f64) -> f64 {
    let dirs: Vec<[f64; 2]> = if n == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..8).map(|k| {
            let t = k as f64 * std::f64::consts::FRAC_PI_4;
            [t.cos(), t.sin()]
        })
        .collect()
    };
    let mut lo = f64::INFINITY;
    for d in &dirs {
        for j in 0..=200 {
            let r = b * 2f64.powf(j as f64 / 4.0);
            let x = [r * d[0], r * d[1]];
            lo = lo.min(target_exponent(ps, gamma, n, &x[..n]));
        }
    }
    lo
}

/// LHS: Luxemburg norm of `F_R = min(|T|, R) chi_{B(0,R)}` at the largest
/// truncation; RHS: `prod ||M_phi f_i||_{L^{p_i(.)}}`.
pub fn run_var_theorem(cfg: &ExperimentConfig, seed: u64) -> Result<RatioReport> {
    let (m, n, gamma) = (cfg.m, cfg.n, cfg.gamma);
    let ps = cfg.exponents.iter().map(|e| e.to_function()).collect::<Result<Vec<_>>>()?;
    if ps.len() != m {
        return Err(field("exponents", format!("need {m} exponent functions")));
    }
    if !(gamma > 0.0 && gamma < (m * n) as f64) {
        return Err(reject(format!("need 0 < gamma < mn = {}", m * n)));
    }
    let dim = n as f64;
    let inv_sum: f64 = ps.iter().map(|p| 1.0 / p.p_plus()).sum();
    if !(inv_sum > gamma / dim) {
        return Err(reject(format!("sum 1/[p_i]+ = {inv_sum} must exceed gamma/n = {}", gamma / dim)));
    }
    let mut hypotheses = vec![Check::at_least("sum 1/[p_i]+ - gamma/n", inv_sum - gamma / dim, 0.0)];
    let plan = LogHolderPlan {
        dim: n,
        ..LogHolderPlan::default()
    };
    let mut holder = Vec::new();
    for (i, p) in ps.iter().enumerate() {
        let rep = log_holder_estimate(p, &plan)?;
        if !(rep.c0_stable && rep.c0.is_finite() && rep.c_inf.is_finite()) {
            return Err(reject(format!("p_{} is not log-Hölder stable (C0 = {}, Cinf = {})", i + 1, rep.c0, rep.c_inf)));
        }
        hypotheses.push(Check::at_most(format!("p_{}: log-Hölder C0", i + 1), rep.c0, f64::INFINITY));
        hypotheses.push(Check::at_most(format!("p_{}: log-Hölder Cinf", i + 1), rep.c_inf, f64::INFINITY));
        holder.push(rep);
    }
    let order = moment_order(cfg, 0.0)?;
    let kernel = KernelSpec::kenig_stein(m, n, gamma, order)?;
    let phi = mollifier(cfg)?;
    let truncations = cfg.params.truncations.max(1);
    let bounds = &cfg.grid.bounds;
    let half_width = (0..n).map(|a| (-bounds.lo[a]).min(bounds.hi[a])).fold(f64::INFINITY, f64::min);
    let window = &cfg.corpus.window;
    let window_reach = euclid(&(0..n).map(|a| window.lo[a].abs().max(window.hi[a].abs())).collect::<Vec<_>>());
    let q_floor = exterior_q_floor(&ps, gamma, n, half_width);
    let ps_ref = &ps;
    let mut report = assemble("var-theorem", cfg, seed, hypotheses, |sc| {
        let grid = sc.grid;
        let sums = atomic_sums(cfg, seed, sc, m, order)?;
        let fs: Vec<&GridFunction> = sums.iter().map(|a| a.realized()).collect();
        let t = apply_frac_operator(&kernel, &fs)?.abs();
        let q = GridFunction::from_fn(grid, |x| target_exponent(ps_ref, gamma, n, x))?;
        let corner: Vec<f64> = (0..n).map(|a| grid.bounds().lo[a].abs().max(grid.bounds().hi[a].abs())).collect();
        let r_max = t.max_abs().max(euclid(&corner));
        let mut prev: Option<f64> = None;
        let mut decrease: f64 = 0.0;
        let mut lhs = 0.0;
        for j in (0..truncations).rev() {
            let r = r_max * 2f64.powi(-(j as i32));
            let mut values = Vec::with_capacity(grid.len());
            for (i, v) in t.values().iter().enumerate() {
                let x = grid.center(i);
                values.push(if euclid(&x[..n]) < r { v.min(r) } else { 0.0 });
            }
            lhs = luxemburg_norm_sampled(&GridFunction::from_values(grid, values)?, &q)?;
            if let Some(p) = prev {
                if p > 0.0 {
                    decrease = decrease.max((p - lhs) / p);
                }
            }
            prev = Some(lhs);
        }
        let phi = phi.dilated(sc.s)?;
        let mut rhs = 1.0;
        for (f, p) in fs.iter().zip(ps_ref) {
            rhs *= luxemburg_norm(&grand_maximal(f, &phi)?, p)?;
        }
        let mut out = Outcome::new(lhs, rhs).note("truncation_decrease", decrease);
        // far field: every f_i has zero mean, so T(x) is an m-fold mixed difference
        // of K and |T(x)| <= |a (a-1) .. (a-m+1)| (m (|x| - r))^(a-m) prod int |f_i| |y|
        // with a = gamma - mn
        let a = gamma - (m * n) as f64;
        let falling: f64 = (0..m).map(|j| (a - j as f64).abs()).product();
        let first: f64 = fs
            .iter()
            .map(|f| f.values().iter().enumerate().map(|(i, v)| v.abs() * euclid(&grid.center(i)[..n])).sum::<f64>() * grid.cell_volume())
            .product();
        let c = falling * (m as f64).powf(a - m as f64) * first;
        let (b, r) = (half_width * sc.s, window_reach * sc.s);
        if let Some(mass) = exterior_tail(n, c, m as f64 - a, q_floor, 1.0, 0.0, b, r) {
            let sup = c * (b - r).powf(a - m as f64);
            let tail = mass.powf(1.0 / q_floor).max(sup);
            out = out.note("tail_fraction", tail / lhs);
        }
        Ok(out)
    })?;
    let decrease = report.diagnostics["truncation_decrease"].as_f64().unwrap_or(f64::NAN);
    report.checks.push(Check::at_most("F_R nondecreasing in R (relative slack)", decrease, TRUNCATION_SLACK));
    report.diagnostic("truncations", truncations);
    report.diagnostic("exterior_q_floor", q_floor);
    report.diagnostic("N", order);
    report.diagnostic("log_holder", holder.iter().map(|h| (h.c0, h.c_inf, h.p_inf)).collect::<Vec<_>>());
    Ok(report)
}
