//! Variable exponents: modulars, Luxemburg norms, log-Hölder estimates, the
//! exponent system used for off-diagonal extrapolation, and the Rubio de
//! Francia iteration built on the discrete maximal operator.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{BoxDomain, Cube, DyadicFamily, Grid, GridFunction, Point};
use crate::maximal::{hl_maximal, MaximalConfig};
use crate::weights::{rh_constant, Weight, WeightConstantReport};

/// Samples of an exponent on a grid, stored with their grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampledParams", into = "SampledParams")]
pub struct SampledExponent {
    function: GridFunction,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampledParams {
    #[serde(rename = "box")]
    bounds: BoxDomain,
    h: f64,
    values: Vec<f64>,
}

impl TryFrom<SampledParams> for SampledExponent {
    type Error = Error;

    fn try_from(p: SampledParams) -> Result<Self> {
        let grid = Grid::new(p.bounds, p.h)?;
        if p.values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!("expected {} values, got {}", grid.len(), p.values.len())));
        }
        Ok(SampledExponent {
            function: GridFunction::from_values(&grid, p.values)?,
        })
    }
}

impl From<SampledExponent> for SampledParams {
    fn from(s: SampledExponent) -> Self {
        SampledParams {
            bounds: s.function.grid().bounds().clone(),
            h: s.function.grid().h(),
            values: s.function.into_values(),
        }
    }
}

/// Exponent `p(x)`; serializes as `{kind, params}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum ExponentFunction {
    Constant { value: f64 },
    /// `base + amplitude / ln(e + |x|)`.
    LogDecay { base: f64, amplitude: f64 },
    /// `base + slope * clamp(x_1, lo, hi)`.
    ClippedLinear { base: f64, slope: f64, lo: f64, hi: f64 },
    /// `left` for `x_1 < at`, `right` otherwise.
    Step { left: f64, right: f64, at: f64 },
    /// Piecewise constant on grid cells; points outside use the nearest cell.
    Sampled(SampledExponent),
}

impl ExponentFunction {
    pub fn constant(value: f64) -> Result<Self> {
        ExponentFunction::Constant { value }.validated()
    }

    pub fn log_decay(base: f64, amplitude: f64) -> Result<Self> {
        ExponentFunction::LogDecay { base, amplitude }.validated()
    }

    pub fn sampled(f: GridFunction) -> Result<Self> {
        ExponentFunction::Sampled(SampledExponent { function: f }).validated()
    }

    pub fn validated(self) -> Result<Self> {
        if let ExponentFunction::ClippedLinear { lo, hi, .. } = self {
            if !(lo <= hi) {
                return Err(invalid("exponent", "clip range needs lo <= hi"));
            }
        }
        let (a, b) = (self.p_minus(), self.p_plus());
        if !(a > 0.0 && b.is_finite() && a <= b) {
            return Err(invalid("exponent", format!("need 0 < p- <= p+ < inf, got [{a}, {b}]")));
        }
        Ok(self)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            ExponentFunction::Constant { value } => *value,
            ExponentFunction::LogDecay { base, amplitude } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                base + amplitude / (std::f64::consts::E + r).ln()
            }
            ExponentFunction::ClippedLinear { base, slope, lo, hi } => base + slope * x[0].clamp(*lo, *hi),
            ExponentFunction::Step { left, right, at } => {
                if x[0] < *at {
                    *left
                } else {
                    *right
                }
            }
            ExponentFunction::Sampled(s) => {
                let g = s.function.grid();
                let b = g.bounds();
                let h = g.h();
                let y: Vec<f64> = (0..g.dim())
                    .map(|a| x[a].clamp(b.lo[a] + 0.5 * h, b.hi[a] - 0.5 * h))
                    .collect();
                g.cell_of(&y).map_or(f64::NAN, |i| s.function.values()[i])
            }
        }
    }

    /// Infimum over the whole space.
    pub fn p_minus(&self) -> f64 {
        match self {
            ExponentFunction::Constant { value } => *value,
            ExponentFunction::LogDecay { base, amplitude } => base + amplitude.min(0.0),
            ExponentFunction::ClippedLinear { base, slope, lo, hi } => (base + slope * lo).min(base + slope * hi),
            ExponentFunction::Step { left, right, .. } => left.min(*right),
            ExponentFunction::Sampled(s) => s.function.min_value(),
        }
    }

    /// Supremum over the whole space.
    pub fn p_plus(&self) -> f64 {
        match self {
            ExponentFunction::Constant { value } => *value,
            ExponentFunction::LogDecay { base, amplitude } => base + amplitude.max(0.0),
            ExponentFunction::ClippedLinear { base, slope, lo, hi } => (base + slope * lo).max(base + slope * hi),
            ExponentFunction::Step { left, right, .. } => left.max(*right),
            ExponentFunction::Sampled(s) => s.function.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Values at the cell centers of `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<GridFunction> {
        if let ExponentFunction::Sampled(s) = self {
            if s.function.grid() == grid {
                return Ok(s.function.clone());
            }
        }
        GridFunction::from_fn(grid, |x| self.evaluate(x))
    }
}

/// Pointwise conjugate exponent `p / (p - 1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

fn modular_sampled(f: &GridFunction, p: &GridFunction, lambda: f64) -> f64 {
    let s: f64 = f
        .values()
        .iter()
        .zip(p.values())
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, e)| (v.abs() / lambda).powf(*e))
        .sum();
    s * f.grid().cell_volume()
}

/// `integral |f(x)|^p(x) dx`.
pub fn modular(f: &GridFunction, p: &ExponentFunction) -> Result<f64> {
    Ok(modular_sampled(f, &p.sample(f.grid())?, 1.0))
}

/// Luxemburg norm from exponent samples on the grid of `f`.
pub fn luxemburg_norm_sampled(f: &GridFunction, p: &GridFunction) -> Result<f64> {
    f.grid().same_as(p.grid())?;
    if f.is_zero() {
        return Ok(0.0);
    }
    let rho = |l: f64| modular_sampled(f, p, l);
    let (mut lo, mut hi) = (1.0, 1.0);
    if rho(1.0) > 1.0 {
        while rho(hi) > 1.0 {
            lo = hi;
            hi *= 2.0;
        }
    } else {
        while rho(lo) <= 1.0 {
            hi = lo;
            lo *= 0.5;
        }
    }
    while (hi - lo) > 1e-8 * hi {
        let mid = 0.5 * (lo + hi);
        if rho(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `inf { lambda > 0 : rho(f / lambda) <= 1 }`, bisected to relative width 1e-8.
pub fn luxemburg_norm(f: &GridFunction, p: &ExponentFunction) -> Result<f64> {
    luxemburg_norm_sampled(f, &p.sample(f.grid())?)
}

/// Sampling plan for [`log_holder_estimate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHolderPlan {
    pub dim: usize,
    /// Anchors cover `[-radius, radius]^n`.
    pub radius: f64,
    /// Anchor spacing `2^-anchor_level` (dyadic, so the origin is an anchor).
    pub anchor_level: i32,
    /// Pair separations `2^-k` for `k` in `2..=finest_level`.
    pub finest_level: i32,
    /// Far points at `|x| = 2^j`, `j` in this range, fit `p_inf`.
    pub far_levels: (i32, i32),
}

impl Default for LogHolderPlan {
    fn default() -> Self {
        LogHolderPlan {
            dim: 1,
            radius: 4.0,
            anchor_level: 4,
            finest_level: 40,
            far_levels: (3, 40),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHolderReport {
    pub c0: f64,
    pub c_inf: f64,
    pub p_inf: f64,
    /// Running maximum of the local quotient as pairs refine.
    pub c0_by_level: Vec<(i32, f64)>,
    /// False when the local quotient keeps growing under refinement.
    pub c0_stable: bool,
}

fn axis_points(dim: usize, r: f64) -> Vec<Point> {
    let mut out = vec![[r, 0.0], [-r, 0.0]];
    if dim == 2 {
        out.push([0.0, r]);
        out.push([r / 2f64.sqrt(), -r / 2f64.sqrt()]);
    }
    out
}

/// Empirical `C_0`, `C_inf` and `p_inf`. `C_0` is stable when its running
/// maximum at the finest level is within 10% of the value 8 levels coarser.
pub fn log_holder_estimate(p: &ExponentFunction, plan: &LogHolderPlan) -> Result<LogHolderReport> {
    if !(plan.radius > 0.0) || plan.finest_level < 10 || plan.far_levels.0 > plan.far_levels.1 {
        return Err(invalid("plan", "need radius > 0, finest_level >= 10 and a nonempty far range"));
    }
    let dim = plan.dim;
    let step = 2f64.powi(-plan.anchor_level);
    let per_axis = (plan.radius / step).floor() as i64;
    let mut anchors: Vec<Point> = Vec::new();
    for i in -per_axis..=per_axis {
        if dim == 1 {
            anchors.push([i as f64 * step, 0.0]);
        } else {
            for j in -per_axis..=per_axis {
                anchors.push([i as f64 * step, j as f64 * step]);
            }
        }
    }
    let at = |x: &Point| p.evaluate(&x[..dim]);
    let mut running: f64 = 0.0;
    let mut c0_by_level = Vec::new();
    for k in 2..=plan.finest_level {
        let d = 2f64.powi(-k);
        let weight = k as f64 * std::f64::consts::LN_2;
        for x in &anchors {
            for axis in 0..dim {
                // pairs centred on the anchor, so jumps at anchors are straddled
                let mut a = *x;
                let mut b = *x;
                a[axis] -= 0.5 * d;
                b[axis] += 0.5 * d;
                running = running.max((at(&a) - at(&b)).abs() * weight);
            }
        }
        c0_by_level.push((k, running));
    }
    let finest = c0_by_level.last().map_or(0.0, |v| v.1);
    let coarser = c0_by_level[c0_by_level.len() - 9].1;
    let c0_stable = finest <= 1.1 * coarser || finest == 0.0;

    // p(x) ~ p_inf + c / ln(e + |x|) along far rays
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for j in plan.far_levels.0..=plan.far_levels.1 {
        for x in axis_points(dim, 2f64.powi(j)) {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            ts.push(1.0 / (std::f64::consts::E + r).ln());
            vs.push(at(&x));
        }
    }
    let nt = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / nt;
    let vm = vs.iter().sum::<f64>() / nt;
    let cov: f64 = ts.iter().zip(&vs).map(|(t, v)| (t - tm) * (v - vm)).sum();
    let var: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    let slope = if var > 0.0 { cov / var } else { 0.0 };
    let p_inf = vm - slope * tm;
    let mut c_inf: f64 = 0.0;
    for (x, v) in anchors
        .iter()
        .map(|x| (*x, at(x)))
        .chain(ts.iter().zip(&vs).map(|(t, v)| ([(1.0 / t).exp() - std::f64::consts::E, 0.0], *v)))
    {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        c_inf = c_inf.max((v - p_inf).abs() * (std::f64::consts::E + r).ln());
    }
    Ok(LogHolderReport {
        c0: finest,
        c_inf,
        p_inf,
        c0_by_level,
        c0_stable,
    })
}

/// Exponents `p_i(.)`, constants `p_i`, and everything derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationExponentSystem {
    pub n: usize,
    pub gamma: f64,
    pub exponents: Vec<ExponentFunction>,
    pub p: Vec<f64>,
    pub gammas: Vec<f64>,
    pub q_i: Vec<f64>,
    pub q: f64,
}

/// Chooses `gamma_i = gamma s_i / sum s_j` with `s_i = n / [p_i]_+` and
/// derives `q_i`, `q`; fails unless every condition holds strictly.
pub fn derive_system(exponents: &[ExponentFunction], p: &[f64], gamma: f64, n: usize) -> Result<ExtrapolationExponentSystem> {
    if exponents.is_empty() || exponents.len() != p.len() {
        return Err(invalid("p", "need one constant exponent per variable exponent"));
    }
    if !(gamma > 0.0) {
        return Err(invalid("gamma", "must be positive"));
    }
    let nf = n as f64;
    for (i, (e, pi)) in exponents.iter().zip(p).enumerate() {
        if !(*pi >= 1.0 && *pi < e.p_minus()) {
            return Err(Error::ExponentCondition(format!(
                "need 1 <= p_{i} < [p_{i}(.)]- = {}, got {pi}",
                e.p_minus()
            )));
        }
    }
    let inv_plus: f64 = exponents.iter().map(|e| 1.0 / e.p_plus()).sum();
    if !(inv_plus > gamma / nf) {
        return Err(Error::ExponentCondition(format!(
            "sum 1/[p_i(.)]+ = {inv_plus} must exceed gamma/n = {}",
            gamma / nf
        )));
    }
    let s: Vec<f64> = exponents.iter().map(|e| nf / e.p_plus()).collect();
    let total: f64 = s.iter().sum();
    let gammas: Vec<f64> = s.iter().map(|si| gamma * si / total).collect();
    for (i, (e, gi)) in exponents.iter().zip(&gammas).enumerate() {
        if !(e.p_plus() < nf / gi) {
            return Err(Error::ExponentCondition(format!("no admissible split: [p_{i}]+ >= n/gamma_{i}")));
        }
    }
    let q_i: Vec<f64> = p.iter().zip(&gammas).map(|(pi, gi)| 1.0 / (1.0 / pi - gi / nf)).collect();
    let q = 1.0 / q_i.iter().map(|v| 1.0 / v).sum::<f64>();
    Ok(ExtrapolationExponentSystem {
        n,
        gamma,
        exponents: exponents.to_vec(),
        p: p.to_vec(),
        gammas,
        q_i,
        q,
    })
}

/// Pointwise values of the derived exponents at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointExponents {
    pub q_var: f64,
    pub q_bar: f64,
    pub p_bar: Vec<f64>,
    pub sigma: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ExtrapolationExponentSystem {
    pub fn m(&self) -> usize {
        self.p.len()
    }

    /// `1/q(x) = sum 1/p_i(x) - gamma/n`.
    pub fn q_at(&self, x: &[f64]) -> f64 {
        let s: f64 = self.exponents.iter().map(|e| 1.0 / e.evaluate(x)).sum();
        1.0 / (s - self.gamma / self.n as f64)
    }

    pub fn at(&self, x: &[f64]) -> PointExponents {
        let q_var = self.q_at(x);
        let q_bar = q_var / self.q;
        let p_bar: Vec<f64> = self.exponents.iter().zip(&self.p).map(|(e, pi)| e.evaluate(x) / pi).collect();
        let sigma = p_bar
            .iter()
            .zip(&self.p)
            .zip(&self.q_i)
            .map(|((pb, pi), qi)| pi / qi * conjugate(*pb))
            .collect();
        let theta = p_bar
            .iter()
            .zip(&self.p)
            .map(|(pb, pi)| self.q * conjugate(q_bar) / (pi * conjugate(*pb)))
            .collect();
        PointExponents {
            q_var,
            q_bar,
            p_bar,
            sigma,
            theta,
        }
    }

    /// `sigma_i` attains its infimum where `p_i(.)` is largest.
    pub fn sigma_minus(&self) -> Vec<f64> {
        self.exponents
            .iter()
            .zip(&self.p)
            .zip(&self.q_i)
            .map(|((e, pi), qi)| pi / qi * conjugate(e.p_plus() / pi))
            .collect()
    }

    pub fn sigma_exponent(&self, i: usize, grid: &Grid) -> Result<ExponentFunction> {
        ExponentFunction::sampled(GridFunction::from_fn(grid, |x| self.at(x).sigma[i])?)
    }

    pub fn q_bar_exponent(&self, grid: &Grid) -> Result<ExponentFunction> {
        ExponentFunction::sampled(GridFunction::from_fn(grid, |x| self.at(x).q_bar)?)
    }

    /// Residuals of every identity and inequality, plus all derived
    /// exponents sampled on `grid`.
    pub fn certificate(&self, grid: &Grid) -> Result<SystemCertificate> {
        let pts: Vec<PointExponents> = (0..grid.len()).map(|i| self.at(&grid.center(i)[..grid.dim()])).collect();
        let mut theta_residual: f64 = 0.0;
        let mut s_defn_residual: f64 = 0.0;
        let mut dual_residual: f64 = 0.0;
        let mut q_bar_min = f64::INFINITY;
        for (i, pe) in pts.iter().enumerate() {
            let x = grid.center(i);
            theta_residual = theta_residual.max((pe.theta.iter().sum::<f64>() - 1.0).abs());
            let rhs: f64 = self.exponents.iter().map(|e| 1.0 / e.evaluate(&x[..grid.dim()])).sum::<f64>()
                - self.gamma / self.n as f64;
            s_defn_residual = s_defn_residual.max((1.0 / (self.q * pe.q_bar) - rhs).abs());
            for pb in &pe.p_bar {
                dual_residual = dual_residual.max((1.0 / pb + 1.0 / conjugate(*pb) - 1.0).abs());
            }
            q_bar_min = q_bar_min.min(pe.q_bar);
        }
        let sigma_minus = self.sigma_minus();
        let p_plus: Vec<f64> = self.exponents.iter().map(|e| e.p_plus()).collect();
        let n_over_gamma: Vec<f64> = self.gammas.iter().map(|g| self.n as f64 / g).collect();
        let sampled_sigma_min: Vec<f64> = (0..self.m())
            .map(|k| pts.iter().map(|pe| pe.sigma[k]).fold(f64::INFINITY, f64::min))
            .collect();
        let admissible = sigma_minus.iter().all(|s| *s > 1.0)
            && p_plus.iter().zip(&n_over_gamma).all(|(a, b)| a < b)
            && q_bar_min > 1.0
            && theta_residual <= 1e-12;
        let column = |f: &dyn Fn(&PointExponents) -> f64| pts.iter().map(f).collect::<Vec<f64>>();
        Ok(SystemCertificate {
            gammas: self.gammas.clone(),
            gamma_sum_residual: (self.gammas.iter().sum::<f64>() - self.gamma).abs(),
            q_i: self.q_i.clone(),
            q: self.q,
            p_plus,
            n_over_gamma,
            sigma_minus,
            sampled_sigma_min,
            q_bar_min,
            theta_residual,
            s_defn_residual,
            dual_residual,
            admissible,
            grid: GridSummary {
                bounds: grid.bounds().clone(),
                h: grid.h(),
            },
            q_var: column(&|pe| pe.q_var),
            q_bar: column(&|pe| pe.q_bar),
            p_bar: (0..self.m()).map(|k| column(&|pe| pe.p_bar[k])).collect(),
            sigma: (0..self.m()).map(|k| column(&|pe| pe.sigma[k])).collect(),
            theta: (0..self.m()).map(|k| column(&|pe| pe.theta[k])).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    #[serde(rename = "box")]
    pub bounds: BoxDomain,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemCertificate {
    pub gammas: Vec<f64>,
    pub gamma_sum_residual: f64,
    pub q_i: Vec<f64>,
    pub q: f64,
    pub p_plus: Vec<f64>,
    pub n_over_gamma: Vec<f64>,
    pub sigma_minus: Vec<f64>,
    pub sampled_sigma_min: Vec<f64>,
    pub q_bar_min: f64,
    pub theta_residual: f64,
    pub s_defn_residual: f64,
    pub dual_residual: f64,
    pub admissible: bool,
    pub grid: GridSummary,
    pub q_var: Vec<f64>,
    pub q_bar: Vec<f64>,
    pub p_bar: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

/// `sum_{j=0}^{K} M^j h / (2A)^j`.
pub fn rubio_iterate(h: &GridFunction, a: f64, k: usize, cfg: &MaximalConfig) -> Result<GridFunction> {
    Ok(rubio_with_tail(h, a, k, cfg)?.0)
}

/// The iterate together with `M^{K+1} h / (2A)^K`.
fn rubio_with_tail(h: &GridFunction, a: f64, k: usize, cfg: &MaximalConfig) -> Result<(GridFunction, GridFunction)> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid("A", format!("must be positive, got {a}")));
    }
    if h.min_value() < 0.0 {
        return Err(invalid("h", "must be nonnegative"));
    }
    let mut acc = h.clone();
    let mut term = h.clone();
    for j in 1..=k {
        term = hl_maximal(&term, cfg)?;
        let c = (2.0 * a).powi(-(j as i32));
        acc = acc.zip_with(&term, |s, t| s + c * t)?;
    }
    let tail = hl_maximal(&term, cfg)?.scale((2.0 * a).powi(-(k as i32)));
    Ok((acc, tail))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RubioReport {
    pub a: f64,
    pub k: usize,
    /// `min (R h - h)`; property (1) holds when nonnegative.
    pub domination_margin: f64,
    /// `||R h|| / ||h||` in the variable exponent; property (2) needs `<= 2`.
    pub norm_ratio: f64,
    /// `max_Q avg_Q(R h) / min_Q(R h)` over ladder-aligned cubes.
    pub a1_estimate: f64,
    pub a1_bound: f64,
    /// `max M^{K+1} h / ((2A)^K 2A R h)`, the relative truncation slack.
    pub tail_tol: f64,
    pub rh: WeightConstantReport,
    pub property1: bool,
    pub property2: bool,
    pub property3: bool,
    pub property4: bool,
}

/// Checks the four properties of the truncated iteration. Cubes for the
/// `A_1` estimate are the dyadic family (with one-third shifts, snapped to the
/// grid) restricted to sides on the maximal ladder.
pub fn rubio_properties_check(
    h: &GridFunction,
    sigma: &ExponentFunction,
    a: f64,
    k: usize,
    cfg: &MaximalConfig,
    family: &DyadicFamily,
    p_over_q: f64,
    rh_s: f64,
) -> Result<RubioReport> {
    let (r, tail) = rubio_with_tail(h, a, k, cfg)?;
    let grid = h.grid();
    let domination_margin = r
        .values()
        .iter()
        .zip(h.values())
        .map(|(x, y)| x - y)
        .fold(f64::INFINITY, f64::min);
    let nh = luxemburg_norm(h, sigma)?;
    let norm_ratio = if nh > 0.0 { luxemburg_norm(&r, sigma)? / nh } else { 1.0 };
    let tail_tol = r
        .values()
        .iter()
        .zip(tail.values())
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, t)| t / (2.0 * a * x))
        .fold(0.0, f64::max);
    let ladder = cfg.side_cells(grid)?;
    let gh = grid.h();
    let mut a1_estimate: f64 = 0.0;
    for (_, q) in family.with_third_shifts(Some(gh)) {
        let cells = (q.side() / gh).round() as usize;
        if !ladder.contains(&cells) || !grid.bounds().contains_cube(&q) {
            continue;
        }
        if let Some(v) = a1_ratio(&r, &q) {
            a1_estimate = a1_estimate.max(v);
        }
    }
    let a1_bound = 2.0 * a;
    let positive = r.min_value() > 0.0;
    let rh = if positive {
        rh_constant(&Weight::sampled(r.map(|v| v.powf(p_over_q)))?, rh_s, family)?
    } else {
        return Err(invalid("h", "R h must be positive on the grid for the reverse Hölder check"));
    };
    Ok(RubioReport {
        a,
        k,
        domination_margin,
        norm_ratio,
        a1_estimate,
        a1_bound,
        tail_tol,
        property1: domination_margin >= 0.0,
        property2: norm_ratio <= 2.0,
        property3: a1_estimate <= a1_bound * (1.0 + tail_tol) * (1.0 + 1e-12),
        property4: rh.value.is_finite() && rh.stable,
        rh,
    })
}

fn a1_ratio(f: &GridFunction, q: &Cube) -> Option<f64> {
    let grid = f.grid();
    let [rx, ry] = grid.cube_ranges(q);
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut count = 0usize;
    for j in ry {
        for i in rx.clone() {
            let v = f.values()[grid.index(i, j)];
            sum += v;
            min = min.min(v);
            count += 1;
        }
    }
    if count == 0 || !(min > 0.0) {
        return None;
    }
    Some(sum / count as f64 / min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpNormEstimate {
    /// Safety-scaled estimate `1.5 * max_ratio`.
    pub a: f64,
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

pub const OPNORM_SAFETY: f64 = 1.5;

/// `1.5 * max_f ||M f|| / ||f||` over the probes, in `L^sigma(.)`.
pub fn maximal_opnorm_estimate(sigma: &ExponentFunction, probes: &[GridFunction], cfg: &MaximalConfig) -> Result<OpNormEstimate> {
    if probes.is_empty() {
        return Err(Error::EmptyProbes);
    }
    if !(sigma.p_minus() > 1.0) {
        return Err(Error::ExponentCondition(format!("need [sigma]- > 1, got {}", sigma.p_minus())));
    }
    let mut ratios = Vec::with_capacity(probes.len());
    for f in probes {
        let s = sigma.sample(f.grid())?;
        let nf = luxemburg_norm_sampled(f, &s)?;
        if nf == 0.0 {
            return Err(Error::ZeroFunction);
        }
        ratios.push(luxemburg_norm_sampled(&hl_maximal(f, cfg)?, &s)? / nf);
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(OpNormEstimate {
        a: OPNORM_SAFETY * max_ratio,
        max_ratio,
        ratios,
    })
}

/// Probes `h, M h, ..., M^K h`; with `A = 1.5 * max ratio` over them the
/// truncated iterate satisfies `||R h|| <= 1.5 ||h||`.
pub fn iterate_probes(h: &GridFunction, k: usize, cfg: &MaximalConfig) -> Result<Vec<GridFunction>> {
    let mut out = vec![h.clone()];
    for _ in 0..k {
        let next = hl_maximal(out.last().expect("nonempty"), cfg)?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualWitness {
    pub h: GridFunction,
    /// `||F||` in `q_bar(.)`.
    pub f_norm: f64,
    /// `||h||` in `q_bar'(.)`.
    pub h_norm: f64,
    /// `integral F h`.
    pub pairing: f64,
}

/// `h = c F^{q_bar - 1}` with `||h||_{q_bar'} = 1`; `c` starts at
/// `||F||^{1 - q_bar(x)}` (which makes the dual modular exactly 1) and is
/// corrected by the bisected norm.
pub fn dual_witness(f: &GridFunction, q_bar: &ExponentFunction) -> Result<DualWitness> {
    if f.is_zero() {
        return Err(Error::ZeroFunction);
    }
    if f.min_value() < 0.0 {
        return Err(invalid("F", "must be nonnegative"));
    }
    if !(q_bar.p_minus() > 1.0) {
        return Err(Error::ExponentCondition(format!("need [q_bar]- > 1, got {}", q_bar.p_minus())));
    }
    let qs = q_bar.sample(f.grid())?;
    let f_norm = luxemburg_norm_sampled(f, &qs)?;
    let raw = f.zip_with(&qs, |v, q| if v > 0.0 { (v / f_norm).powf(q - 1.0) } else { 0.0 })?;
    let dual = qs.map(conjugate);
    let c = luxemburg_norm_sampled(&raw, &dual)?;
    let h = raw.scale(1.0 / c);
    let h_norm = luxemburg_norm_sampled(&h, &dual)?;
    let pairing = f.zip_with(&h, |a, b| a * b)?.integrate();
    Ok(DualWitness {
        h,
        f_norm,
        h_norm,
        pairing,
    })
}
