//! Multilinear fractional kernels, the discretized operator, kernel-condition
//! samplers, Taylor polynomials in one slot, and pointwise bound checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{check_dim, distance, to_point, BoxDomain, Cube, Grid, GridFunction, Point};
use crate::jet::{factorial, multi_indices, Jet};

/// Largest `m * n` accepted by [`apply_frac_operator`].
pub const COST_CAP: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `(sum |x - y_i|)^(gamma - mn)`.
    KenigStein,
    /// Kenig–Stein times `1 + amplitude * sin(frequency * x_1)`.
    Perturbed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub frequency: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            scale: 1.0,
            amplitude: 0.0,
            frequency: 1.0,
        }
    }
}

/// A fractional kernel; serializes as `{kind, m, n, gamma, N, params}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub m: usize,
    pub n: usize,
    pub gamma: f64,
    #[serde(rename = "N")]
    pub order: usize,
    #[serde(default)]
    pub params: KernelParams,
}

impl KernelSpec {
    pub fn kenig_stein(m: usize, n: usize, gamma: f64, order: usize) -> Result<Self> {
        let k = KernelSpec {
            kind: KernelKind::KenigStein,
            m,
            n,
            gamma,
            order,
            params: KernelParams::default(),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn perturbed(m: usize, n: usize, gamma: f64, order: usize, amplitude: f64, frequency: f64) -> Result<Self> {
        let k = KernelSpec {
            kind: KernelKind::Perturbed,
            params: KernelParams {
                scale: 1.0,
                amplitude,
                frequency,
            },
            ..KernelSpec::kenig_stein(m, n, gamma, order)?
        };
        k.validate()?;
        Ok(k)
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.params.scale *= c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.n)?;
        if self.m == 0 {
            return Err(invalid("m", "need at least one input"));
        }
        let mn = (self.m * self.n) as f64;
        if !(self.gamma > 0.0 && self.gamma < mn) {
            return Err(invalid("gamma", format!("need 0 < gamma < mn = {mn}, got {}", self.gamma)));
        }
        if self.kind == KernelKind::Perturbed && self.params.amplitude.abs() >= 1.0 {
            return Err(invalid("amplitude", "perturbation must keep the kernel positive"));
        }
        Ok(())
    }

    /// `gamma - mn`.
    pub fn exponent(&self) -> f64 {
        self.gamma - (self.m * self.n) as f64
    }

    /// Factor depending on `x` alone.
    pub fn x_factor(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        match self.kind {
            KernelKind::KenigStein => p.scale,
            KernelKind::Perturbed => p.scale * (1.0 + p.amplitude * (p.frequency * x[0]).sin()),
        }
    }

    /// Bound `C` in `|K| <= C (sum |x - y_i|)^(gamma - mn)`.
    pub fn size_const(&self) -> f64 {
        match self.kind {
            KernelKind::KenigStein => self.params.scale.abs(),
            KernelKind::Perturbed => self.params.scale.abs() * (1.0 + self.params.amplitude.abs()),
        }
    }

    /// `K(x, y_1, ..., y_m)`; infinite when every `y_i` equals `x`.
    pub fn evaluate(&self, x: &[f64], ys: &[Point]) -> f64 {
        let xp = to_point(x);
        let s: f64 = ys.iter().map(|y| distance(&xp, y, self.n)).sum();
        self.x_factor(x) * s.powf(self.exponent())
    }

    /// Jet of `y -> K(x, ..., y, ...)` in slot `slot` at `ys[slot]`.
    pub fn slot_jet(&self, x: &[f64], ys: &[Point], slot: usize, order: usize) -> Jet {
        let xp = to_point(x);
        let rest: f64 = ys
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != slot)
            .map(|(_, y)| distance(&xp, y, self.n))
            .sum();
        let mut sq = Jet::constant(self.n, order, 0.0);
        for a in 0..self.n {
            let d = Jet::variable(self.n, order, a, ys[slot][a]).add_const(-xp[a]);
            sq = sq.add(&d.mul(&d));
        }
        sq.sqrt()
            .add_const(rest)
            .powf(self.exponent())
            .scale(self.x_factor(x))
    }
}

fn check_inputs(k: &KernelSpec, fs: &[&GridFunction]) -> Result<Grid> {
    k.validate()?;
    if k.m * k.n > COST_CAP {
        return Err(Error::CostCap(k.m * k.n));
    }
    if fs.len() != k.m {
        return Err(invalid("inputs", format!("kernel takes {} functions, got {}", k.m, fs.len())));
    }
    let grid = fs[0].grid().clone();
    for f in &fs[1..] {
        grid.same_as(f.grid())?;
    }
    if grid.dim() != k.n {
        return Err(Error::GridMismatch);
    }
    Ok(grid)
}

/// `h^m` times the kernel sum over the subcells of a fully singular cell
/// tuple, center subcell dropped (1D, kernel without the `x` factor).
fn singular_weight_1d(m: usize, h: f64, expo: f64) -> f64 {
    let third = h / 3.0;
    let mut total = 0.0;
    let count = 3usize.pow(m as u32);
    for code in 0..count {
        let mut c = code;
        let mut s = 0.0;
        for _ in 0..m {
            s += if c % 3 == 1 { 0.0 } else { third };
            c /= 3;
        }
        if s > 0.0 {
            total += s.powf(expo);
        }
    }
    total * third.powi(m as i32)
}

fn support_range(f: &GridFunction) -> Option<(usize, usize)> {
    let v = f.values();
    let a = v.iter().position(|x| *x != 0.0)?;
    let b = v.iter().rposition(|x| *x != 0.0)?;
    Some((a, b))
}

/// Values of `f` grouped by distance (in cells) from cell `i`; returns the
/// smallest distance and the dense histogram starting there.
fn distance_histogram(v: &[f64], (a, b): (usize, usize), i: usize) -> (usize, Vec<f64>) {
    if i < a {
        (a - i, v[a..=b].to_vec())
    } else if i > b {
        (i - b, (a..=b).rev().map(|j| v[j]).collect())
    } else {
        let reach = (i - a).max(b - i);
        let mut hist = vec![0.0; reach + 1];
        for (d, slot) in hist.iter_mut().enumerate() {
            if i + d <= b {
                *slot += v[i + d];
            }
            if d > 0 && i >= a + d {
                *slot += v[i - d];
            }
        }
        (0, hist)
    }
}

fn apply_1d(k: &KernelSpec, fs: &[&GridFunction], grid: &Grid) -> Vec<f64> {
    let m = k.m;
    let h = grid.h();
    let g = grid.len();
    let expo = k.exponent();
    let ranges: Vec<(usize, usize)> = match fs.iter().map(|f| support_range(f)).collect::<Option<Vec<_>>>() {
        Some(r) => r,
        None => return vec![0.0; g],
    };
    let kappa: Vec<f64> = (0..=m * g)
        .map(|s| if s == 0 { 0.0 } else { (s as f64 * h).powf(expo) })
        .collect();
    let w_sing = singular_weight_1d(m, h, expo);
    let hm = h.powi(m as i32);
    (0..g)
        .into_par_iter()
        .map(|i| {
            let hists: Vec<(usize, Vec<f64>)> = fs
                .iter()
                .zip(&ranges)
                .map(|(f, r)| distance_histogram(f.values(), *r, i))
                .collect();
            // fold all but the last slot into one histogram of summed distances
            let (mut off, mut acc) = hists[0].clone();
            for (o2, h2) in hists.iter().take(m - 1).skip(1) {
                let mut next = vec![0.0; acc.len() + h2.len() - 1];
                for (p, a) in acc.iter().enumerate() {
                    if *a == 0.0 {
                        continue;
                    }
                    for (q, b) in h2.iter().enumerate() {
                        next[p + q] += a * b;
                    }
                }
                off += o2;
                acc = next;
            }
            let sum = if m == 1 {
                acc.iter().enumerate().map(|(p, a)| a * kappa[off + p]).sum::<f64>()
            } else {
                let (ol, last) = &hists[m - 1];
                let mut s = 0.0;
                for (p, a) in acc.iter().enumerate() {
                    if *a == 0.0 {
                        continue;
                    }
                    let base = &kappa[off + p + ol..off + p + ol + last.len()];
                    let dot: f64 = base.iter().zip(last).map(|(kv, lv)| kv * lv).sum();
                    s += a * dot;
                }
                s
            };
            let diag: f64 = fs.iter().map(|f| f.values()[i]).product();
            let x = grid.center(i);
            k.x_factor(&x[..1]) * (hm * sum + diag * w_sing)
        })
        .collect()
}

/// Non-zero samples of each input as `(cell center, value)`.
fn supports(fs: &[&GridFunction]) -> Vec<Vec<(Point, f64)>> {
    fs.iter()
        .map(|f| {
            f.support_indices()
                .into_iter()
                .map(|i| (f.grid().center(i), f.values()[i]))
                .collect()
        })
        .collect()
}

fn subcell_offsets(n: usize, h: f64) -> Vec<Point> {
    let t = h / 3.0;
    let mut out = Vec::new();
    let ry: &[f64] = if n == 2 { &[-1.0, 0.0, 1.0] } else { &[0.0] };
    for &oy in ry {
        for ox in [-1.0, 0.0, 1.0] {
            out.push([ox * t, oy * t]);
        }
    }
    out
}

/// Direct tuple sum at an arbitrary point `x`, with the singular-cell rule.
fn eval_tuples(k: &KernelSpec, sup: &[Vec<(Point, f64)>], h: f64, x: &[f64]) -> f64 {
    let n = k.n;
    let m = k.m;
    let xp = to_point(x);
    let expo = k.exponent();
    let cell = h.powi(n as i32);
    let sub = subcell_offsets(n, h);
    let sub_vol = (h / 3.0).powi(n as i32);
    let mut idx = vec![0usize; m];
    let mut total = 0.0;
    if sup.iter().any(|s| s.is_empty()) {
        return 0.0;
    }
    loop {
        let mut prod = 1.0;
        let mut s = 0.0;
        let mut dmax: f64 = 0.0;
        for (slot, &j) in idx.iter().enumerate() {
            let (y, v) = &sup[slot][j];
            prod *= v;
            let d = distance(&xp, y, n);
            s += d;
            dmax = dmax.max(d);
        }
        if dmax < 0.5 * h {
            // subdivide the tuple once, dropping still-singular subcenters
            let count = sub.len().pow(m as u32);
            let mut acc = 0.0;
            for code in 0..count {
                let mut c = code;
                let mut ss = 0.0;
                let mut dm: f64 = 0.0;
                for (slot, &j) in idx.iter().enumerate() {
                    let o = sub[c % sub.len()];
                    c /= sub.len();
                    let y = sup[slot][j].0;
                    let d = distance(&xp, &[y[0] + o[0], y[1] + o[1]], n);
                    ss += d;
                    dm = dm.max(d);
                }
                if dm >= h / 6.0 {
                    acc += ss.powf(expo);
                }
            }
            total += prod * acc * sub_vol.powi(m as i32);
        } else {
            total += prod * s.powf(expo) * cell.powi(m as i32);
        }
        // advance the odometer
        let mut slot = 0;
        loop {
            idx[slot] += 1;
            if idx[slot] < sup[slot].len() {
                break;
            }
            idx[slot] = 0;
            slot += 1;
            if slot == m {
                return total * k.x_factor(x);
            }
        }
    }
}

/// `T(f_1, ..., f_m)` at every cell center of the common grid.
pub fn apply_frac_operator(k: &KernelSpec, fs: &[&GridFunction]) -> Result<GridFunction> {
    let grid = check_inputs(k, fs)?;
    let values = if k.n == 1 {
        apply_1d(k, fs, &grid)
    } else {
        let sup = supports(fs);
        let h = grid.h();
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.center(i);
                eval_tuples(k, &sup, h, &x[..k.n])
            })
            .collect()
    };
    GridFunction::from_values(&grid, values)
}

/// `T(f_1, ..., f_m)(x)` at a single, arbitrary point.
pub fn eval_frac_at(k: &KernelSpec, fs: &[&GridFunction], x: &[f64]) -> Result<f64> {
    let grid = check_inputs(k, fs)?;
    if x.len() != k.n {
        return Err(Error::UnsupportedDimension(x.len()));
    }
    Ok(eval_tuples(k, &supports(fs), grid.h(), x))
}

/// Random off-diagonal configurations: `x` in `[-1, 1]^n`, each `y_i` at a
/// log-uniform distance in `[1e-3, 10]` from `x`.
pub fn sample_configurations(k: &KernelSpec, count: usize, seed: u64) -> Vec<(Point, Vec<Point>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut x = [0.0; 2];
            for c in x.iter_mut().take(k.n) {
                *c = rng.gen_range(-1.0..1.0);
            }
            let ys = (0..k.m)
                .map(|_| {
                    let r = 10f64.powf(rng.gen_range(-3.0..1.0));
                    let mut y = x;
                    if k.n == 1 {
                        y[0] += if rng.gen_bool(0.5) { r } else { -r };
                    } else {
                        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                        y[0] += r * th.cos();
                        y[1] += r * th.sin();
                    }
                    y
                })
                .collect();
            (x, ys)
        })
        .collect()
}

/// `max |K| (sum |x - y_i|)^(mn - gamma)` over random samples.
pub fn kernel_size_check(k: &KernelSpec, sample_count: usize, seed: u64) -> Result<f64> {
    k.validate()?;
    let mut best: f64 = 0.0;
    for (x, ys) in sample_configurations(k, sample_count, seed) {
        let s: f64 = ys.iter().map(|y| distance(&x, y, k.n)).sum();
        best = best.max(k.evaluate(&x[..k.n], &ys).abs() * s.powf(-k.exponent()));
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// Ratio for the requested order.
    pub max_ratio: f64,
    /// `(order, ratio)` for each checked order, ascending.
    pub per_order: Vec<(usize, f64)>,
}

/// Nested central difference `D^beta` in slot `slot` with step `step`.
fn central_difference(k: &KernelSpec, x: &Point, ys: &mut Vec<Point>, slot: usize, beta: [usize; 2], step: f64) -> f64 {
    let axis = if beta[0] > 0 {
        0
    } else if beta[1] > 0 {
        1
    } else {
        return k.evaluate(&x[..k.n], ys);
    };
    let mut lower = beta;
    lower[axis] -= 1;
    let orig = ys[slot][axis];
    ys[slot][axis] = orig + 0.5 * step;
    let plus = central_difference(k, x, ys, slot, lower, step);
    ys[slot][axis] = orig - 0.5 * step;
    let minus = central_difference(k, x, ys, slot, lower, step);
    ys[slot][axis] = orig;
    (plus - minus) / step
}

/// Estimates `sum_i sum_{|b| = N} |D^b_i K| (sum |x - y_i|)^(mn + N - gamma)`
/// by finite differences. The default step is `min_i |x - y_i| / 16`; an
/// explicit step whose stencil reaches the diagonal is rejected.
pub fn kernel_smoothness_check(
    k: &KernelSpec,
    order: usize,
    sample_count: usize,
    fd_step: Option<f64>,
    all_orders: bool,
    seed: u64,
) -> Result<SmoothnessReport> {
    k.validate()?;
    let orders: Vec<usize> = if all_orders { (0..=order).collect() } else { vec![order] };
    let mut per_order: Vec<(usize, f64)> = orders.iter().map(|&o| (o, 0.0)).collect();
    for (x, mut ys) in sample_configurations(k, sample_count, seed) {
        let dmin = ys.iter().map(|y| distance(&x, y, k.n)).fold(f64::INFINITY, f64::min);
        let s: f64 = ys.iter().map(|y| distance(&x, y, k.n)).sum();
        let step = fd_step.unwrap_or(dmin / 16.0);
        let reach = order as f64 * step / 2.0;
        if reach >= dmin {
            return Err(Error::TooNearDiagonal { distance: dmin, reach });
        }
        for (o, best) in per_order.iter_mut() {
            let lhs = if *o == 0 {
                k.evaluate(&x[..k.n], &ys).abs()
            } else {
                let betas: Vec<[usize; 2]> = multi_indices(k.n, *o)
                    .into_iter()
                    .filter(|b| b[0] + b[1] == *o)
                    .collect();
                let mut t = 0.0;
                for slot in 0..k.m {
                    for b in &betas {
                        t += central_difference(k, &x, &mut ys, slot, *b, step).abs();
                    }
                }
                t
            };
            *best = best.max(lhs * s.powf(*o as f64 - k.exponent()));
        }
    }
    let max_ratio = per_order.last().map_or(0.0, |p| p.1);
    Ok(SmoothnessReport { max_ratio, per_order })
}

/// Taylor polynomial of order `N` (degree `N - 1`) of `K` in one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorData {
    pub slot: usize,
    pub center: Vec<f64>,
    pub order: usize,
    pub x: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    /// `(b, D^b K / b!)` for `|b| < N`.
    pub coefficients: Vec<([usize; 2], f64)>,
}

impl TaylorData {
    /// `P_N(y)`.
    pub fn eval(&self, y: &[f64]) -> f64 {
        let off: Vec<f64> = y.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        self.coefficients
            .iter()
            .map(|(b, c)| {
                let mut t = c * off[0].powi(b[0] as i32);
                if off.len() == 2 {
                    t *= off[1].powi(b[1] as i32);
                }
                t
            })
            .sum()
    }

    /// `D^b K` at the base point.
    pub fn derivative(&self, b: [usize; 2]) -> f64 {
        self.coefficients
            .iter()
            .find(|(bb, _)| *bb == b)
            .map_or(0.0, |(_, c)| c * factorial(b[0]) * factorial(b[1]))
    }
}

/// Expands `y -> K(x, y_1, .., y, .., y_m)` around `c` in slot `slot`;
/// `ys[slot]` is ignored.
pub fn taylor_polynomial(k: &KernelSpec, slot: usize, c: &[f64], order: usize, x: &[f64], ys: &[Point]) -> Result<TaylorData> {
    k.validate()?;
    if order == 0 {
        return Err(invalid("N", "Taylor order must be at least 1"));
    }
    if slot >= k.m || ys.len() != k.m || c.len() != k.n || x.len() != k.n {
        return Err(invalid("slot", "slot, points and kernel shape disagree"));
    }
    let mut base = ys.to_vec();
    base[slot] = to_point(c);
    let jet = k.slot_jet(x, &base, slot, order - 1);
    let coefficients = jet
        .indices()
        .iter()
        .map(|b| (*b, jet.coefficient(*b)))
        .collect();
    Ok(TaylorData {
        slot,
        center: c.to_vec(),
        order,
        x: x.to_vec(),
        ys: base.iter().map(|p| p[..k.n].to_vec()).collect(),
        coefficients,
    })
}

/// `max |K - P_N| / (l(Q)^N / S^(mn + N - gamma))` over `samples` in `q`,
/// where `S` is the distance sum with the expanded slot at the cube center.
pub fn taylor_remainder_check(k: &KernelSpec, data: &TaylorData, q: &Cube, samples: &[Point]) -> Result<f64> {
    if q.star().contains_closed(&data.x) {
        return Err(Error::InsideStar);
    }
    let xp = to_point(&data.x);
    let ys: Vec<Point> = data.ys.iter().map(|y| to_point(y)).collect();
    let s: f64 = ys.iter().map(|y| distance(&xp, y, k.n)).sum();
    let bound = q.side().powi(data.order as i32) * s.powf(k.exponent() - data.order as f64);
    let mut best: f64 = 0.0;
    let mut tuple = ys.clone();
    for y in samples {
        if !q.contains_closed(&y[..k.n]) {
            return Err(invalid("samples", "sample point outside the cube"));
        }
        tuple[data.slot] = *y;
        let rem = (k.evaluate(&data.x, &tuple) - data.eval(&y[..k.n])).abs();
        best = best.max(rem / bound);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G1Report {
    pub value: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// `|T(chi_{Q_1}, ..., chi_{Q_m})(x)| / prod l(Q_i)^{gamma_i}` for `x` in
/// every `Q_i*`, on a grid of `2^resolution` cells per smallest side.
pub fn pointwise_g1_bound_check(
    k: &KernelSpec,
    cubes: &[Cube],
    gammas: &[f64],
    x: &[f64],
    resolution: u32,
) -> Result<G1Report> {
    k.validate()?;
    if cubes.len() != k.m || gammas.len() != k.m {
        return Err(invalid("cubes", "need one cube and one gamma_i per slot"));
    }
    if gammas.iter().any(|g| !(*g > 0.0)) || (gammas.iter().sum::<f64>() - k.gamma).abs() > 1e-12 * k.gamma.max(1.0) {
        return Err(invalid("gammas", "need gamma_i > 0 summing to gamma"));
    }
    if !cubes.iter().all(|q| q.star().contains_closed(x)) {
        return Err(Error::OutsideIntersection);
    }
    let side = cubes.iter().map(|q| q.side()).fold(f64::INFINITY, f64::min);
    let h = side / 2f64.powi(resolution as i32);
    let n = k.n;
    let lo: Vec<f64> = (0..n).map(|a| cubes.iter().map(|q| q.lo(a)).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n)
        .map(|a| {
            let top = cubes.iter().map(|q| q.hi(a)).fold(f64::NEG_INFINITY, f64::max);
            lo[a] + ((top - lo[a]) / h).ceil().max(1.0) * h
        })
        .collect();
    let grid = Grid::new(BoxDomain::new(&lo, &hi)?, h)?;
    let fs: Vec<GridFunction> = cubes.iter().map(|q| GridFunction::indicator(&grid, q, 1.0)).collect();
    let refs: Vec<&GridFunction> = fs.iter().collect();
    let value = eval_frac_at(k, &refs, x)?.abs();
    let bound: f64 = cubes.iter().zip(gammas).map(|(q, g)| q.side().powf(*g)).product();
    Ok(G1Report {
        value,
        bound,
        ratio: value / bound,
    })
}
