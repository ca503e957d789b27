//! Weights and cube-supremum estimates of Muckenhoupt, off-diagonal and
//! reverse Hölder constants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{check_dim, distance, to_point, BoxDomain, Cube, DyadicFamily, Grid, GridFunction, Point};
use crate::quadrature::integrate_2d;

/// Default cap used by [`rw_estimate`].
pub const RW_CAP: f64 = 1e6;

/// A weight: either `scale * |x - center|^exponent` or positive samples.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    Power {
        dim: usize,
        center: Point,
        exponent: f64,
        scale: f64,
    },
    Sampled(GridFunction),
}

/// JSON-friendly description of a weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightDescriptor {
    Power {
        center: Vec<f64>,
        exponent: f64,
        scale: f64,
    },
    Sampled {
        #[serde(rename = "box")]
        bounds: BoxDomain,
        h: f64,
    },
}

impl Weight {
    /// `|x - center|^a`; requires `a > -n`.
    pub fn power_at(center: &[f64], exponent: f64) -> Result<Self> {
        let dim = center.len();
        check_dim(dim)?;
        if !exponent.is_finite() || exponent <= -(dim as f64) {
            return Err(Error::NotLocallyIntegrable(exponent, dim));
        }
        Ok(Weight::Power {
            dim,
            center: to_point(center),
            exponent,
            scale: 1.0,
        })
    }

    /// `|x|^a`.
    pub fn power(dim: usize, exponent: f64) -> Result<Self> {
        Weight::power_at(&vec![0.0; dim], exponent)
    }

    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NonPositiveWeight { index: 0, value: c });
        }
        Ok(Weight::power(dim, 0.0)?.scaled(c))
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Weight::constant(dim, 1.0)
    }

    /// Weight given by samples; every sample must be strictly positive.
    pub fn sampled(f: GridFunction) -> Result<Self> {
        if let Some(i) = f.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositiveWeight {
                index: i,
                value: f.values()[i],
            });
        }
        Ok(Weight::Sampled(f))
    }

    pub fn dim(&self) -> usize {
        match self {
            Weight::Power { dim, .. } => *dim,
            Weight::Sampled(f) => f.grid().dim(),
        }
    }

    /// `c * w`.
    pub fn scaled(&self, c: f64) -> Weight {
        match self {
            Weight::Power {
                dim,
                center,
                exponent,
                scale,
            } => Weight::Power {
                dim: *dim,
                center: *center,
                exponent: *exponent,
                scale: scale * c,
            },
            Weight::Sampled(f) => Weight::Sampled(f.scale(c)),
        }
    }

    /// `w^t`. No integrability check: averages of non-integrable powers are infinite.
    pub fn pow(&self, t: f64) -> Weight {
        match self {
            Weight::Power {
                dim,
                center,
                exponent,
                scale,
            } => Weight::Power {
                dim: *dim,
                center: *center,
                exponent: exponent * t,
                scale: scale.powf(t),
            },
            Weight::Sampled(f) => Weight::Sampled(f.map(|v| v.powf(t))),
        }
    }

    /// Pointwise product; power weights must share their center, sampled
    /// weights their grid.
    pub fn product(ws: &[Weight]) -> Result<Weight> {
        let first = ws.first().ok_or_else(|| invalid("weights", "empty product"))?;
        let mut acc = first.clone();
        for w in &ws[1..] {
            acc = match (&acc, w) {
                (
                    Weight::Power {
                        dim,
                        center,
                        exponent,
                        scale,
                    },
                    Weight::Power {
                        dim: d2,
                        center: c2,
                        exponent: e2,
                        scale: s2,
                    },
                ) if dim == d2 && center == c2 => Weight::Power {
                    dim: *dim,
                    center: *center,
                    exponent: exponent + e2,
                    scale: scale * s2,
                },
                (Weight::Sampled(a), Weight::Sampled(b)) => Weight::Sampled(a.zip_with(b, |x, y| x * y)?),
                _ => {
                    return Err(invalid(
                        "weights",
                        "product needs power weights with a common center or samples on a common grid",
                    ))
                }
            };
        }
        Ok(acc)
    }

    pub fn descriptor(&self) -> WeightDescriptor {
        match self {
            Weight::Power {
                dim,
                center,
                exponent,
                scale,
            } => WeightDescriptor::Power {
                center: center[..*dim].to_vec(),
                exponent: *exponent,
                scale: *scale,
            },
            Weight::Sampled(f) => WeightDescriptor::Sampled {
                bounds: f.grid().bounds().clone(),
                h: f.grid().h(),
            },
        }
    }

    /// Pointwise value (infinite at the center of a negative power).
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Power {
                dim,
                center,
                exponent,
                scale,
            } => {
                if *exponent == 0.0 {
                    *scale
                } else {
                    scale * distance(&to_point(x), center, *dim).powf(*exponent)
                }
            }
            Weight::Sampled(f) => f.value_at(x),
        }
    }

    /// Average of `w^t` over `q`. `None` when a sampled weight has no cell in `q`.
    pub fn cube_average_pow(&self, q: &Cube, t: f64) -> Option<f64> {
        match self {
            Weight::Power {
                dim,
                center,
                exponent,
                scale,
            } => {
                let e = exponent * t;
                let s = scale.powf(t);
                if e == 0.0 {
                    return Some(s);
                }
                let avg = if *dim == 1 {
                    power_integral_1d(q.lo(0) - center[0], q.hi(0) - center[0], e) / q.side()
                } else {
                    let lo = [q.lo(0) - center[0], q.lo(1) - center[1]];
                    power_integral_2d(lo, q.side(), e, 0) / q.volume()
                };
                Some(s * avg)
            }
            Weight::Sampled(f) => {
                let g = f.grid();
                let [rx, ry] = g.cube_ranges(q);
                let count = rx.len() * ry.len();
                if count == 0 {
                    return None;
                }
                let mut sum = 0.0;
                for j in ry {
                    for i in rx.clone() {
                        sum += f.values()[g.index(i, j)].powf(t);
                    }
                }
                Some(sum / count as f64)
            }
        }
    }

    pub fn cube_average(&self, q: &Cube) -> Option<f64> {
        self.cube_average_pow(q, 1.0)
    }

    /// Cell averages of the weight on `grid`; sampled weights are returned as is.
    pub fn cell_values(&self, grid: &Grid) -> Result<GridFunction> {
        match self {
            Weight::Sampled(f) => {
                f.grid().same_as(grid)?;
                Ok(f.clone())
            }
            Weight::Power { dim, exponent, scale, .. } => {
                if *dim != grid.dim() {
                    return Err(Error::GridMismatch);
                }
                if *exponent == 0.0 {
                    return Ok(GridFunction::constant(grid, *scale));
                }
                let h = grid.h();
                let values: Vec<f64> = (0..grid.len())
                    .into_par_iter()
                    .map(|idx| {
                        let c = grid.center(idx);
                        let q = Cube::new(&c[..*dim], h).expect("grid cell is a valid cube");
                        self.cube_average(&q).unwrap_or(f64::NAN)
                    })
                    .collect();
                GridFunction::from_values(grid, values)
            }
        }
    }
}

/// `int_u^v |s|^e ds` for `u < v`.
pub(crate) fn power_integral_1d(u: f64, v: f64, e: f64) -> f64 {
    if e == 0.0 {
        return v - u;
    }
    if u <= 0.0 && v >= 0.0 {
        if e <= -1.0 {
            return f64::INFINITY;
        }
        return ((-u).powf(e + 1.0) + v.powf(e + 1.0)) / (e + 1.0);
    }
    let (a, b) = if u > 0.0 { (u, v) } else { (-v, -u) };
    // b^(e+1) - a^(e+1) without cancellation
    let log_ratio = ((b - a) / a).ln_1p();
    if e == -1.0 {
        log_ratio
    } else {
        let k = e + 1.0;
        a.powf(k) * (k * log_ratio).exp_m1() / k
    }
}

/// `int |x|^e` over the square with lower corner `lo` (relative to the
/// singular point) and side `side`.
fn power_integral_2d(lo: [f64; 2], side: f64, e: f64, depth: u32) -> f64 {
    let hi = [lo[0] + side, lo[1] + side];
    let dx = (lo[0]).max(-hi[0]).max(0.0);
    let dy = (lo[1]).max(-hi[1]).max(0.0);
    let dist = dx.hypot(dy);
    let contains = dist == 0.0;
    if contains && e <= -2.0 {
        return f64::INFINITY;
    }
    if dist >= side * (e.abs() / 8.0).max(1.0) {
        return integrate_2d(lo, hi, |x, y| x.hypot(y).powf(e));
    }
    if depth >= 48 {
        if contains {
            let r = side / std::f64::consts::PI.sqrt();
            return 2.0 * std::f64::consts::PI * r.powf(e + 2.0) / (e + 2.0);
        }
        let c = [lo[0] + 0.5 * side, lo[1] + 0.5 * side];
        return side * side * c[0].hypot(c[1]).powf(e);
    }
    let half = 0.5 * side;
    let mut s = 0.0;
    for (ox, oy) in [(0.0, 0.0), (half, 0.0), (0.0, half), (half, half)] {
        s += power_integral_2d([lo[0] + ox, lo[1] + oy], half, e, depth + 1);
    }
    s
}

/// Constant of one dyadic level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelValue {
    pub level: i32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub levels: (i32, i32),
    pub window: BoxDomain,
}

/// Supremum of a cube functional over a family, resolved per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightConstantReport {
    #[serde(rename = "constant")]
    pub value: f64,
    pub per_level: Vec<LevelValue>,
    pub stable: bool,
    pub family: FamilySummary,
    pub weight_descriptor: WeightDescriptor,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Cubes used for suprema: dyadic cubes plus one-third translates. Sampled
/// weights snap the translates to their grid.
fn family_cubes(w: &Weight, family: &DyadicFamily) -> Vec<(i32, Cube)> {
    let snap = match w {
        Weight::Sampled(f) => Some(f.grid().h()),
        Weight::Power { .. } => None,
    };
    family.with_third_shifts(snap)
}

fn sup_report(
    w: &Weight,
    family: &DyadicFamily,
    functional: impl Fn(&Cube) -> Option<f64> + Sync,
) -> Result<WeightConstantReport> {
    if w.dim() != family.window.dim() {
        return Err(Error::UnsupportedDimension(family.window.dim()));
    }
    let cubes = family_cubes(w, family);
    let vals: Vec<(i32, Option<f64>)> = cubes.par_iter().map(|(j, q)| (*j, functional(q))).collect();
    let (j_min, j_max) = family.levels;
    let mut per_level: Vec<LevelValue> = (j_min..=j_max)
        .map(|level| LevelValue {
            level,
            value: f64::NEG_INFINITY,
        })
        .collect();
    for (j, v) in vals {
        if let Some(v) = v {
            let slot = &mut per_level[(j - j_min) as usize];
            // NaN (e.g. inf * 0) counts as unbounded
            let v = if v.is_nan() { f64::INFINITY } else { v };
            slot.value = slot.value.max(v);
        }
    }
    per_level.retain(|l| l.value > f64::NEG_INFINITY);
    let value = per_level.iter().map(|l| l.value).fold(f64::NEG_INFINITY, f64::max);
    let stable = match per_level.as_slice() {
        [] => false,
        [only] => only.value.is_finite(),
        [a, b, ..] => {
            a.value.is_finite() && b.value.is_finite() && (a.value - b.value).abs() <= 0.1 * a.value.max(b.value)
        }
    };
    Ok(WeightConstantReport {
        value,
        per_level,
        stable,
        family: FamilySummary {
            levels: family.levels,
            window: family.window.clone(),
        },
        weight_descriptor: w.descriptor(),
        flags: Vec::new(),
    })
}

fn check_weight(w: &Weight) -> Result<()> {
    if let Weight::Sampled(f) = w {
        if let Some(i) = f.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositiveWeight {
                index: i,
                value: f.values()[i],
            });
        }
    }
    Ok(())
}

/// `sup_Q avg_Q(w) * avg_Q(w^(1-p'))^(p-1)`.
pub fn ap_constant(w: &Weight, p: f64, family: &DyadicFamily) -> Result<WeightConstantReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("A_p needs 1 < p < inf, got {p}")));
    }
    check_weight(w)?;
    let dual = p / (p - 1.0);
    sup_report(w, family, |q| {
        let a = w.cube_average(q)?;
        let b = w.cube_average_pow(q, 1.0 - dual)?;
        Some(a * b.powf(p - 1.0))
    })
}

/// `sup_Q avg_Q(w^s)^(1/s) / avg_Q(w)`.
pub fn rh_constant(w: &Weight, s: f64, family: &DyadicFamily) -> Result<WeightConstantReport> {
    if !(s > 1.0 && s.is_finite()) {
        return Err(invalid("s", format!("reverse Hölder needs 1 < s < inf, got {s}")));
    }
    check_weight(w)?;
    sup_report(w, family, |q| {
        let a = w.cube_average_pow(q, s)?;
        let b = w.cube_average(q)?;
        Some(a.powf(1.0 / s) / b)
    })
}

/// `sup_Q avg_Q(w^q)^(1/q) * avg_Q(w^(-p'))^(1/p')`. Pairs `(p, q)` outside
/// `1 < p < q` are evaluated anyway and flagged.
pub fn apq_constant(w: &Weight, p: f64, q: f64, family: &DyadicFamily) -> Result<WeightConstantReport> {
    if !(p > 1.0 && p.is_finite() && q > 0.0 && q.is_finite()) {
        return Err(invalid("p", format!("A_(p,q) needs 1 < p < inf and q > 0, got ({p}, {q})")));
    }
    check_weight(w)?;
    let dual = p / (p - 1.0);
    let mut report = sup_report(w, family, |cube| {
        let a = w.cube_average_pow(cube, q)?;
        let b = w.cube_average_pow(cube, -dual)?;
        Some(a.powf(1.0 / q) * b.powf(1.0 / dual))
    })?;
    if q <= p {
        report
            .flags
            .push(format!("inconsistent exponents: q = {q} must exceed p = {p}"));
    }
    Ok(report)
}

/// Same as [`apq_constant`] with `q` derived from `1/q = 1/p - gamma/n`;
/// inconsistent inputs are flagged rather than rejected.
pub fn apq_constant_for(w: &Weight, p: f64, gamma: f64, family: &DyadicFamily) -> Result<WeightConstantReport> {
    let n = w.dim() as f64;
    let inv_q = 1.0 / p - gamma / n;
    if inv_q <= 0.0 {
        return Err(invalid("gamma", format!("1/p - gamma/n = {inv_q} must be positive")));
    }
    apq_constant(w, p, 1.0 / inv_q, family)
}

/// Smallest `p` in `p_grid` with a stable A_p constant below `cap`; infinity if none.
pub fn rw_estimate(w: &Weight, family: &DyadicFamily, p_grid: &[f64], cap: f64) -> Result<f64> {
    if p_grid.windows(2).any(|pair| pair[1] <= pair[0]) {
        return Err(invalid("p_grid", "must be strictly increasing"));
    }
    for &p in p_grid {
        let r = ap_constant(w, p, family)?;
        if r.stable && r.value < cap {
            return Ok(p);
        }
    }
    Ok(f64::INFINITY)
}

/// `1 + 2^(-6) k` for `k = 1..=k_max`, a default scan grid for [`rw_estimate`].
pub fn default_p_grid(p_max: f64) -> Vec<f64> {
    let step = 1.0 / 64.0;
    let count = ((p_max - 1.0) / step).floor() as usize;
    (1..=count).map(|k| 1.0 + step * k as f64).collect()
}
