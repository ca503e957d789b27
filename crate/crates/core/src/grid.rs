//! Cubes, uniform cell-centered grids, sampled functions and the quadrature
//! every other module is built on.
//!
//! Cubes are half-open: `[c - l/2, c + l/2)` on each axis. A grid cell belongs
//! to a cube when its center does. Points are stored as `[f64; 2]`; in one
//! dimension the second coordinate is unused and kept at zero.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Point = [f64; 2];

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

pub(crate) fn to_point(coords: &[f64]) -> Point {
    let mut p = [0.0; 2];
    for (dst, src) in p.iter_mut().zip(coords) {
        *dst = *src;
    }
    p
}

/// Euclidean distance using the first `dim` coordinates.
#[inline]
pub fn distance(a: &Point, b: &Point, dim: usize) -> f64 {
    if dim == 1 {
        (a[0] - b[0]).abs()
    } else {
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// Axis-parallel cube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    center: Point,
    side: f64,
    dim: usize,
}

impl Cube {
    pub fn new(center: &[f64], side: f64) -> Result<Self> {
        check_dim(center.len())?;
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidCube(format!("side must be positive, got {side}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidCube("center must be finite".into()));
        }
        Ok(Cube {
            center: to_point(center),
            side,
            dim: center.len(),
        })
    }

    /// Cube with lower corner `lo` and the given side.
    pub fn from_corner(lo: &[f64], side: f64) -> Result<Self> {
        let c: Vec<f64> = lo.iter().map(|v| v + 0.5 * side).collect();
        Cube::new(&c, side)
    }

    pub fn center(&self) -> &[f64] {
        &self.center[..self.dim]
    }

    pub fn center_point(&self) -> Point {
        self.center
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.center[axis] - 0.5 * self.side
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.center[axis] + 0.5 * self.side
    }

    /// Same center, side scaled by `factor`.
    pub fn dilate(&self, factor: f64) -> Result<Cube> {
        if !(factor > 1.0) {
            return Err(invalid("tau", format!("dilation factor must exceed 1, got {factor}")));
        }
        Ok(self.scaled(factor))
    }

    /// `Q* = 2 sqrt(n) Q`.
    pub fn star(&self) -> Cube {
        self.scaled(2.0 * (self.dim as f64).sqrt())
    }

    pub(crate) fn scaled(&self, factor: f64) -> Cube {
        Cube {
            center: self.center,
            side: self.side * factor,
            dim: self.dim,
        }
    }

    /// Image of the cube under `x -> factor * x`.
    pub fn dilate_about_origin(&self, factor: f64) -> Cube {
        Cube {
            center: [self.center[0] * factor, self.center[1] * factor],
            side: self.side * factor,
            dim: self.dim,
        }
    }

    pub fn translate(&self, offset: &[f64]) -> Cube {
        let mut c = self.center;
        for (a, o) in c.iter_mut().zip(offset) {
            *a += o;
        }
        Cube { center: c, ..*self }
    }

    /// Half-open membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|a| x[a] >= self.lo(a) && x[a] < self.hi(a))
    }

    /// Closed membership, used when a singular point on the boundary matters.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|a| x[a] >= self.lo(a) && x[a] <= self.hi(a))
    }

    pub fn as_box(&self) -> BoxDomain {
        BoxDomain {
            lo: (0..self.dim).map(|a| self.lo(a)).collect(),
            hi: (0..self.dim).map(|a| self.hi(a)).collect(),
        }
    }

    /// Euclidean distance from `x` to the closed cube.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in 0..self.dim {
            let d = (self.lo(a) - x[a]).max(x[a] - self.hi(a)).max(0.0);
            s += d * d;
        }
        s.sqrt()
    }
}

/// Product of intervals `[lo_a, hi_a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        check_dim(lo.len())?;
        if lo.len() != hi.len() {
            return Err(Error::InvalidGrid("box corners differ in dimension".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidGrid(format!("degenerate box {lo:?}..{hi:?}")));
        }
        Ok(BoxDomain {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        })
    }

    /// `[-r, r]^dim`.
    pub fn symmetric(dim: usize, r: f64) -> Result<Self> {
        BoxDomain::new(&vec![-r; dim], &vec![r; dim])
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        BoxDomain::new(&[lo], &[hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn min_width(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains_cube(&self, q: &Cube) -> bool {
        (0..self.dim()).all(|a| q.lo(a) >= self.lo[a] - 1e-12 && q.hi(a) <= self.hi[a] + 1e-12)
    }

    pub fn scaled(&self, factor: f64) -> BoxDomain {
        BoxDomain {
            lo: self.lo.iter().map(|v| v * factor).collect(),
            hi: self.hi.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Uniform cell-centered grid over a box with equal spacing on every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    bounds: BoxDomain,
    h: f64,
    shape: [usize; 2],
}

impl Grid {
    /// The box widths must be integer multiples of `h`.
    pub fn new(bounds: BoxDomain, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        let mut shape = [1usize; 2];
        for a in 0..bounds.dim() {
            let cells = bounds.width(a) / h;
            let rounded = cells.round();
            if rounded < 1.0 || (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
                return Err(Error::InvalidGrid(format!(
                    "box width {} is not a multiple of h = {h}",
                    bounds.width(a)
                )));
            }
            shape[a] = rounded as usize;
        }
        Ok(Grid { bounds, h, shape })
    }

    /// Grid whose first cell center sits at `first_center` on every axis.
    pub fn with_first_center(dim: usize, first_center: f64, h: f64, cells: usize) -> Result<Self> {
        check_dim(dim)?;
        let lo = first_center - 0.5 * h;
        let hi = lo + cells as f64 * h;
        Grid::new(BoxDomain::new(&vec![lo; dim], &vec![hi; dim])?, h)
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bounds(&self) -> &BoxDomain {
        &self.bounds
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.shape[0] * j
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize) {
        (idx % self.shape[0], idx / self.shape[0])
    }

    #[inline]
    pub fn axis_center(&self, axis: usize, i: usize) -> f64 {
        self.bounds.lo[axis] + (i as f64 + 0.5) * self.h
    }

    #[inline]
    pub fn center(&self, idx: usize) -> Point {
        let (i, j) = self.unravel(idx);
        if self.dim() == 1 {
            [self.axis_center(0, i), 0.0]
        } else {
            [self.axis_center(0, i), self.axis_center(1, j)]
        }
    }

    /// Cells on `axis` whose centers lie in `[lo, hi)`.
    pub fn axis_range(&self, axis: usize, lo: f64, hi: f64) -> Range<usize> {
        let n = self.shape[axis] as f64;
        // center_i >= lo  <=>  i >= (lo - box_lo)/h - 1/2
        let first = ((lo - self.bounds.lo[axis]) / self.h - 0.5).ceil().clamp(0.0, n);
        let end = ((hi - self.bounds.lo[axis]) / self.h - 0.5).ceil().clamp(0.0, n);
        let (mut a, mut b) = (first as usize, end as usize);
        // guard against rounding at exact half-cell boundaries
        while a > 0 && self.axis_center(axis, a - 1) >= lo {
            a -= 1;
        }
        while a < self.shape[axis] && self.axis_center(axis, a) < lo {
            a += 1;
        }
        while b > a && self.axis_center(axis, b - 1) >= hi {
            b -= 1;
        }
        while b < self.shape[axis] && self.axis_center(axis, b) < hi {
            b += 1;
        }
        a..b.max(a)
    }

    /// Cell index ranges (per axis) of the cells belonging to `q`.
    pub fn cube_ranges(&self, q: &Cube) -> [Range<usize>; 2] {
        let rx = self.axis_range(0, q.lo(0), q.hi(0));
        let ry = if self.dim() == 2 {
            self.axis_range(1, q.lo(1), q.hi(1))
        } else {
            0..1
        };
        [rx, ry]
    }

    /// Index of the cell containing `x`, if any.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut ij = [0usize; 2];
        for a in 0..self.dim() {
            let t = ((x[a] - self.bounds.lo[a]) / self.h).floor();
            if t < 0.0 || t >= self.shape[a] as f64 {
                return None;
            }
            ij[a] = t as usize;
        }
        Some(self.index(ij[0], ij[1]))
    }

    /// Image of the grid under `x -> factor * x` (box and spacing scale together).
    pub fn dilate_about_origin(&self, factor: f64) -> Result<Grid> {
        Grid::new(self.bounds.scaled(factor), self.h * factor)
    }

    pub fn same_as(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Real function sampled at the cell centers of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        Ok(GridFunction {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|idx| {
                let c = grid.center(idx);
                f(&c[..dim])
            })
            .collect();
        GridFunction::from_values(grid, values)
    }

    /// `c * chi_Q` with half-open cube membership.
    pub fn indicator(grid: &Grid, q: &Cube, c: f64) -> Self {
        let mut g = GridFunction::zeros(grid);
        g.add_on_cube(q, c);
        g
    }

    /// Adds `c` on every cell of `q`.
    pub fn add_on_cube(&mut self, q: &Cube, c: f64) {
        let [rx, ry] = self.grid.cube_ranges(q);
        for j in ry {
            for i in rx.clone() {
                let idx = self.grid.index(i, j);
                self.values[idx] += c;
            }
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value at the cell containing `x` (zero outside the box).
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.grid.cell_of(x).map_or(0.0, |i| self.values[i])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.same_as(&other.grid)?;
        Ok(GridFunction {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Midpoint rule: `h^n * sum(samples)`.
    pub fn integrate(&self) -> f64 {
        integrate(self)
    }

    /// Indices of the non-zero samples.
    pub fn support_indices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Smallest distance between a non-zero cell center and the box boundary,
    /// measured to the outer edge of that cell. `None` for the zero function.
    pub fn support_margin(&self) -> Option<f64> {
        let dim = self.grid.dim();
        let b = self.grid.bounds();
        let h = self.grid.h();
        let mut margin: Option<f64> = None;
        for (idx, v) in self.values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let c = self.grid.center(idx);
            for a in 0..dim {
                let m = (c[a] - 0.5 * h - b.lo[a]).min(b.hi[a] - c[a] - 0.5 * h);
                margin = Some(margin.map_or(m, |x: f64| x.min(m)));
            }
        }
        margin
    }

    /// Writes `x[,y],value` rows for every cell center.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.grid.dim() == 1 {
            w.write_record(["x", "value"])?;
        } else {
            w.write_record(["x", "y", "value"])?;
        }
        for (idx, v) in self.values.iter().enumerate() {
            let c = self.grid.center(idx);
            if self.grid.dim() == 1 {
                w.write_record([c[0].to_string(), v.to_string()])?;
            } else {
                w.write_record([c[0].to_string(), c[1].to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads values written by [`GridFunction::write_csv`] for a known grid.
    pub fn read_csv<R: Read>(grid: &Grid, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let col = grid.dim();
        let mut values = Vec::with_capacity(grid.len());
        for rec in r.records() {
            let rec = rec?;
            let v: f64 = rec
                .get(col)
                .ok_or_else(|| Error::InvalidGrid("missing value column".into()))?
                .trim()
                .parse()
                .map_err(|e| Error::InvalidGrid(format!("bad value: {e}")))?;
            values.push(v);
        }
        GridFunction::from_values(grid, values)
    }

    /// Writes `<stem>.csv` and the `<stem>.json` grid descriptor.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv_file = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(csv_file))?;
        let desc = GridDescriptor::from(&self.grid);
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&desc)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let desc: GridDescriptor =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let grid = desc.to_grid()?;
        let f = std::fs::File::open(dir.join(format!("{stem}.csv")))?;
        GridFunction::read_csv(&grid, std::io::BufReader::new(f))
    }
}

/// Sidecar descriptor for CSV-serialized grid functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDescriptor {
    #[serde(rename = "box")]
    pub bounds: BoxDomain,
    pub h: f64,
    pub dim: usize,
}

impl From<&Grid> for GridDescriptor {
    fn from(g: &Grid) -> Self {
        GridDescriptor {
            bounds: g.bounds().clone(),
            h: g.h(),
            dim: g.dim(),
        }
    }
}

impl GridDescriptor {
    pub fn to_grid(&self) -> Result<Grid> {
        if self.bounds.dim() != self.dim {
            return Err(Error::InvalidGrid("descriptor dim disagrees with box".into()));
        }
        Grid::new(BoxDomain::new(&self.bounds.lo, &self.bounds.hi)?, self.h)
    }
}

pub fn integrate(f: &GridFunction) -> f64 {
    f.grid.cell_volume() * f.values.iter().sum::<f64>()
}

/// `(integral |f|^p w)^(1/p)` for a nonnegative sampled weight on the same grid.
pub fn weighted_lp_quasinorm(f: &GridFunction, p: f64, w: &GridFunction) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid("p", format!("exponent must be positive and finite, got {p}")));
    }
    f.grid.same_as(&w.grid)?;
    if let Some(i) = w.values.iter().position(|&v| v < 0.0) {
        return Err(Error::NonPositiveWeight {
            index: i,
            value: w.values[i],
        });
    }
    let s: f64 = f
        .values
        .iter()
        .zip(&w.values)
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, wt)| v.abs().powf(p) * wt)
        .sum();
    Ok((f.grid.cell_volume() * s).powf(1.0 / p))
}

/// Unweighted `L^p` quasi-norm.
pub fn lp_quasinorm(f: &GridFunction, p: f64) -> Result<f64> {
    weighted_lp_quasinorm(f, p, &GridFunction::constant(f.grid(), 1.0))
}

/// Dyadic cubes `prod [k 2^j, (k+1) 2^j)` of every level in `[j_min, j_max]`
/// lying inside a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicFamily {
    pub levels: (i32, i32),
    pub window: BoxDomain,
    cubes: Vec<(i32, Cube)>,
}

impl DyadicFamily {
    /// `resolution` is the grid spacing the family will be evaluated on, if any.
    pub fn new(window: &BoxDomain, j_min: i32, j_max: i32, resolution: Option<f64>) -> Result<Self> {
        if j_min > j_max {
            return Err(Error::EmptyLevelRange(j_min, j_max));
        }
        if let Some(h) = resolution {
            if 2f64.powi(j_min) < h * (1.0 - 1e-12) {
                return Err(Error::LevelTooFine { level: j_min, h });
            }
        }
        let dim = window.dim();
        let mut cubes = Vec::new();
        for j in j_min..=j_max {
            let side = 2f64.powi(j);
            let ranges: Vec<(i64, i64)> = (0..dim)
                .map(|a| {
                    let k0 = (window.lo[a] / side - 1e-9).ceil() as i64;
                    let k1 = (window.hi[a] / side + 1e-9).floor() as i64;
                    (k0, k1)
                })
                .collect();
            let (ky0, ky1) = if dim == 2 { ranges[1] } else { (0, 1) };
            for ky in ky0..ky1 {
                for kx in ranges[0].0..ranges[0].1 {
                    let lo = if dim == 1 {
                        vec![kx as f64 * side]
                    } else {
                        vec![kx as f64 * side, ky as f64 * side]
                    };
                    cubes.push((j, Cube::from_corner(&lo, side)?));
                }
            }
        }
        Ok(DyadicFamily {
            levels: (j_min, j_max),
            window: window.clone(),
            cubes,
        })
    }

    /// Convenience constructor checking levels against a grid.
    pub fn for_grid(grid: &Grid, j_min: i32, j_max: i32) -> Result<Self> {
        DyadicFamily::new(grid.bounds(), j_min, j_max, Some(grid.h()))
    }

    pub fn cubes(&self) -> &[(i32, Cube)] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn level_count(&self, j: i32) -> usize {
        self.cubes.iter().filter(|(l, _)| *l == j).count()
    }

    /// Dyadic cubes together with their translates by one and two thirds of
    /// the side along the diagonal, keeping those inside the window. When
    /// `snap` is given the shift is rounded to a multiple of it, so that
    /// shifted cubes stay aligned with grid cells.
    pub fn with_third_shifts(&self, snap: Option<f64>) -> Vec<(i32, Cube)> {
        let dim = self.window.dim();
        let mut out = self.cubes.clone();
        for (j, q) in &self.cubes {
            for t in [1.0, 2.0] {
                let mut shift = t * q.side() / 3.0;
                if let Some(s) = snap {
                    shift = (shift / s).round() * s;
                }
                if shift == 0.0 {
                    continue;
                }
                let shifted = q.translate(&vec![shift; dim]);
                if self.window.contains_cube(&shifted) {
                    out.push((*j, shifted));
                }
            }
        }
        out
    }
}
