//! Atoms with vanishing moments, atomic sums and their envelopes, and
//! weighted Hardy quasinorms through the grand maximal function.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{weighted_lp_quasinorm, BoxDomain, Cube, Grid, GridFunction, Point};
use crate::jet::multi_indices;
use crate::maximal::{grand_maximal, Mollifier};
use crate::weights::Weight;

/// Default scale-relative moment tolerance.
pub const MOMENT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    cube: Cube,
    order: usize,
    values: GridFunction,
}

/// Cell indices of `q` on `grid`, row-major.
fn cube_cells(grid: &Grid, q: &Cube) -> Vec<usize> {
    let [rx, ry] = grid.cube_ranges(q);
    let mut out = Vec::with_capacity(rx.len() * ry.len());
    for j in ry {
        for i in rx.clone() {
            out.push(grid.index(i, j));
        }
    }
    out
}

/// `(y - c) / l` for every listed cell.
fn relative_coords(grid: &Grid, q: &Cube, cells: &[usize]) -> Vec<Point> {
    let c = q.center_point();
    cells
        .iter()
        .map(|&i| {
            let y = grid.center(i);
            [(y[0] - c[0]) / q.side(), (y[1] - c[1]) / q.side()]
        })
        .collect()
}

fn monomial(u: &Point, b: [usize; 2]) -> f64 {
    u[0].powi(b[0] as i32) * u[1].powi(b[1] as i32)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis (discrete inner product over the cube cells) of the
/// polynomials of total degree `<= order`.
fn polynomial_basis(u: &[Point], dim: usize, order: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for b in multi_indices(dim, order) {
        let mut v: Vec<f64> = u.iter().map(|p| monomial(p, b)).collect();
        for _ in 0..2 {
            for e in &basis {
                let c = dot(&v, e);
                v.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 * (u.len() as f64).sqrt() {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Removes the polynomial part of degree `<= order` from `profile` on `q`
/// and rescales so that `sup |a| = 1`.
pub fn make_atom(profile: &GridFunction, q: &Cube, order: usize) -> Result<Atom> {
    let grid = profile.grid();
    if q.dim() != grid.dim() {
        return Err(Error::GridMismatch);
    }
    let cells = cube_cells(grid, q);
    if cells.is_empty() {
        return Err(Error::InvalidCube("cube contains no grid cells".into()));
    }
    let mut inside = vec![false; grid.len()];
    for &i in &cells {
        inside[i] = true;
    }
    if let Some(i) = profile.support_indices().into_iter().find(|&i| !inside[i]) {
        return Err(Error::ProfileOutsideCube(i));
    }
    let u = relative_coords(grid, q, &cells);
    let mut v: Vec<f64> = cells.iter().map(|&i| profile.values()[i]).collect();
    let initial = dot(&v, &v).sqrt();
    if initial == 0.0 {
        return Err(Error::Annihilated);
    }
    let basis = polynomial_basis(&u, grid.dim(), order);
    for _ in 0..2 {
        for e in &basis {
            let c = dot(&v, e);
            v.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
        }
    }
    if dot(&v, &v).sqrt() <= 1e-10 * initial {
        return Err(Error::Annihilated);
    }
    let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut values = vec![0.0; grid.len()];
    for (&i, x) in cells.iter().zip(&v) {
        values[i] = x / sup;
    }
    Ok(Atom {
        cube: *q,
        order,
        values: GridFunction::from_values(grid, values)?,
    })
}

impl Atom {
    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &GridFunction {
        &self.values
    }

    /// `(a, int (x - c)^a a(x) dx / l^(n + |a|))` for `|a| <= N`.
    pub fn scaled_moments(&self) -> Vec<([usize; 2], f64)> {
        let grid = self.values.grid();
        let cells = cube_cells(grid, &self.cube);
        let u = relative_coords(grid, &self.cube, &cells);
        let vol = (grid.h() / self.cube.side()).powi(grid.dim() as i32);
        multi_indices(grid.dim(), self.order)
            .into_iter()
            .map(|b| {
                let m: f64 = cells
                    .iter()
                    .zip(&u)
                    .map(|(&i, p)| monomial(p, b) * self.values.values()[i])
                    .sum();
                (b, m * vol)
            })
            .collect()
    }

    pub fn max_scaled_moment(&self) -> f64 {
        self.scaled_moments().iter().fold(0.0, |m, (_, v)| m.max(v.abs()))
    }
}

/// `f = sum lambda_k a_k` together with its envelope `g = sum lambda_k chi_{Q_k}`.
#[derive(Clone, Debug)]
pub struct AtomicSum {
    pub lambdas: Vec<f64>,
    pub atoms: Vec<Atom>,
    pub seed: Option<u64>,
    realized: GridFunction,
    envelope: GridFunction,
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomEntry {
    pub cube: Cube,
    #[serde(rename = "N")]
    pub order: usize,
    pub values_ref: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomicSumManifest {
    pub atoms: Vec<AtomEntry>,
    pub lambdas: Vec<f64>,
    pub seed: Option<u64>,
}

impl AtomicSum {
    pub fn new(grid: &Grid, lambdas: Vec<f64>, atoms: Vec<Atom>, seed: Option<u64>) -> Result<Self> {
        if lambdas.len() != atoms.len() {
            return Err(invalid("lambdas", "one coefficient per atom"));
        }
        if lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(invalid("lambdas", "coefficients must be positive and finite"));
        }
        let mut f = vec![0.0; grid.len()];
        let mut g = GridFunction::zeros(grid);
        for (lambda, a) in lambdas.iter().zip(&atoms) {
            grid.same_as(a.values.grid())?;
            for (acc, v) in f.iter_mut().zip(a.values.values()) {
                *acc += lambda * v;
            }
            g.add_on_cube(&a.cube, *lambda);
        }
        Ok(AtomicSum {
            lambdas,
            atoms,
            seed,
            realized: GridFunction::from_values(grid, f)?,
            envelope: g,
        })
    }

    pub fn realized(&self) -> &GridFunction {
        &self.realized
    }

    pub fn envelope(&self) -> &GridFunction {
        &self.envelope
    }

    pub fn manifest(&self, stem: &str) -> AtomicSumManifest {
        AtomicSumManifest {
            atoms: self
                .atoms
                .iter()
                .enumerate()
                .map(|(k, a)| AtomEntry {
                    cube: a.cube,
                    order: a.order,
                    values_ref: format!("{stem}_atom_{k:03}"),
                })
                .collect(),
            lambdas: self.lambdas.clone(),
            seed: self.seed,
        }
    }

    /// Writes `<stem>.json` and one CSV/descriptor pair per atom.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let manifest = self.manifest(stem);
        for (a, e) in self.atoms.iter().zip(&manifest.atoms) {
            a.values.save(dir, &e.values_ref)?;
        }
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// `||M_phi f||_{L^p(w)}`.
pub fn hardy_quasinorm(f: &GridFunction, p: f64, w: &Weight, phi: &Mollifier) -> Result<f64> {
    let m = grand_maximal(f, phi)?;
    weighted_lp_quasinorm(&m, p, &w.cell_values(f.grid())?)
}

/// `||sum lambda_k chi_{Q_k}||_{L^p(w)}`.
pub fn envelope_norm(s: &AtomicSum, p: f64, w: &Weight) -> Result<f64> {
    weighted_lp_quasinorm(&s.envelope, p, &w.cell_values(s.envelope.grid())?)
}

/// Sampling law for random atomic sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyLaw {
    pub count: usize,
    /// Cubes are placed inside this box; its lower corner anchors the lattice.
    pub window: BoxDomain,
    /// Sides are `2^j` for `j` uniform in this inclusive range.
    pub side_levels: (i32, i32),
    /// `lambda` is log-uniform in this range.
    pub lambda_range: (f64, f64),
    #[serde(rename = "N")]
    pub order: usize,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn default_modes() -> usize {
    4
}

impl FamilyLaw {
    fn validate(&self) -> Result<()> {
        let (j0, j1) = self.side_levels;
        if j0 > j1 {
            return Err(Error::EmptyLevelRange(j0, j1));
        }
        if 2f64.powi(j1) > self.window.min_width() {
            return Err(invalid("side_levels", "largest cube does not fit in the window"));
        }
        let (a, b) = self.lambda_range;
        if !(a > 0.0 && b >= a && b.is_finite()) {
            return Err(invalid("lambda_range", "need 0 < lo <= hi"));
        }
        if self.modes == 0 {
            return Err(invalid("modes", "need at least one cosine mode"));
        }
        Ok(())
    }
}

/// One cosine mode `amplitude * cos(pi k . u + phase)` of a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: [u32; 2],
    pub amplitude: f64,
    pub phase: f64,
}

/// Grid-independent description of one random atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomBlueprint {
    pub corner: Vec<f64>,
    pub level: i32,
    pub lambda: f64,
    pub modes: Vec<Mode>,
}

/// Grid-independent random atomic sum; realize it on any grid and scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyBlueprint {
    pub seed: u64,
    pub dim: usize,
    #[serde(rename = "N")]
    pub order: usize,
    pub atoms: Vec<AtomBlueprint>,
}

impl FamilyBlueprint {
    pub fn sample(seed: u64, law: &FamilyLaw) -> Result<Self> {
        law.validate()?;
        let dim = law.window.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = 2f64.powi(law.side_levels.0) / 4.0;
        let (la, lb) = (law.lambda_range.0.ln(), law.lambda_range.1.ln());
        let atoms = (0..law.count)
            .map(|_| {
                let level = rng.gen_range(law.side_levels.0..=law.side_levels.1);
                let side = 2f64.powi(level);
                let corner = (0..dim)
                    .map(|a| {
                        let lo = law.window.lo[a];
                        let room = law.window.hi[a] - side - lo;
                        let t: f64 = rng.gen_range(0.0..=1.0) * room;
                        lo + (t / lattice).floor() * lattice
                    })
                    .collect();
                let lambda = if lb > la { rng.gen_range(la..lb).exp() } else { la.exp() };
                let modes = (0..law.modes)
                    .map(|_| Mode {
                        k: [rng.gen_range(1..=4), if dim == 2 { rng.gen_range(0..=4) } else { 0 }],
                        amplitude: rng.gen_range(0.5..1.0),
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    })
                    .collect();
                AtomBlueprint {
                    corner,
                    level,
                    lambda,
                    modes,
                }
            })
            .collect();
        Ok(FamilyBlueprint {
            seed,
            dim,
            order: law.order,
            atoms,
        })
    }

    /// Realizes every atom on `grid` with all cubes dilated by `dilation`
    /// about the origin; profiles live in cube-relative coordinates.
    pub fn realize(&self, grid: &Grid, dilation: f64) -> Result<AtomicSum> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for b in &self.atoms {
            let q = Cube::from_corner(&b.corner, 2f64.powi(b.level))?.dilate_about_origin(dilation);
            let corner: Vec<f64> = (0..self.dim).map(|a| q.lo(a)).collect();
            let side = q.side();
            let cells = cube_cells(grid, &q);
            let mut values = vec![0.0; grid.len()];
            for &i in &cells {
                let y = grid.center(i);
                let u = [(y[0] - corner[0]) / side, if self.dim == 2 { (y[1] - corner[1]) / side } else { 0.0 }];
                values[i] = b
                    .modes
                    .iter()
                    .map(|m| {
                        m.amplitude
                            * (std::f64::consts::PI * (m.k[0] as f64 * u[0] + m.k[1] as f64 * u[1]) + m.phase).cos()
                    })
                    .sum();
            }
            atoms.push(make_atom(&GridFunction::from_values(grid, values)?, &q, self.order)?);
        }
        let lambdas = self.atoms.iter().map(|b| b.lambda).collect();
        AtomicSum::new(grid, lambdas, atoms, Some(self.seed))
    }
}

/// Random atomic sum on `grid`, deterministic in `seed`.
pub fn random_atomic_family(seed: u64, law: &FamilyLaw, grid: &Grid) -> Result<AtomicSum> {
    FamilyBlueprint::sample(seed, law)?.realize(grid, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(lo: f64, hi: f64, h: f64) -> Grid {
        Grid::new(BoxDomain::interval(lo, hi).unwrap(), h).unwrap()
    }

    #[test]
    fn constant_profile_is_annihilated() {
        let g = line(-1.0, 2.0, 1.0 / 64.0);
        let q = Cube::from_corner(&[0.0], 1.0).unwrap();
        let p = GridFunction::indicator(&g, &q, 1.0);
        assert!(matches!(make_atom(&p, &q, 0), Err(Error::Annihilated)));
        let quad = GridFunction::from_fn(&g, |x| if q.contains(x) { 1.0 + x[0] * x[0] } else { 0.0 }).unwrap();
        assert!(matches!(make_atom(&quad, &q, 2), Err(Error::Annihilated)));
        let outside = GridFunction::indicator(&g, &Cube::from_corner(&[0.5], 1.0).unwrap(), 1.0);
        assert!(matches!(make_atom(&outside, &q, 1), Err(Error::ProfileOutsideCube(_))));
    }

    #[test]
    fn odd_profile_keeps_direction() {
        let g = line(-1.0, 1.0, 1.0 / 64.0);
        let q = Cube::new(&[0.0], 1.0).unwrap();
        let p = GridFunction::from_fn(&g, |x| if q.contains(x) { x[0].powi(3) } else { 0.0 }).unwrap();
        let a = make_atom(&p, &q, 0).unwrap();
        let scale = p.max_abs();
        for (u, v) in a.values().values().iter().zip(p.values()) {
            assert!((u - v / scale).abs() < 1e-14);
        }
        assert_eq!(a.values().max_abs(), 1.0);
    }

    #[test]
    fn moments_vanish_and_match_normal_equations() {
        let g = line(-0.5, 1.5, 1.0 / 128.0);
        let q = Cube::from_corner(&[0.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = GridFunction::zeros(&g);
        let cells = cube_cells(&g, &q);
        for &i in &cells {
            p.values_mut()[i] = rng.gen_range(-1.0..1.0);
        }
        let a = make_atom(&p, &q, 3).unwrap();
        assert!(a.max_scaled_moment() < MOMENT_TOL);
        // least squares with raw monomials in x through the 4 x 4 normal equations
        let xs: Vec<f64> = cells.iter().map(|&i| g.center(i)[0]).collect();
        let ys: Vec<f64> = cells.iter().map(|&i| p.values()[i]).collect();
        let mut gram = [[0.0; 5]; 4];
        for (x, y) in xs.iter().zip(&ys) {
            for r in 0..4 {
                for c in 0..4 {
                    gram[r][c] += x.powi((r + c) as i32);
                }
                gram[r][4] += x.powi(r as i32) * y;
            }
        }
        for col in 0..4 {
            let piv = (col..4).max_by(|&i, &j| gram[i][col].abs().total_cmp(&gram[j][col].abs())).unwrap();
            gram.swap(col, piv);
            for r in 0..4 {
                if r != col {
                    let f = gram[r][col] / gram[col][col];
                    for c in col..5 {
                        gram[r][c] -= f * gram[col][c];
                    }
                }
            }
        }
        let coef: Vec<f64> = (0..4).map(|r| gram[r][4] / gram[r][r]).collect();
        let resid: Vec<f64> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| y - (0..4).map(|k| coef[k] * x.powi(k as i32)).sum::<f64>())
            .collect();
        let sup = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        for (&i, r) in cells.iter().zip(&resid) {
            assert!((a.values().values()[i] - r / sup).abs() < 1e-8);
        }
    }

    #[test]
    fn moments_survive_joint_dilation_2d() {
        let law = FamilyLaw {
            count: 1,
            window: BoxDomain::symmetric(2, 1.0).unwrap(),
            side_levels: (-2, -2),
            lambda_range: (1.0, 1.0),
            order: 2,
            modes: 4,
        };
        let bp = FamilyBlueprint::sample(5, &law).unwrap();
        let g = Grid::new(BoxDomain::symmetric(2, 1.0).unwrap(), 1.0 / 32.0).unwrap();
        for k in [0, 1, 2] {
            let s = 2f64.powi(k);
            let sum = bp.realize(&g.dilate_about_origin(s).unwrap(), s).unwrap();
            assert!(sum.atoms[0].max_scaled_moment() < MOMENT_TOL);
            assert_eq!(sum.atoms[0].values().values(), bp.realize(&g, 1.0).unwrap().atoms[0].values().values());
        }
    }

    #[test]
    fn envelope_examples() {
        let g = line(-1.0, 3.0, 1.0 / 32.0);
        let odd = |q: &Cube| {
            let c = q.center()[0];
            let p = GridFunction::from_fn(&g, |x| if q.contains(x) { x[0] - c } else { 0.0 }).unwrap();
            make_atom(&p, q, 0).unwrap()
        };
        let q = Cube::from_corner(&[0.0], 2.0).unwrap();
        let one = AtomicSum::new(&g, vec![1.0], vec![odd(&q)], None).unwrap();
        let unit = Weight::unit(1).unwrap();
        assert!((envelope_norm(&one, 0.5, &unit).unwrap() - 4.0).abs() < 1e-12);
        let q2 = Cube::from_corner(&[-1.0], 0.5).unwrap();
        let two = AtomicSum::new(&g, vec![2.0, 3.0], vec![odd(&q), odd(&q2)], None).unwrap();
        assert!((envelope_norm(&two, 1.0, &unit).unwrap() - (4.0 + 1.5)).abs() < 1e-12);
        // overlap: envelope 2 on [0,1) and 5 on [1,2)
        let q3 = Cube::from_corner(&[1.0], 1.0).unwrap();
        let ov = AtomicSum::new(&g, vec![2.0, 3.0], vec![odd(&q), odd(&q3)], None).unwrap();
        let direct = (2f64.sqrt() + 5f64.sqrt()).powi(2);
        assert!((envelope_norm(&ov, 0.5, &unit).unwrap() - direct).abs() < 1e-12);
        for (f, e) in ov.realized().values().iter().zip(ov.envelope().values()) {
            assert!(f.abs() <= *e);
        }
    }

    #[test]
    fn random_family_is_deterministic() {
        let law = FamilyLaw {
            count: 50,
            window: BoxDomain::symmetric(1, 1.0).unwrap(),
            side_levels: (-5, -3),
            lambda_range: (0.1, 10.0),
            order: 1,
            modes: 4,
        };
        let g = line(-2.0, 2.0, 1.0 / 256.0);
        let a = random_atomic_family(7, &law, &g).unwrap();
        let b = random_atomic_family(7, &law, &g).unwrap();
        assert_eq!(a.realized().values(), b.realized().values());
        assert_eq!(a.envelope().values(), b.envelope().values());
        for (f, e) in a.realized().values().iter().zip(a.envelope().values()) {
            assert!(f.abs() <= *e);
        }
        let empty = random_atomic_family(7, &FamilyLaw { count: 0, ..law }, &g).unwrap();
        assert!(empty.realized().is_zero());
    }

    #[test]
    fn hardy_quasinorm_basics() {
        let g = line(-4.0, 5.0, 1.0 / 64.0);
        let q = Cube::from_corner(&[0.0], 1.0).unwrap();
        let phi = Mollifier::dyadic(-5, 1).unwrap();
        let unit = Weight::unit(1).unwrap();
        assert_eq!(hardy_quasinorm(&GridFunction::zeros(&g), 1.0, &unit, &phi).unwrap(), 0.0);
        let p = GridFunction::from_fn(&g, |x| if q.contains(x) { (7.0 * x[0]).sin() } else { 0.0 }).unwrap();
        let a = make_atom(&p, &q, 1).unwrap();
        let base = hardy_quasinorm(a.values(), 1.0, &unit, &phi).unwrap();
        let tripled = hardy_quasinorm(&a.values().scale(-3.0), 1.0, &unit, &phi).unwrap();
        assert!((tripled - 3.0 * base).abs() < 1e-12 * base);
        assert!(base.is_finite() && base > 0.0);
    }
}
