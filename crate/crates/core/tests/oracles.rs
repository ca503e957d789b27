use fracharm::atoms::{envelope_norm, hardy_quasinorm, make_atom, FamilyBlueprint, FamilyLaw};
use fracharm::grid::lp_quasinorm;
use fracharm::kernels::{eval_frac_at, KernelSpec};
use fracharm::maximal::{grand_maximal, Mollifier};
use fracharm::varexp::{conjugate, luxemburg_norm, modular, ExponentFunction};
use fracharm::weights::{ap_constant, Weight};
use fracharm::{BoxDomain, Cube, DyadicFamily, Grid, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(lo: f64, hi: f64, h: f64) -> Grid {
    Grid::new(BoxDomain::interval(lo, hi).unwrap(), h).unwrap()
}

fn riesz_at_zero(h: f64) -> f64 {
    let g = line(-0.5, 1.5, h);
    let chi = GridFunction::indicator(&g, &Cube::from_corner(&[0.0], 1.0).unwrap(), 1.0);
    let k = KernelSpec::kenig_stein(1, 1, 0.5, 1).unwrap();
    eval_frac_at(&k, &[&chi], &[0.0]).unwrap()
}

#[test]
fn riesz_quadrature_converges_at_half_order() {
    let errs: Vec<f64> = [8, 9, 10].iter().map(|e| (riesz_at_zero(2f64.powi(-e)) - 2.0).abs()).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.5 - 0.02, "observed order {order}");
    }
}

#[test]
fn midpoint_rule_on_inverse_square_root() {
    let mut prev = f64::INFINITY;
    let mut errs = Vec::new();
    for e in [8, 9, 10] {
        let h = 2f64.powi(-e);
        let g = line(-1.0, 2.0, h);
        let f = GridFunction::from_fn(&g, |x| if (0.0..1.0).contains(&x[0]) { x[0].abs().powf(-0.5) } else { 0.0 }).unwrap();
        let err = (f.integrate() - 2.0).abs();
        assert!(err < prev);
        prev = err;
        errs.push(err);
    }
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 0.5 - 0.02);
    }
}

#[test]
fn riesz_dilation_at_fixed_spacing() {
    // I(f(./2))(2x) = 2^gamma I(f)(x)
    let h = 2f64.powi(-8);
    let g = line(-4.0, 4.0, h);
    let f = |x: f64| if (-0.5..0.75).contains(&x) { 1.0 + x * x } else { 0.0 };
    let base = GridFunction::from_fn(&g, |x| f(x[0])).unwrap();
    let wide = GridFunction::from_fn(&g, |x| f(x[0] / 2.0)).unwrap();
    let k = KernelSpec::kenig_stein(2, 1, 0.5, 1).unwrap();
    for x in [-1.3, 0.1, 0.5, 2.0] {
        let a = eval_frac_at(&k, &[&wide, &wide], &[2.0 * x]).unwrap();
        let b = eval_frac_at(&k, &[&base, &base], &[x]).unwrap();
        assert!((a / (2f64.powf(0.5) * b) - 1.0).abs() < 0.02, "x = {x}");
    }
}

fn corpus(g: &Grid, count: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (a, b, c) = (rng.gen_range(0.5..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(1.0..6.0));
            GridFunction::from_fn(g, |x| a * (-(x[0] - b).powi(2) * c).exp() * (1.0 + 0.5 * (c * x[0]).sin())).unwrap()
        })
        .collect()
}

#[test]
fn luxemburg_matches_lebesgue_for_constant_exponents() {
    let g = line(-3.0, 3.0, 1.0 / 64.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for f in corpus(&g, 20, 2) {
        let p = rng.gen_range(1.0..5.0);
        let e = ExponentFunction::constant(p).unwrap();
        let n = luxemburg_norm(&f, &e).unwrap();
        assert!((n - lp_quasinorm(&f, p).unwrap()).abs() < 1e-6 * n.max(1.0));
        let rho = modular(&f.scale(1.0 / n), &e).unwrap();
        assert!((rho - 1.0).abs() < 1e-5);
    }
}

#[test]
fn generalized_holder_constant() {
    let g = line(-3.0, 3.0, 1.0 / 64.0);
    let q = ExponentFunction::log_decay(1.6, 0.8).unwrap();
    let qs = q.sample(&g).unwrap();
    let dual = ExponentFunction::sampled(qs.map(conjugate)).unwrap();
    let fs = corpus(&g, 10, 3);
    let gs = corpus(&g, 10, 4);
    let mut worst: f64 = 0.0;
    for (f, h) in fs.iter().zip(&gs) {
        let lhs = f.zip_with(h, |a, b| (a * b).abs()).unwrap().integrate();
        let rhs = luxemburg_norm(f, &q).unwrap() * luxemburg_norm(h, &dual).unwrap();
        worst = worst.max(lhs / rhs);
    }
    assert!(worst <= 4.0, "{worst}");
}

#[test]
fn single_atom_hardy_norm_refines() {
    let q = Cube::from_corner(&[0.0], 1.0).unwrap();
    let phi = Mollifier::dyadic(-6, 1).unwrap();
    let unit = Weight::unit(1).unwrap();
    let value = |e: i32| {
        let g = line(-3.0, 4.0, 2f64.powi(-e));
        let p = GridFunction::from_fn(&g, |x| if q.contains(x) { (2.0 * std::f64::consts::PI * x[0]).sin() + x[0] } else { 0.0 })
            .unwrap();
        let a = make_atom(&p, &q, 1).unwrap();
        hardy_quasinorm(a.values(), 1.0, &unit, &phi).unwrap()
    };
    let coarse = value(8);
    let fine = value(9);
    assert!(((coarse - fine) / fine).abs() < 0.01, "{coarse} vs {fine}");
}

#[test]
fn hardy_over_envelope_is_stable() {
    let law = FamilyLaw {
        count: 6,
        window: BoxDomain::interval(-1.0, 1.0).unwrap(),
        side_levels: (-4, -2),
        lambda_range: (0.5, 2.0),
        order: 1,
        modes: 4,
    };
    let phi = Mollifier::dyadic(-7, 0).unwrap();
    let unit = Weight::unit(1).unwrap();
    let g = line(-4.0, 4.0, 2f64.powi(-8));
    let mut ratios = Vec::new();
    for seed in 1..=5u64 {
        let bp = FamilyBlueprint::sample(seed, &law).unwrap();
        for k in [-1, 0, 1] {
            let s = 2f64.powi(k);
            let sum = bp.realize(&g.dilate_about_origin(s).unwrap(), s).unwrap();
            let hardy = hardy_quasinorm(sum.realized(), 1.0, &unit, &phi.dilated(s).unwrap()).unwrap();
            ratios.push(hardy / envelope_norm(&sum, 1.0, &unit).unwrap());
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    for r in &ratios {
        assert!((r / mean - 1.0).abs() <= 0.2, "{ratios:?}");
    }
}

#[test]
fn grand_maximal_dilation_covariance() {
    let g = line(-8.0, 8.0, 2f64.powi(-8));
    let f = |x: f64| if x.abs() < 0.5 { (3.0 * x).cos() } else { 0.0 };
    let base = GridFunction::from_fn(&g, |x| f(x[0])).unwrap();
    let wide = GridFunction::from_fn(&g, |x| f(x[0] / 2.0)).unwrap();
    let phi = Mollifier::dyadic(-5, 0).unwrap();
    let mb = grand_maximal(&base, &phi).unwrap();
    let mw = grand_maximal(&wide, &phi.dilated(2.0).unwrap()).unwrap();
    for x in [-0.7, -0.2, 0.0, 0.3, 1.1] {
        let a = mw.value_at(&[2.0 * x]);
        let b = mb.value_at(&[x]);
        assert!((a - b).abs() < 0.02 * b, "x = {x}: {a} vs {b}");
    }
}

#[test]
fn larger_family_never_lowers_constants() {
    let w = Weight::power(1, 0.5).unwrap();
    let window = BoxDomain::interval(-4.0, 4.0).unwrap();
    let small = DyadicFamily::new(&window, -3, 1, None).unwrap();
    let large = DyadicFamily::new(&window, -6, 1, None).unwrap();
    let a = ap_constant(&w, 2.0, &small).unwrap().value;
    let b = ap_constant(&w, 2.0, &large).unwrap().value;
    assert!(b >= a);
    let mut prev = f64::INFINITY;
    for p in [1.6, 2.0, 3.0, 5.0] {
        let v = ap_constant(&w, p, &large).unwrap().value;
        assert!(v <= prev * (1.0 + 1e-12));
        prev = v;
    }
}
