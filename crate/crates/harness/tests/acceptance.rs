//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fracharm::kernels::{eval_frac_at, KernelSpec};
use fracharm::maximal::MaximalConfig;
use fracharm::varexp::{
    derive_system, iterate_probes, luxemburg_norm, maximal_opnorm_estimate, modular, rubio_properties_check,
    ExponentFunction, ExtrapolationExponentSystem,
};
use fracharm::{BoxDomain, Cube, DyadicFamily, Grid, GridFunction};
use fracharm_harness::config::{ExperimentConfig, ExponentSpec, WeightSpec};
use fracharm_harness::experiments::run;
use fracharm_harness::{HarnessError, RatioReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Quadrature oracles
const QUAD_REL: f64 = 0.01;
const QUAD_BUDGET: Duration = Duration::from_secs(30);
// Luxemburg consistency
const NORM_REL: f64 = 1e-6;
const MODULAR_TOL: f64 = 1e-5;
const NORM_BUDGET: Duration = Duration::from_secs(10);
// Exponent algebra
const THETA_TOL: f64 = 1e-12;
const ALGEBRA_BUDGET: Duration = Duration::from_secs(5);
// Rubio iteration
const RUBIO_K: usize = 8;
const RUBIO_BUDGET: Duration = Duration::from_secs(60);
// Experiments
const SINGLE_CUBE_REL: f64 = 0.02;
const SINGLE_ATOM_SPREAD: f64 = 0.05;
const LEMMA_BUDGET: Duration = Duration::from_secs(300);
const THEOREM_BUDGET: Duration = Duration::from_secs(900);
const VAR_BUDGET: Duration = Duration::from_secs(1200);
const DEGENERATION_REL: f64 = 1e-6;
const DILATION_TOL: f64 = 0.1;

/// Named sub-checks of one criterion.
#[derive(Default)]
struct Gate {
    items: Vec<(String, bool, String)>,
}

impl Gate {
    fn check(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.items.push((name.into(), ok, detail.into()));
    }

    fn budget(&mut self, start: Instant, budget: Duration) {
        let t = start.elapsed();
        self.check("runtime", t <= budget, format!("{:.1} s of {} s", t.as_secs_f64(), budget.as_secs()));
    }

    fn report(&mut self, name: &str, r: &RatioReport) {
        let failed = r.failed_checks().join("; ");
        let stab = r
            .stability
            .as_ref()
            .map_or(String::new(), |s| format!(", half-h change {:.3}", s.relative_change));
        self.check(
            name,
            r.all_pass(),
            format!(
                "max {:.4e}, slope {:+.4}, {} trials{stab}{}",
                r.max_ratio,
                r.trend_slope,
                r.trials.len(),
                if failed.is_empty() { String::new() } else { format!(", failed: {failed}") }
            ),
        );
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"));
    ExperimentConfig::load(&path).expect("shipped config parses")
}

fn power(exponent: f64) -> WeightSpec {
    WeightSpec::Power { exponent, center: None }
}

fn line(lo: f64, hi: f64, h: f64) -> Grid {
    Grid::new(BoxDomain::interval(lo, hi).unwrap(), h).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn c1_quadrature(g: &mut Gate) {
    let start = Instant::now();
    let chi = |h: f64| {
        let grid = line(-0.5, 1.5, h);
        GridFunction::indicator(&grid, &Cube::from_corner(&[0.0], 1.0).unwrap(), 1.0)
    };
    let f = chi(2f64.powi(-10));
    let k = KernelSpec::kenig_stein(1, 1, 0.5, 1).unwrap();
    let v = eval_frac_at(&k, &[&f], &[0.0]).unwrap();
    g.check("I_1/2 chi(0) = 2", rel(v, 2.0) <= QUAD_REL, format!("{v:.6} (rel {:.2e})", rel(v, 2.0)));
    g.budget(start, QUAD_BUDGET);

    let start = Instant::now();
    let f = chi(2f64.powi(-8));
    let k = KernelSpec::kenig_stein(2, 1, 1.0, 1).unwrap();
    let v = eval_frac_at(&k, &[&f, &f], &[0.0]).unwrap();
    let exact = 2.0 * 2f64.ln();
    g.check("I_1(chi, chi)(0) = 2 ln 2", rel(v, exact) <= QUAD_REL, format!("{v:.6} (rel {:.2e})", rel(v, exact)));
    g.budget(start, QUAD_BUDGET);
}

/// Step function on disjoint lattice intervals with its closed-form `L^p` norm.
fn step_function(grid: &Grid, rng: &mut ChaCha8Rng, p: f64) -> (GridFunction, f64) {
    let cells = grid.len();
    let pieces = rng.gen_range(1..=4);
    let mut cuts: Vec<usize> = (0..2 * pieces).map(|_| rng.gen_range(0..=cells)).collect();
    cuts.sort_unstable();
    let h = grid.h();
    let lo = grid.bounds().lo[0];
    let mut values = vec![0.0; cells];
    let mut sum = 0.0;
    for pair in cuts.chunks(2) {
        let c: f64 = rng.gen_range(0.2..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let (a, b) = (lo + pair[0] as f64 * h, lo + pair[1] as f64 * h);
        sum += c.abs().powf(p) * (b - a);
        values[pair[0]..pair[1]].fill(c);
    }
    if sum == 0.0 {
        values[0] = 1.0;
        sum = h;
    }
    (GridFunction::from_values(grid, values).unwrap(), sum.powf(1.0 / p))
}

fn c2_luxemburg(g: &mut Gate) {
    let start = Instant::now();
    let grid = line(-2.0, 2.0, 2f64.powi(-6));
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let variable = ExponentFunction::log_decay(1.2, 0.3).unwrap();
    let (mut worst_norm, mut worst_rho, mut worst_var): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..20 {
        let p = rng.gen_range(1.0..5.0);
        let (f, exact) = step_function(&grid, &mut rng, p);
        let pe = ExponentFunction::constant(p).unwrap();
        let norm = luxemburg_norm(&f, &pe).unwrap();
        worst_norm = worst_norm.max(rel(norm, exact));
        worst_rho = worst_rho.max((modular(&f.scale(1.0 / norm), &pe).unwrap() - 1.0).abs());
        let vn = luxemburg_norm(&f, &variable).unwrap();
        worst_var = worst_var.max((modular(&f.scale(1.0 / vn), &variable).unwrap() - 1.0).abs());
    }
    g.check("constant-exponent norm = closed-form L^p", worst_norm <= NORM_REL, format!("max rel {worst_norm:.2e}"));
    g.check("rho(f/||f||) = 1, constant p", worst_rho <= MODULAR_TOL, format!("max {worst_rho:.2e}"));
    g.check("rho(f/||f||) = 1, log-decay p(.)", worst_var <= MODULAR_TOL, format!("max {worst_var:.2e}"));
    g.budget(start, NORM_BUDGET);
}

fn systems() -> Vec<ExtrapolationExponentSystem> {
    let c = |v: f64| ExponentFunction::constant(v).unwrap();
    let l = |b: f64, a: f64| ExponentFunction::log_decay(b, a).unwrap();
    vec![
        derive_system(&[c(2.0), c(3.0)], &[1.0, 1.5], 0.5, 1).unwrap(),
        derive_system(&[c(3.0), c(3.0), c(4.0)], &[1.5, 1.5, 2.0], 0.6, 1).unwrap(),
        derive_system(&[l(1.8, 0.3), l(2.2, 0.2)], &[1.2, 1.5], 0.5, 1).unwrap(),
        derive_system(&[l(2.5, 0.5), l(2.5, 0.5)], &[1.5, 1.5], 1.0, 2).unwrap(),
        derive_system(&[c(2.5), l(3.0, 0.4)], &[1.2, 2.0], 0.4, 2).unwrap(),
    ]
}

fn c3_exponent_algebra(g: &mut Gate) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (i, sys) in systems().iter().enumerate() {
        let n = sys.n;
        let mut theta: f64 = 0.0;
        let mut sigma_floor = f64::INFINITY;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(-3.0..2.0)) * rng.gen_range(-1.0..1.0)).collect();
            let pe = sys.at(&x);
            theta = theta.max((pe.theta.iter().sum::<f64>() - 1.0).abs());
            sigma_floor = pe.sigma.iter().cloned().fold(sigma_floor, f64::min);
        }
        let grid = Grid::new(BoxDomain::symmetric(n, 4.0).unwrap(), if n == 1 { 2f64.powi(-6) } else { 2f64.powi(-3) }).unwrap();
        let cert = sys.certificate(&grid).unwrap();
        let minus = cert.sigma_minus.iter().cloned().fold(f64::INFINITY, f64::min);
        g.check(format!("system {i}: sum theta = 1"), theta <= THETA_TOL, format!("{theta:.1e}"));
        g.check(
            format!("system {i}: [sigma]- > 1 certificate"),
            cert.admissible && minus > 1.0 && sigma_floor >= minus - 1e-12,
            format!("[sigma]- {minus:.4}, sampled min {sigma_floor:.4}"),
        );
    }
    g.budget(start, ALGEBRA_BUDGET);
}

fn c4_rubio(g: &mut Gate) {
    let start = Instant::now();
    let grid = line(-2.0, 2.0, 2f64.powi(-7));
    let cfg = MaximalConfig::for_grid(&grid);
    let family = DyadicFamily::for_grid(&grid, -5, 1).unwrap();
    let sys = &systems()[2];
    let sigma = sys.sigma_exponent(0, &grid).unwrap();
    let probes = [
        GridFunction::indicator(&grid, &Cube::from_corner(&[-0.25], 0.5).unwrap(), 1.0),
        GridFunction::from_fn(&grid, |x| (-8.0 * x[0] * x[0]).exp()).unwrap(),
        GridFunction::from_fn(&grid, |x| if x[0].abs() < 1.0 { x[0].abs().powf(-0.3) } else { 0.0 }).unwrap(),
    ];
    let (p_over_q, rh_s) = (sys.p[0] / sys.q_i[0], sys.q_i[0] / sys.p[0]);
    for (i, h) in probes.iter().enumerate() {
        let a = maximal_opnorm_estimate(&sigma, &iterate_probes(h, RUBIO_K, &cfg).unwrap(), &cfg).unwrap().a;
        let r = rubio_properties_check(h, &sigma, a, RUBIO_K, &cfg, &family, p_over_q, rh_s).unwrap();
        g.check(format!("h{i}: h <= R h"), r.property1, format!("margin {:.3e}", r.domination_margin));
        g.check(format!("h{i}: ||R h|| <= 2 ||h||"), r.property2, format!("ratio {:.4}, A = {a:.3}", r.norm_ratio));
        g.check(
            format!("h{i}: [R h]_A1 <= 2A (1 + tail)"),
            r.property3,
            format!("{:.4} vs {:.4} (tail {:.1e})", r.a1_estimate, r.a1_bound, r.tail_tol),
        );
    }
    g.budget(start, RUBIO_BUDGET);
}

fn single_cube(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.corpus.count = 1;
    cfg.corpus.atoms = 1;
    cfg.corpus.window = BoxDomain::interval(0.0, 1.0).unwrap();
    cfg.corpus.side_levels = (0, 0);
    cfg.corpus.lambda_range = (1.0, 1.0);
    cfg.sweep.trials = 1;
    cfg.tolerances.stability_trials = 0;
    cfg
}

fn c5_lemmas(g: &mut Gate) {
    let start = Instant::now();
    for id in ["lemma22", "lemma23"] {
        for (label, weights) in [("w = 1", vec![]), ("w = |x|^1/4", vec![power(0.25)])] {
            let mut cfg = config(id);
            cfg.weights = weights;
            let r = run(id, &cfg, cfg.corpus.seed).unwrap();
            g.report(&format!("{id}, {label}"), &r);
        }
    }
    let r = run("lemma22", &single_cube(config("lemma22")), 0).unwrap();
    let worst = r.trials.iter().map(|t| rel(t.ratio, 2f64.sqrt())).fold(0.0, f64::max);
    g.check("lemma22 single cube ratio sqrt 2", worst <= SINGLE_CUBE_REL, format!("max rel {worst:.2e} over {} scales", r.trials.len()));
    // LHS^2 = 2 int_1^inf t^-5 dt = 1/2 off Q* = [-0.5, 1.5], RHS = 1
    let r = run("lemma23", &single_cube(config("lemma23")), 0).unwrap();
    let exact = 0.5f64.sqrt();
    let worst = r.trials.iter().map(|t| rel(t.ratio, exact)).fold(0.0, f64::max);
    g.check("lemma23 single cube closed form", worst <= SINGLE_CUBE_REL, format!("max rel {worst:.2e} over {} scales", r.trials.len()));
    let mut low = config("lemma23");
    low.params.epsilon = Some(1.0);
    let rejected = matches!(run("lemma23", &low, 0), Err(HarnessError::Hypothesis(_)));
    g.check("lemma23 epsilon below threshold rejected", rejected, "");
    g.budget(start, LEMMA_BUDGET);
}

fn c6_theorem(g: &mut Gate) {
    let start = Instant::now();
    let base = config("theorem-main");
    let r = run("theorem-main", &base, base.corpus.seed).unwrap();
    g.report("w_i = 1, gamma = 1/2, q = 2/3", &r);
    let q = r.diagnostics["q"].as_f64().unwrap();
    g.check("q = 2/3", (q - 2.0 / 3.0).abs() < 1e-12, format!("{q}"));
    g.check("half-h stability gate ran", r.stability.is_some(), "");

    let mut cfg = base.clone();
    cfg.weights = vec![power(0.25), power(-0.125)];
    g.report("power weights |x|^1/4, |x|^-1/8", &run("theorem-main", &cfg, cfg.corpus.seed).unwrap());

    let mut cfg = base.clone();
    cfg.gamma = 1.5;
    g.report("gamma = 3/2 > n", &run("theorem-main", &cfg, cfg.corpus.seed).unwrap());

    let mut cfg = base.clone();
    cfg.corpus.atoms = 1;
    cfg.corpus.count = 20;
    cfg.sweep.trials = 20;
    cfg.tolerances.stability_trials = 0;
    let r = run("theorem-main", &cfg, cfg.corpus.seed).unwrap();
    g.check(
        "single-atom dilation invariance",
        r.sweep_spread <= SINGLE_ATOM_SPREAD,
        format!("spread {:.2e}, slope {:+.2e}", r.sweep_spread, r.trend_slope),
    );
    g.budget(start, THEOREM_BUDGET);
}

fn c7_asymmetric(g: &mut Gate) {
    let start = Instant::now();
    for (label, weights) in [("w_i = 1", vec![]), ("power weights", vec![power(0.25), power(-0.125)])] {
        let mut cfg = config("theorem-main");
        cfg.q_i = Some(vec![1.0 / 0.9, 1.0 / 0.6]);
        cfg.weights = weights;
        let r = run("theorem-main", &cfg, cfg.corpus.seed).unwrap();
        let qs: Vec<f64> = serde_json::from_value(r.diagnostics["q_i"].clone()).unwrap();
        let q = r.diagnostics["q"].as_f64().unwrap();
        let residual = (qs.iter().map(|v| 1.0 / v).sum::<f64>() - 1.0 / q).abs();
        g.check(format!("{label}: q_1 != q_2, sum 1/q_i = 1/q"), qs[0] != qs[1] && residual < 1e-12, format!("{qs:?}"));
        g.report(&format!("asymmetric q_i, {label}"), &r);
    }
    g.budget(start, THEOREM_BUDGET);
}

fn c8_variable(g: &mut Gate) {
    let start = Instant::now();
    let cfg = config("var-theorem");
    g.report("p_i(x) = 1.2 + 0.3/log(e + |x|)", &run("var-theorem", &cfg, cfg.corpus.seed).unwrap());

    let mut constant = cfg.clone();
    constant.exponents = vec![ExponentSpec::Constant(1.0), ExponentSpec::Constant(1.0)];
    let mut fixed = config("theorem-main");
    fixed.corpus = constant.corpus.clone();
    fixed.grid = constant.grid.clone();
    fixed.sweep = constant.sweep.clone();
    fixed.tolerances.stability_trials = 0;
    fixed.params.mollifier_levels = constant.params.mollifier_levels;
    let a = run("var-theorem", &constant, constant.corpus.seed).unwrap();
    let b = run("theorem-main", &fixed, fixed.corpus.seed).unwrap();
    let worst = a
        .trials
        .iter()
        .zip(&b.trials)
        .map(|(x, y)| rel(x.lhs, y.lhs).max(rel(x.rhs, y.rhs)).max(rel(x.ratio, y.ratio)))
        .fold(0.0, f64::max);
    g.check(
        "constant exponents match theorem-main per trial",
        a.trials.len() == b.trials.len() && worst <= DEGENERATION_REL,
        format!("max rel {worst:.2e} over {} trials", a.trials.len()),
    );
    g.budget(start, VAR_BUDGET);
}

fn c9_pointwise(g: &mut Gate) {
    let cfg = config("diagnostics");
    let r = run("diagnostics", &cfg, cfg.corpus.seed).unwrap();
    let count = r.diagnostics["configurations"].as_u64().unwrap();
    g.check("20 configurations", count == 20, format!("{count}"));
    for c in &r.checks {
        g.check(&c.name, c.pass, format!("{:.3e} (bound {:.1e})", c.value, c.bound));
    }
    g.check("drift tolerance is 10%", (fracharm_harness::experiments::diagnostics::DILATION_TOL - DILATION_TOL).abs() < 1e-15, "");
    let cfg = config("annuli");
    let r = run("annuli", &cfg, cfg.corpus.seed).unwrap();
    let s = cfg.params.s;
    let (c1, c2) = (r.diagnostics["c1"].as_f64().unwrap(), r.diagnostics["c2"].as_f64().unwrap());
    g.check(
        "annuli constants in [3^-s, 3^s]",
        c1 >= 3f64.powf(-s) * (1.0 - 1e-12) && c2 <= 3f64.powf(s) * (1.0 + 1e-12),
        format!("[{c1:.4}, {c2:.4}], s = {s}"),
    );
    g.report("annuli j, l and dilation independence", &r);
}

fn verify_csv(out: &Path, threads: &str, cfg: &Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_fracharm"))
        .args(["verify", "theorem-main", "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .env("FRACHARM_THREADS", threads)
        .output()
        .unwrap();
    assert!(status.status.code().is_some());
    std::fs::read(out.join("theorem-main.trials.csv")).unwrap()
}

fn c10_determinism(g: &mut Gate) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("theorem-main");
    cfg.corpus.count = 8;
    cfg.sweep.trials = 2;
    cfg.tolerances.stability_trials = 0;
    let path: PathBuf = dir.path().join("cfg.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = verify_csv(&a, "1", &path);
    let second = verify_csv(&b, "2", &path);
    g.check("trial CSV byte-identical across runs", !first.is_empty() && first == second, format!("{} bytes", first.len()));
    let header = String::from_utf8_lossy(&first).lines().next().unwrap_or_default().to_string();
    g.check("CSV columns", header == "trial,scale_k,lhs,rhs,ratio", header);
}

fn main() {
    let criteria: [(&str, &str, fn(&mut Gate)); 10] = [
        ("C1", "quadrature oracles", c1_quadrature),
        ("C2", "Luxemburg-norm consistency", c2_luxemburg),
        ("C3", "exponent algebra", c3_exponent_algebra),
        ("C4", "Rubio iteration", c4_rubio),
        ("C5", "cube-sum and tail-sum lemmas", c5_lemmas),
        ("C6", "weighted Hardy bound for T_gamma", c6_theorem),
        ("C7", "asymmetric q_i", c7_asymmetric),
        ("C8", "variable-exponent bound", c8_variable),
        ("C9", "pointwise diagnostics and annuli", c9_pointwise),
        ("C10", "determinism", c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, title, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| id == p || title.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let mut gate = Gate::default();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut gate)));
        let secs = start.elapsed().as_secs_f64();
        let pass = outcome.is_ok() && gate.items.iter().all(|(_, ok, _)| *ok);
        println!("[{}] {id} {title} ({secs:.1} s)", if pass { "PASS" } else { "FAIL" });
        for (name, ok, detail) in &gate.items {
            println!("    {} {name}: {detail}", if *ok { "ok  " } else { "FAIL" });
        }
        if outcome.is_err() {
            println!("    FAIL panicked");
        }
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
