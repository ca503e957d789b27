//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use fracharm::kernels::{kernel_size_check, kernel_smoothness_check, KernelSpec};
use fracharm::varexp::{luxemburg_norm, modular};
use fracharm::weights::{ap_constant, apq_constant_for, default_p_grid, rh_constant, rw_estimate, RW_CAP};
use fracharm::{BoxDomain, DyadicFamily, GridFunction};
use serde_json::json;

use crate::config::{ExperimentConfig, ExponentSpec, WeightSpec};
use crate::error::{HarnessError, Result};
use crate::experiments::{self, EXPERIMENTS};

#[derive(Debug, Parser)]
#[command(name = "fracharm", version, about = "Numerical checks of weighted inequalities for multilinear fractional operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write `<id>.report.json` and `<id>.trials.csv`.
    Verify {
        experiment: String,
        #[arg(long)]
        config: PathBuf,
        /// Overrides `corpus.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Luxemburg norm of a saved grid function (`<stem>.csv` plus `<stem>.json`).
    Norm {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        stem: String,
        /// A number or an exponent-function object such as
        /// `{"kind":"log-decay","params":{"base":1.2,"amplitude":0.3}}`.
        #[arg(long)]
        exponent: String,
    },
    /// Weight constant on a dyadic family.
    WeightConst {
        /// Weight object such as `{"kind":"power","exponent":0.25}`.
        #[arg(long)]
        weight: String,
        #[arg(long, value_enum)]
        class: WeightClass,
        /// `p` for A_p and A_{p,q}, `s` for RH_s; ignored for r_w.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Half-width of the symmetric window.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = -6)]
        j_min: i32,
        #[arg(long, default_value_t = 0)]
        j_max: i32,
    },
    /// Size and smoothness constants of the Kenig-Stein kernel on sampled points.
    KernelCheck {
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        gamma: f64,
        #[arg(long = "order", default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List experiment ids.
    List,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum WeightClass {
    Ap,
    Rh,
    Apq,
    Rw,
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("FRACHARM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Verify {
            experiment,
            config,
            seed,
            out,
        } => verify(&experiment, &config, seed, &out),
        Command::Norm { dir, stem, exponent } => {
            let f = GridFunction::load(&dir, &stem)?;
            let p = parse_json::<ExponentSpec>("exponent", &exponent)?.to_function()?;
            let norm = luxemburg_norm(&f, &p)?;
            let rho = if norm > 0.0 { modular(&f.scale(1.0 / norm), &p)? } else { 0.0 };
            print_json(&json!({ "norm": norm, "modular_at_norm": rho }))
        }
        Command::WeightConst {
            weight,
            class,
            p,
            gamma,
            dim,
            radius,
            j_min,
            j_max,
        } => {
            let w = parse_json::<WeightSpec>("weight", &weight)?.to_weight(dim)?;
            let family = DyadicFamily::new(&BoxDomain::symmetric(dim, radius)?, j_min, j_max, None)?;
            let value = match class {
                WeightClass::Ap => serde_json::to_value(ap_constant(&w, p, &family)?)?,
                WeightClass::Rh => serde_json::to_value(rh_constant(&w, p, &family)?)?,
                WeightClass::Apq => serde_json::to_value(apq_constant_for(&w, p, gamma, &family)?)?,
                WeightClass::Rw => json!({ "r_w": rw_estimate(&w, &family, &default_p_grid(8.0), RW_CAP)? }),
            };
            print_json(&value)
        }
        Command::KernelCheck {
            m,
            n,
            gamma,
            order,
            samples,
            seed,
        } => {
            let k = KernelSpec::kenig_stein(m, n, gamma, order)?;
            let size = kernel_size_check(&k, samples, seed)?;
            let smooth = kernel_smoothness_check(&k, order, samples, None, true, seed)?;
            print_json(&json!({ "size_constant": size, "smoothness": smooth }))
        }
        Command::List => {
            for (id, about) in EXPERIMENTS {
                println!("{id:<16} {about}");
            }
            Ok(0)
        }
    }
}

fn verify(id: &str, path: &Path, seed: Option<u64>, out: &Path) -> Result<i32> {
    if !EXPERIMENTS.iter().any(|(e, _)| *e == id) {
        return Err(HarnessError::UnknownExperiment(id.to_string()));
    }
    let cfg = ExperimentConfig::load(path)?;
    let seed = seed.unwrap_or(cfg.corpus.seed);
    let report = match experiments::run(id, &cfg, seed) {
        Ok(r) => r,
        Err(HarnessError::Hypothesis(reason)) => {
            std::fs::create_dir_all(out)?;
            let file = out.join(format!("{id}.rejection.json"));
            let body = json!({ "experiment": id, "seed": seed, "rejected": reason });
            std::fs::write(&file, serde_json::to_string_pretty(&body)?)?;
            eprintln!("hypothesis rejected: {reason}");
            eprintln!("wrote {}", file.display());
            return Ok(1);
        }
        Err(e) => return Err(e),
    };
    let (json_path, csv_path) = report.save(out)?;
    let pass = report.all_pass();
    println!(
        "{id}: {} (max ratio {:.6e}, slope {:+.4}, {} trials)",
        if pass { "PASS" } else { "FAIL" },
        report.max_ratio,
        report.trend_slope,
        report.trials.len()
    );
    for name in report.failed_checks() {
        println!("  failed: {name}");
    }
    println!("wrote {}", json_path.display());
    println!("wrote {}", csv_path.display());
    Ok(if pass { 0 } else { 1 })
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &'static str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| HarnessError::Field {
        field: what,
        reason: e.to_string(),
    })
}

fn print_json(v: &serde_json::Value) -> Result<i32> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(0)
}
