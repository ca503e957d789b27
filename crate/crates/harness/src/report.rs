//! Ratio reports and their files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::GridSpec;
use crate::error::Result;

/// One row of the per-trial CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial: usize,
    pub scale_k: i32,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl Trial {
    pub fn new(trial: usize, scale_k: i32, lhs: f64, rhs: f64) -> Self {
        Trial {
            trial,
            scale_k,
            lhs,
            rhs,
            ratio: lhs / rhs,
        }
    }
}

/// A named measured quantity compared against a bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    /// Passes when `value >= bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            pass: value >= bound,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            bound: 1.0,
            pass: ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub trials: usize,
    pub h: f64,
    pub max_ratio: f64,
    pub half_h_max_ratio: f64,
    pub relative_change: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub experiment: String,
    pub seed: u64,
    pub grid: GridSpec,
    /// Hypotheses verified before the run.
    pub hypotheses: Vec<Check>,
    pub trials: Vec<Trial>,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub min_ratio: f64,
    /// Pooled within-trial least-squares slope of `ln ratio` against `k ln 2`.
    pub trend_slope: f64,
    pub slope_tol: f64,
    /// Largest `max/min - 1` of the ratio across one trial's sweep.
    pub sweep_spread: f64,
    pub all_rhs_positive: bool,
    pub pass: bool,
    /// Experiment-specific checks; each must pass for a zero exit code.
    pub checks: Vec<Check>,
    pub stability: Option<Stability>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl RatioReport {
    pub fn new(experiment: &str, seed: u64, grid: GridSpec, hypotheses: Vec<Check>, trials: Vec<Trial>, slope_tol: f64) -> Self {
        let ratios: Vec<f64> = trials.iter().map(|t| t.ratio).collect();
        let max_ratio = ratios.iter().cloned().fold(f64::NEG_INFINITY, nan_max);
        let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, nan_min);
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
        let all_rhs_positive = trials.iter().all(|t| t.rhs > 0.0);
        let trend_slope = trend_slope(&trials);
        let sweep_spread = sweep_spread(&trials);
        let pass = all_rhs_positive && max_ratio.is_finite() && trend_slope.abs() <= slope_tol;
        RatioReport {
            experiment: experiment.to_string(),
            seed,
            grid,
            hypotheses,
            trials,
            max_ratio,
            mean_ratio,
            min_ratio,
            trend_slope,
            slope_tol,
            sweep_spread,
            all_rhs_positive,
            pass,
            checks: Vec::new(),
            stability: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn diagnostic(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.diagnostics.insert(key.to_string(), v);
    }

    /// Every pass flag in the report.
    pub fn all_pass(&self) -> bool {
        self.pass
            && self.hypotheses.iter().all(|c| c.pass)
            && self.checks.iter().all(|c| c.pass)
            && self.stability.as_ref().is_none_or(|s| s.pass)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.hypotheses
            .iter()
            .chain(&self.checks)
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for t in &self.trials {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<id>.report.json` and `<id>.trials.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{}.report.json", self.experiment));
        let csv = dir.join(format!("{}.trials.csv", self.experiment));
        std::fs::write(&json, serde_json::to_string_pretty(self)?)?;
        self.write_csv(std::fs::File::create(&csv)?)?;
        Ok((json, csv))
    }
}

// NaN poisons the extremes so a broken trial cannot hide.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn nan_min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.min(b)
    }
}

fn by_trial(trials: &[Trial]) -> BTreeMap<usize, Vec<&Trial>> {
    let mut groups: BTreeMap<usize, Vec<&Trial>> = BTreeMap::new();
    for t in trials {
        groups.entry(t.trial).or_default().push(t);
    }
    groups
}

/// Slope of `ln ratio` on `ln 2^k` after removing each trial's mean, so the
/// corpus spread of constants does not leak into the trend. Zero without a sweep.
pub fn trend_slope(trials: &[Trial]) -> f64 {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for group in by_trial(trials).values() {
        if group.len() < 2 {
            continue;
        }
        let xs: Vec<f64> = group.iter().map(|t| t.scale_k as f64 * std::f64::consts::LN_2).collect();
        let ys: Vec<f64> = group.iter().map(|t| t.ratio.ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

pub fn sweep_spread(trials: &[Trial]) -> f64 {
    by_trial(trials)
        .values()
        .filter(|g| g.len() > 1)
        .map(|g| {
            let hi = g.iter().map(|t| t.ratio).fold(f64::NEG_INFINITY, f64::max);
            let lo = g.iter().map(|t| t.ratio).fold(f64::INFINITY, f64::min);
            hi / lo - 1.0
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fracharm::BoxDomain;

    fn grid() -> GridSpec {
        GridSpec {
            bounds: BoxDomain::interval(-1.0, 1.0).unwrap(),
            h: 0.125,
        }
    }

    #[test]
    fn slope_recovers_power_law_and_ignores_offsets() {
        // ratio_t(k) = c_t 2^(0.3 k)
        let mut trials = Vec::new();
        for (t, c) in [1.0, 5.0, 40.0].iter().enumerate() {
            for k in -3..=3 {
                trials.push(Trial::new(t, k, c * 2f64.powf(0.3 * k as f64), 1.0));
            }
        }
        assert!((trend_slope(&trials) - 0.3).abs() < 1e-12);
        let r = RatioReport::new("x", 0, grid(), vec![], trials, 0.1);
        assert!(!r.pass);
        assert!((r.sweep_spread - (2f64.powf(1.8) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn pass_contract() {
        let flat: Vec<Trial> = (0..4).map(|t| Trial::new(t, 0, 1.0 + t as f64, 2.0)).collect();
        assert!(RatioReport::new("x", 0, grid(), vec![], flat.clone(), 0.1).pass);
        let mut bad = flat.clone();
        bad.push(Trial::new(9, 0, 1.0, 0.0));
        assert!(!RatioReport::new("x", 0, grid(), vec![], bad, 0.1).pass);
        let mut nan = flat;
        nan.push(Trial::new(9, 0, f64::NAN, 1.0));
        let r = RatioReport::new("x", 0, grid(), vec![], nan, 0.1);
        assert!(r.max_ratio.is_nan() && !r.pass);
    }

    #[test]
    fn csv_has_contract_columns() {
        let r = RatioReport::new("x", 0, grid(), vec![], vec![Trial::new(0, -1, 1.5, 3.0)], 0.1);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "trial,scale_k,lhs,rhs,ratio\n0,-1,1.5,3.0,0.5\n");
    }
}
