//! Experiment configuration, read from JSON.

use std::path::Path;

use fracharm::atoms::FamilyLaw;
use fracharm::varexp::ExponentFunction;
use fracharm::weights::Weight;
use fracharm::{BoxDomain, DyadicFamily, Grid};
use serde::{Deserialize, Serialize};

use crate::error::{field, HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must match the id given on the command line.
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    pub gamma: f64,
    /// One exponent per slot: a number or an exponent-function object.
    pub exponents: Vec<ExponentSpec>,
    /// Per-slot target exponents with `sum 1/q_i = 1/q`; defaults to `(q/p) p_i`.
    #[serde(default)]
    pub q_i: Option<Vec<f64>>,
    /// One weight per slot; empty means unweighted.
    #[serde(default)]
    pub weights: Vec<WeightSpec>,
    pub corpus: CorpusSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub params: Params,
}

fn default_m() -> usize {
    2
}

fn default_n() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentSpec {
    Constant(f64),
    Variable(ExponentFunction),
}

impl ExponentSpec {
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ExponentSpec::Constant(p) => Some(*p),
            ExponentSpec::Variable(ExponentFunction::Constant { value }) => Some(*value),
            ExponentSpec::Variable(_) => None,
        }
    }

    pub fn to_function(&self) -> Result<ExponentFunction> {
        Ok(match self {
            ExponentSpec::Constant(p) => ExponentFunction::constant(*p)?,
            ExponentSpec::Variable(f) => f.clone().validated()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    Unit,
    Constant {
        value: f64,
    },
    /// `|x - center|^exponent`, centered at the origin by default.
    Power {
        exponent: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

impl WeightSpec {
    pub fn to_weight(&self, n: usize) -> Result<Weight> {
        Ok(match self {
            WeightSpec::Unit => Weight::unit(n)?,
            WeightSpec::Constant { value } => Weight::constant(n, *value)?,
            WeightSpec::Power { exponent, center } => match center {
                Some(c) if c.len() != n => return Err(field("weights", format!("center has dimension {}, need {n}", c.len()))),
                Some(c) => Weight::power_at(c, *exponent)?,
                None => Weight::power(n, *exponent)?,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    /// Number of trials.
    pub count: usize,
    /// Atoms (or cubes) per function.
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    pub window: BoxDomain,
    pub side_levels: (i32, i32),
    #[serde(default = "default_lambda")]
    pub lambda_range: (f64, f64),
    /// Moment order; derived from the weights when absent.
    #[serde(default, rename = "N")]
    pub order: Option<usize>,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn default_atoms() -> usize {
    3
}

fn default_lambda() -> (f64, f64) {
    (0.5, 2.0)
}

fn default_modes() -> usize {
    4
}

impl CorpusSpec {
    pub fn law(&self, count: usize, order: usize) -> FamilyLaw {
        FamilyLaw {
            count,
            window: self.window.clone(),
            side_levels: self.side_levels,
            lambda_range: self.lambda_range,
            order,
            modes: self.modes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "box")]
    pub bounds: BoxDomain,
    pub h: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Ok(Grid::new(self.bounds.clone(), self.h)?)
    }
}

/// Dilation exponents `k` in `[k_min, k_max]`, applied to the first `trials` corpus entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub k_min: i32,
    pub k_max: i32,
    pub trials: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            k_min: -3,
            k_max: 3,
            trials: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub slope_tol: f64,
    /// Allowed relative change of the max ratio when `h` is halved.
    pub stability: f64,
    /// Trials rerun at `h/2`; 0 disables the gate.
    pub stability_trials: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            slope_tol: 0.1,
            stability: 0.1,
            stability_trials: 0,
        }
    }
}

/// Experiment-specific knobs; each experiment reads the ones it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Decay exponent of the tail sums (lemma23).
    pub epsilon: Option<f64>,
    /// Power in the annuli equivalence.
    pub s: f64,
    /// Number of rings scanned (annuli).
    pub rings: usize,
    /// Inner vector exponent (fefferman-stein).
    pub r: f64,
    /// Functions per vector (fefferman-stein).
    pub functions: usize,
    /// Use `M_gamma` and the `(L^p(w^p), L^q(w^q))` pairing (fefferman-stein).
    pub fractional: bool,
    /// Number of trailing `L^infinity` slots (endpoint).
    pub bounded_slots: usize,
    /// Constant values of the bounded slots; random bounded functions when absent.
    pub bounded_values: Option<Vec<f64>>,
    /// Mollifier scales `2^j`, inclusive.
    pub mollifier_levels: (i32, i32),
    /// Dyadic levels of the family used for weight constants.
    pub constants_levels: (i32, i32),
    /// Number of truncation heights `R` (var-theorem).
    pub truncations: usize,
    /// Constant lower exponents `p_i < [p_i(.)]_-` (extrapolation).
    pub p_lower: Vec<f64>,
    /// Rubio iteration depth.
    pub iterations: usize,
    /// Trials that also run the pointwise diagnostics (theorem runs).
    pub diagnostic_trials: usize,
    /// Cells per smallest side in the G1 check.
    pub resolution: u32,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            epsilon: None,
            s: 2.0,
            rings: 4,
            r: 2.0,
            functions: 8,
            fractional: false,
            bounded_slots: 1,
            bounded_values: None,
            mollifier_levels: (-5, 0),
            constants_levels: (-6, 0),
            truncations: 5,
            p_lower: Vec::new(),
            iterations: 8,
            diagnostic_trials: 4,
            resolution: 6,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| HarnessError::Config {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path)
    }

    /// Basic shape checks shared by every experiment.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > 2 {
            return Err(field("n", format!("dimension {} unsupported (1 or 2)", self.n)));
        }
        if self.m == 0 {
            return Err(field("m", "need at least one slot"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(field("gamma", "must be finite and non-negative"));
        }
        if self.grid.bounds.dim() != self.n || self.corpus.window.dim() != self.n {
            return Err(field("grid", "box and corpus window must have dimension n"));
        }
        if self.sweep.k_min > self.sweep.k_max {
            return Err(field("sweep", "k_min exceeds k_max"));
        }
        if self.corpus.count == 0 {
            return Err(field("corpus", "count must be positive"));
        }
        if !self.weights.is_empty() && self.weights.len() != self.exponents.len() {
            return Err(field("weights", "need one weight per exponent, or none"));
        }
        Ok(())
    }

    pub fn weight(&self, i: usize) -> Result<Weight> {
        match self.weights.get(i) {
            Some(w) => w.to_weight(self.n),
            None => Ok(Weight::unit(self.n)?),
        }
    }

    pub fn constant_exponents(&self) -> Result<Vec<f64>> {
        self.exponents
            .iter()
            .map(|e| e.as_constant().ok_or_else(|| field("exponents", "this experiment needs constant exponents")))
            .collect()
    }

    /// Family over the grid box used for every weight-constant report.
    pub fn constants_family(&self) -> Result<DyadicFamily> {
        let (j0, j1) = self.params.constants_levels;
        Ok(DyadicFamily::new(&self.grid.bounds, j0, j1, None)?)
    }
}
