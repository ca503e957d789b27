use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}; only n = 1 and n = 2 are supported")]
    UnsupportedDimension(usize),

    #[error("invalid cube: {0}")]
    InvalidCube(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: operands must share box and spacing")]
    GridMismatch,

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dyadic level 2^{level} is finer than grid spacing {h}")]
    LevelTooFine { level: i32, h: f64 },

    #[error("empty level range [{0}, {1}]")]
    EmptyLevelRange(i32, i32),

    #[error("weight must be strictly positive; found {value} at sample {index}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("power weight |x|^{0} is not locally integrable in dimension {1}")]
    NotLocallyIntegrable(f64, usize),

    #[error("support margin {margin} is smaller than the largest mollifier scale {scale}")]
    MarginViolation { margin: f64, scale: f64 },

    #[error("operator cost cap exceeded: m*n = {0} > 4")]
    CostCap(usize),

    #[error("sample too near the diagonal: distance {distance} vs stencil reach {reach}")]
    TooNearDiagonal { distance: f64, reach: f64 },

    #[error("evaluation point lies inside the dilated cube Q*")]
    InsideStar,

    #[error("evaluation point lies outside the intersection of the dilated cubes")]
    OutsideIntersection,

    #[error("moment projection annihilates the profile")]
    Annihilated,

    #[error("profile is not supported in the atom cube (sample {0})")]
    ProfileOutsideCube(usize),

    #[error("exponent condition violated: {0}")]
    ExponentCondition(String),

    #[error("input function is identically zero")]
    ZeroFunction,

    #[error("probe set is empty")]
    EmptyProbes,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
