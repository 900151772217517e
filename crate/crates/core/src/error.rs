use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is outside the supported range 1..=5")]
    Dimension(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fourth-order moment interval is empty: lower {lower} >= upper {upper}")]
    InfeasibleFourthMoment { lower: f64, upper: f64 },
    #[error("entropy undefined: weight {index} is {value} (must be positive)")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("diverged at step {step}, node {node}: phi = {value}")]
    Divergence { step: u64, node: usize, value: f64 },
    #[error("unsupported derivative {0}")]
    UnsupportedDerivative(String),
    #[error("normal velocity component is zero on axis {0}; normal derivatives cannot be eliminated")]
    ZeroNormalVelocity(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("eigenvalue solver failed: {0}")]
    Eigen(String),
    #[error("unknown example '{0}'")]
    UnknownExample(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
