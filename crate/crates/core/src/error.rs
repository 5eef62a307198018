use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("quadrature did not converge: estimated error {estimate:e} after {evaluations} evaluations")]
    Quadrature { estimate: f64, evaluations: usize },

    #[error("assumption ({assumption}) violated: {detail}")]
    Assumption { assumption: &'static str, detail: String },

    #[error("solvability condition for {equation} violated: integral {value:e} exceeds {tolerance:e}")]
    Solvability { equation: &'static str, value: f64, tolerance: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("residual of {equation} is {value:e}, above {tolerance:e}")]
    Residual { equation: &'static str, value: f64, tolerance: f64 },

    #[error("grid does not resolve the fast scale: {0}")]
    Resolution(String),

    #[error("time step {dt:e} exceeds the limit {limit:e}")]
    TimeStep { dt: f64, limit: f64 },

    #[error("non-finite state: {0}")]
    NonFinite(String),

    #[error("negative density beyond tolerance: min value {0:e}")]
    Negativity(f64),

    #[error("all particle weights vanished at step {0}")]
    WeightCollapse(usize),

    #[error("battery mismatch: {0}")]
    Battery(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { name, reason: reason.into() }
    }

    /// Process exit status per the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Grid(_)
            | Error::Parameter { .. }
            | Error::LengthMismatch { .. }
            | Error::Assumption { .. }
            | Error::Resolution(_)
            | Error::TimeStep { .. }
            | Error::Battery(_)
            | Error::Config(_) => 2,
            _ => 3,
        }
    }
}
