use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a proper rotation (orthonormality residual {residual:.3e}, det {det:.6})")]
    NonOrthonormalInput { residual: f64, det: f64 },

    #[error("quaternion scalar part {scalar} makes the MRP map singular")]
    MrpSingularity { scalar: f64 },

    #[error("inertia matrix is singular or not symmetric positive definite")]
    SingularInertia,

    #[error("reference vectors are collinear (|v1 x v2| = {cross_norm:.3e})")]
    CollinearVectors { cross_norm: f64 },

    #[error("innovation covariance is singular (condition estimate {condition:.3e})")]
    SingularInnovation { condition: f64 },

    #[error("hypothesis grid of {requested} models exceeds the budget of {budget}")]
    GridTooLarge { requested: usize, budget: usize },

    #[error("grid needs an odd number of points per axis >= 3, got {0}")]
    InvalidGridResolution(usize),

    #[error("every model weight vanished; residuals are not finite")]
    AllWeightsZero,

    #[error("no hypothesis weight exceeds the pruning threshold {threshold:e}")]
    NothingSurvives { threshold: f64 },

    #[error("refinement budget of {0} exhausted")]
    BudgetExhausted(usize),

    #[error("top eigenvalues of the quaternion accumulator coincide ({0:.3e} apart)")]
    DegenerateSpectrum(f64),

    #[error("record length mismatch: expected {expected} samples, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("artifact schema: {0}")]
    Schema(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }
}
