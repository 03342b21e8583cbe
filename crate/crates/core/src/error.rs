use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("could not place {clusters} cluster means with the requested separation after {attempts} attempts")]
    SeparationUnreachable { clusters: usize, attempts: usize },

    #[error("training diverged in stage {stage}")]
    Divergence { stage: usize },

    #[error("objective is not finite at the initial point")]
    NonFiniteObjective,

    #[error("optimizer could not find a finite step after {attempts} attempts")]
    OptimizerStalled { attempts: usize },

    #[error("coordinate {value} at row {row}, dimension {dim} lies outside [0, 1]")]
    OutsideUnitCube { row: usize, dim: usize, value: f64 },

    #[error("cannot form {k} clusters from {n} points")]
    TooManyClusters { k: usize, n: usize },

    #[error("silhouette needs at least two clusters, found {0}")]
    SilhouetteUndefined(usize),

    #[error("curve has {0} points, at least 4 are required")]
    CurveTooShort(usize),

    #[error("{0} labels do not fit in an 8-bit label map")]
    TooManyLabels(usize),
}
