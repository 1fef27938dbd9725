use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generator {index} is not orthogonal (defect {defect:.3e})")]
    NotOrthogonal { index: usize, defect: f64 },

    #[error("group closure exceeded {max_order} elements")]
    ClosureOverflow { max_order: usize },

    #[error("generator images do not define a homomorphism (elements {left} and {right})")]
    NotAHomomorphism { left: usize, right: usize },

    #[error("mesh has no transport operator for group element {element}")]
    MissingTransport { element: usize },

    #[error("mapped vertex {vertex} could not be located in any cell")]
    PointLocationFailure { vertex: usize },

    #[error("component {component} has zero mass")]
    ZeroComponent { component: usize },

    #[error("negative input {value}")]
    NegativeInput { value: f64 },

    #[error("component {component} collapsed (mass {mass:.3e} before renormalization)")]
    ComponentCollapse { component: usize, mass: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("beta r^2 H(r) never crosses 1 on the radial grid (value at r=1: {at_boundary:.6})")]
    NotBracketed { at_boundary: f64 },

    #[error("need at least {required} radii beyond r_min, found {available}")]
    InsufficientRange { available: usize, required: usize },

    #[error("unknown catalog id `{0}`")]
    UnknownId(String),

    #[error("incompatible mesh: {0}")]
    IncompatibleMesh(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotOrthogonal { .. } => "NotOrthogonal",
            Error::ClosureOverflow { .. } => "ClosureOverflow",
            Error::NotAHomomorphism { .. } => "NotAHomomorphism",
            Error::MissingTransport { .. } => "MissingTransport",
            Error::PointLocationFailure { .. } => "PointLocationFailure",
            Error::ZeroComponent { .. } => "ZeroComponent",
            Error::NegativeInput { .. } => "NegativeInput",
            Error::ComponentCollapse { .. } => "ComponentCollapse",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::NotBracketed { .. } => "NotBracketed",
            Error::InsufficientRange { .. } => "InsufficientRange",
            Error::UnknownId(_) => "UnknownId",
            Error::IncompatibleMesh(_) => "IncompatibleMesh",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
