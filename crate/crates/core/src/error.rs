use thiserror::Error;

pub type Result<T> = std::result::Result<T, BlochError>;

#[derive(Debug, Error)]
pub enum BlochError {
    #[error("invalid medium: {0}")]
    InvalidMedium(String),

    /// A pointwise invariant failed at a specific sample of the medium grid.
    #[error("invalid medium at sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid of {grid} samples along axis {axis} aliases for cutoff K={cutoff} (need at least {required})")]
    Aliasing {
        axis: usize,
        grid: usize,
        cutoff: usize,
        required: usize,
    },

    #[error("matrix is not Hermitian: relative defect {defect:.3e}")]
    NotHermitian { defect: f64 },

    #[error("mass matrix is not positive definite (non-positive density interpolant)")]
    MassNotPositive,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("band {band} requires neighbouring bands that were not computed ({computed} available)")]
    InsufficientBands { band: usize, computed: usize },

    #[error("band {band} is not simple (relative gap {gap:.3e})")]
    Degenerate { band: usize, gap: f64 },

    #[error("eigenvalue {lambda:.3e} is below the acoustic floor {floor:.3e}")]
    Acoustic { lambda: f64, floor: f64 },

    #[error("band {band} loses simplicity on the finite-difference stencil")]
    StencilCrossing { band: usize },

    #[error("negative eigenvalue {0:.3e}")]
    NegativeEigenvalue(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("oracle scan window [0, {window}] holds only {found} of {wanted} roots")]
    WindowTooSmall {
        window: f64,
        found: usize,
        wanted: usize,
    },

    #[error("at theta {theta:?}, band {band}: {source}")]
    AtPoint {
        theta: Vec<f64>,
        band: usize,
        #[source]
        source: Box<BlochError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BlochError {
    pub(crate) fn at(self, theta: &[f64], band: usize) -> Self {
        BlochError::AtPoint {
            theta: theta.to_vec(),
            band,
            source: Box::new(self),
        }
    }
}
