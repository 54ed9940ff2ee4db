use thiserror::Error;

/// Errors raised by lattice construction, solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum CrowError {
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),

    #[error("incommensurate torus flux: alpha = {alpha} on a {nx}x{ny} torus")]
    IncommensurateFlux { alpha: f64, nx: usize, ny: usize },

    #[error("site ({x}, {y}) out of range for a {nx}x{ny} lattice")]
    SiteOutOfRange { x: usize, y: usize, nx: usize, ny: usize },

    #[error("dimension {dim} exceeds the dense cap of {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("singular system at omega = {omega}: residual norm {residual:e}")]
    Singular { omega: f64, residual: f64 },

    #[error("eigensolver did not converge (dim {dim}, norm {norm:e})")]
    NoConvergence { dim: usize, norm: f64 },

    #[error("band-edge divergence: sin(K Lambda) = {0:e}")]
    BandEdge(f64),

    #[error("singular D block: evanescent regime")]
    EvanescentRegime,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("realization with child seed {seed} failed: {source}")]
    Realization {
        seed: u64,
        #[source]
        source: Box<CrowError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CrowError {
    /// True for failures caused by user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            CrowError::InvalidSpec(_)
                | CrowError::IncommensurateFlux { .. }
                | CrowError::SiteOutOfRange { .. }
                | CrowError::DimensionTooLarge { .. }
                | CrowError::InvalidArgument(_)
                | CrowError::Config(_)
                | CrowError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CrowError>;
