use std::path::PathBuf;

/// Errors produced by the solver pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to parse {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("edge ({0}, {1}) is shared by {2} triangles (non-manifold)")]
    NonManifold(usize, usize, usize),

    #[error("surface is not orientable (conflict at triangle {0})")]
    NonOrientable(usize),

    #[error("surface is open: edge ({0}, {1}) has a single adjacent triangle")]
    OpenBoundary(usize, usize),

    #[error("degenerate triangle {index} (area {area:e} m^2)")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("stage symbol is defective at z = {z} and no perturbed sample was usable")]
    EigenFallbackExhausted { z: String },

    #[error("weights show no decay below {tau:e} within {count} terms; increase the sample count or adjust the contour radius")]
    NoDecay { tau: f64, count: usize },

    #[error("non-finite value detected at step {step}")]
    NonFinite { step: usize },

    #[error("symbol evaluation rejected: {0}")]
    Symbol(String),

    #[error("unexpected null-space dimension {0} of the star Laplacian (expected 1)")]
    NullSpace(usize),

    #[error("probe lies outside the mesh: {0}")]
    Probe(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::EigenFallbackExhausted { .. }
                | Error::NoDecay { .. }
                | Error::NonFinite { .. }
                | Error::Symbol(_)
                | Error::NullSpace(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
