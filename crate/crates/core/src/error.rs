use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate torus: r = {0} must exceed 2")]
    DegenerateTorus(f64),

    #[error("polar angle {phi} outside the arc support |phi| <= {limit}")]
    OutsideArcSupport { phi: f64, limit: f64 },

    #[error("geometry out of range: {0}")]
    GeometryOutOfRange(String),

    #[error("covector tangent to radial foliation (w . xi = 0)")]
    TangentCovector,

    #[error("degenerate covector: artefact direction vanishes")]
    DegenerateCovector,

    #[error("no toric section passes through the origin")]
    OriginDelta,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver diverged at iteration {iteration}; residual trace {trace:?}")]
    Divergence { iteration: usize, trace: Vec<f64> },

    #[error("empty region mask")]
    EmptyMask,

    #[error("no predicted points inside the scoring region")]
    EmptyPrediction,

    #[error("unsupported shape for analytic integration: {0}")]
    UnsupportedShape(String),

    #[error("angular lattice is not uniform over the full circle")]
    NonUniformLattice,

    #[error("lattice too coarse: {0}")]
    CoarseLattice(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Name of the subsystem that raised the error, used to tag pipeline messages.
    pub fn module(&self) -> &'static str {
        match self {
            Error::DegenerateTorus(_)
            | Error::OutsideArcSupport { .. }
            | Error::GeometryOutOfRange(_) => "geometry",
            Error::TangentCovector | Error::DegenerateCovector | Error::OriginDelta => "artifacts",
            Error::DimensionMismatch { .. } => "operator",
            Error::Divergence { .. } | Error::EmptyMask => "solvers",
            Error::EmptyPrediction => "artifacts",
            Error::UnsupportedShape(_) => "analytic",
            Error::NonUniformLattice | Error::CoarseLattice(_) => "fourier",
            Error::InvalidParameter(_) => "config",
            Error::Parse(_) | Error::Io(_) => "io",
        }
    }

    /// Errors caused by bad input files or parameters rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::UnsupportedShape(_)
        )
    }
}
