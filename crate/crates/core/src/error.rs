use thiserror::Error;

use crate::geometry::Frame;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),

    #[error("normal at index {index} is not unit length (norm {norm})")]
    NonUnitNormal { index: usize, norm: f64 },

    #[error("{points} points but {normals} normals")]
    LengthMismatch { points: usize, normals: usize },

    #[error("cloud has no normals")]
    MissingNormals,

    #[error("need at least {required} points for normal estimation, got {found}")]
    TooFewPoints { found: usize, required: usize },

    #[error("too few correspondences: {found} (need at least {required})")]
    TooFewMatches { found: usize, required: usize },

    #[error("non-finite pose update at iteration {iteration}")]
    NonFiniteUpdate { iteration: usize },

    #[error("frame mismatch: expected {expected:?}, found {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },

    #[error("no pairs qualify for re-sampling along direction {direction}")]
    EmptySelection { direction: usize },

    #[error("partial constraint needs at least {required} pairs, got {found}")]
    InsufficientPairs { found: usize, required: usize },

    #[error("re-sampled system is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("augmented system is singular; unconstrained direction with eigenvalue {eigenvalue:e}")]
    SingularKkt { eigenvalue: f64 },

    #[error("no world points visible from the sensor pose")]
    EmptyScan,

    #[error("no poses could be associated")]
    EmptyAssociation,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
