use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("f' has no zeros; the map has no critical structure to analyze")]
    NoCriticalPoints,

    #[error("grid of {grid_n} points too coarse: two roots closer than 2/grid_n")]
    GridTooCoarse { grid_n: usize },

    #[error("invalid region radius c = {c}: {reason}")]
    InvalidC { c: f64, reason: String },

    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("(H3)(c0 = {c0}) fails: worst pair distance {worst}")]
    H3Failed { c0: f64, worst: f64 },

    #[error("point is not in G_N: failed condition {0}")]
    NotInGn(String),

    #[error("no admissible configuration for word case {case:?} after {tries} tries")]
    CaseUnrealizable { case: char, tries: u64 },

    #[error("cone C({s_in}) not mapped into any proper cone: |f'| = {fprime_abs} too small")]
    ConeNotMapped { s_in: f64, fprime_abs: f64 },

    #[error("tangent accumulator overflow at step {step}; reduce renorm_every")]
    Overflow { step: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
