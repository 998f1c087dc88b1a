//! Error types shared by every stage of the chain.

use thiserror::Error;

use crate::vht::VhtError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("matrix `{name}` is ill-conditioned: condition number {cond:.3e} exceeds cap {cap:.3e}")]
    IllConditioned { name: String, cond: f64, cap: f64 },

    #[error("inclusion placement failed after {attempts} attempts")]
    Placement { attempts: usize },

    #[error("|k| = {k:.4} exceeds the frequency cutoff {cutoff:.4}")]
    FrequencyCutoff { k: f64, cutoff: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("external deblurrer failed: {0}")]
    External(String),

    #[error(transparent)]
    Vht(#[from] VhtError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
