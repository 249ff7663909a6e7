use thiserror::Error;

use crate::field::WaveVector;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {k:?} is outside the truncation band of resolution {n}")]
    SpecOutOfBand { k: WaveVector, n: usize },
    #[error("invalid field spec: {0}")]
    InvalidSpec(String),
    #[error("resolution mismatch: {left} vs {right}")]
    ResolutionMismatch { left: usize, right: usize },
    #[error("field is not exact (mean mode {mean:?} is nonzero)")]
    NotExact { mean: [f64; 3] },
    #[error("field is not divergence-free (relative residual {residual:e})")]
    NotDivergenceFree { residual: f64 },
    #[error("field is not a gradient (non-gradient fraction {fraction:e})")]
    NotAGradient { fraction: f64 },
    #[error("fields are not collinear (residual {residual:e})")]
    NonCollinear { residual: f64 },
    #[error("bridge pool of {pool} modes exhausted")]
    PoolExhausted { pool: usize },
    #[error("helicity levels differ: {h1} vs {h2}")]
    LevelMismatch { h1: f64, h2: f64 },
    #[error("annulus point left the window: r = {r}")]
    WindowExit { r: f64 },
    #[error("unperturbed resonant circle is a continuum of fixed points")]
    DegenerateCircle,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed grid file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
