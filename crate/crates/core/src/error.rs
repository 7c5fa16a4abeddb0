use nalgebra::DMatrix;
use thiserror::Error;

use crate::snn::ReluNet;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("vertex {vertex} has zero degree; the similarity graph is disconnected")]
    ZeroDegree { vertex: usize },

    #[error("{which} is rank deficient (sigma_r = {sigma_r:e}, sigma_1 = {sigma_1:e})")]
    RankDeficient { which: String, sigma_r: f64, sigma_1: f64 },

    #[error("no eigengap: sigma_r = {sigma_r}, sigma_r+1 = {sigma_next}")]
    NoEigengap { sigma_r: f64, sigma_next: f64 },

    #[error("gradient descent diverged at iteration {iter}")]
    Diverged { iter: usize, last: Box<DMatrix<f64>> },

    #[error("iterate lost rank at iteration {iter} (sigma_r / sigma_1 = {ratio:e})")]
    RankCollapse { iter: usize, ratio: f64, last: Box<DMatrix<f64>> },

    #[error("training produced a non-finite loss at iteration {iter}")]
    TrainingDiverged { iter: usize, last: Box<ReluNet> },

    #[error("jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Diverged { .. }
            | Error::RankCollapse { .. }
            | Error::TrainingDiverged { .. }
            | Error::NoConvergence { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
