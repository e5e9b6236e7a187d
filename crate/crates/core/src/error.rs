use thiserror::Error;

use crate::torus_maps::MapKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a torus automorphism: det T = {0}, expected 1")]
    NotUnimodular(i64),

    #[error("Hilbert space dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("{kind} map with N = {dim} is not unitary: max |U^dag U - 1| = {deviation:e}")]
    NotUnitary {
        kind: MapKind,
        dim: usize,
        deviation: f64,
    },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} = {requested} exceeds the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("power r_{0} of the correlation sequence is zero")]
    ZeroPower(usize),

    #[error("block index {index} out of range for {count} blocks")]
    BlockIndex { index: usize, count: usize },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("decay fit failed: {0}")]
    Fit(String),
}
