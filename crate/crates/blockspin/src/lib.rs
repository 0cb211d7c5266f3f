//! Finite-lattice Neumann Green functions with block averaging.
//!
//! The crate builds dense kernels for the Neumann Laplacian on cubes of
//! `ηZ^d`, the block-averaging operators `Q_j`, regularized Green functions
//! at every scale, and the fluctuation covariances that connect consecutive
//! scales. Free-lattice kernels are computed by torus quadrature of their
//! Fourier symbols and compared with the finite-volume kernels through the
//! method of images. Decay of all kernels is measured by log-linear fits.

pub mod cli;
pub mod decay;
pub mod fourier;
pub mod images;
pub mod lattice;
pub mod multiscale;
pub mod operators;

pub use lattice::{LatticeGeometry, Site};

pub use multiscale::MultiscaleParams;
pub use operators::{Field, KernelOperator, C64};

/// Errors raised by lattice constructions and numerical routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("geometry mismatch: {0}")]
    Mismatch(String),
    #[error("site {0} is outside the lattice")]
    OutOfRange(String),
    #[error("matrix is numerically singular (reciprocal condition {rcond:.3e})")]
    Singular { rcond: f64 },
    #[error("operator is not self-adjoint (relative residual {residual:.3e})")]
    NotSelfAdjoint { residual: f64 },
    #[error("quadrature did not converge: change {change:.3e} at M = {m}")]
    Quadrature { change: f64, m: usize },
    #[error("strip violation: denominator {value:.3e} below floor {floor} at z = {at}")]
    StripViolation { value: f64, floor: f64, at: String },
    #[error("image sum does not decay: shell ratio {ratio:.3} at shell {shell}")]
    ImageDivergence { ratio: f64, shell: usize },
    #[error("fit window has {points} points, need at least {needed}")]
    DegenerateWindow { points: usize, needed: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
