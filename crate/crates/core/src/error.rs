use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the spectral routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HillError {
    #[error("DomainError: {0}")]
    Domain(String),

    #[error("integration failed near x = {x}: {reason}")]
    Integration { x: f64, reason: &'static str },

    #[error("eigenvalue iteration did not converge for a system of size {size}")]
    Convergence { size: usize },

    #[error("Newton iteration did not converge from {lambda} (residual {residual:e})")]
    NoConvergence { lambda: Complex64, residual: f64 },

    #[error("near-singular point at lambda = {lambda}: |F'| = {f_prime:e}")]
    NearSingular { lambda: Complex64, f_prime: f64, residual: f64 },

    #[error("band {n} continuation rejected repeatedly near t = {t}")]
    BandJump { n: usize, t: f64 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("degenerate double point: {0}")]
    Degenerate(String),

    #[error("count mismatch in {region}: expected {expected}, found {found}")]
    CountMismatch {
        region: String,
        expected: usize,
        found: usize,
    },

    #[error("eigenvalue {0} is neither Dirichlet nor Neumann within tolerance")]
    Unclassified(Complex64),

    #[error("outside the supported regime: {0}")]
    Regime(String),

    #[error("critical point k = {k} not bracketed in c in [{lo}, {hi}]")]
    NotBracketed { k: usize, lo: f64, hi: f64 },

    #[error("integral does not converge under epsilon refinement (last relative change {last_change:e})")]
    NonIntegrable { last_change: f64 },

    #[error("pairing d vanishes; the eigenvalue is multiple")]
    DivisionByZero,
}

impl HillError {
    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_domain(&self) -> bool {
        matches!(self, HillError::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, HillError>;
