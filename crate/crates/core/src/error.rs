use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("trajectory starts inside the dielectric at ({x:.3e}, {y:.3e}, {z:.3e}) m")]
    InvalidStart { x: f64, y: f64, z: f64 },

    #[error("step size underflow at t = {t:.6e} s (h = {h:.3e} s)")]
    Stiffness { t: f64, h: f64 },

    #[error("photon cutoff too small: top Fock population {population:.3e} at t = {t:.6e} s, increase the cutoff")]
    Cutoff { t: f64, population: f64 },

    #[error("steady state is ambiguous: {0}")]
    Ambiguous(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{failed} of {total} runs failed (first: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
