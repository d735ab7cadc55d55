use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// One or more scenario invariants are violated. Every failed
    /// constraint is listed, not just the first.
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("grid construction failed: {0}")]
    Grid(String),

    #[error(
        "diffusion kernel under-resolved: grid spacing {spacing:.3e} m near the axis exceeds \
         the kernel width {width:.3e} m; increase the time step to at least {min_dt:.3e} s \
         or refine the grid"
    )]
    UnderResolvedKernel {
        spacing: f64,
        width: f64,
        min_dt: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("reaction step failed at node (rho={rho:.3e}, z={z:.3e}): {message}")]
    ReactionNode {
        rho: f64,
        z: f64,
        message: String,
    },

    #[error("reaction step failed: {0}")]
    Reaction(String),

    #[error("release rejected: {0}")]
    Release(String),

    #[error(
        "splitting clamp budget exceeded at t={time:.4e} s: clamped mass {clamped:.3e} exceeds \
         {budget:.1e} of total mass {total:.3e}; reduce the time step"
    )]
    ClampBudget {
        time: f64,
        clamped: f64,
        total: f64,
        budget: f64,
    },

    #[error("non-finite field at step {step} (t={time:.4e} s)")]
    NonFinite { step: usize, time: f64 },

    #[error("detection failed: {0}")]
    Detection(String),

    #[error("oracle failed: {0}")]
    Oracle(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
