use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Validation(String),

    /// Parameters are individually valid but the requested quantity is undefined there.
    #[error("domain error: {0}")]
    Domain(String),

    /// The request would exceed a hard size limit.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The structured walk had no admissible move.
    #[error("walk reached a dead end at step {step}")]
    DeadEnd { step: usize },

    #[error(
        "bracket [{lambda_lo}, {lambda_hi}] does not straddle survival threshold {epsilon}: \
         p_hat(lo) = {p_lo}, p_hat(hi) = {p_hi}"
    )]
    Bracket {
        lambda_lo: f64,
        lambda_hi: f64,
        p_lo: f64,
        p_hi: f64,
        epsilon: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{name} must lie in (0, 1], got {p}"
        )))
    }
}

pub(crate) fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{name} must be a positive finite number, got {x}"
        )))
    }
}
