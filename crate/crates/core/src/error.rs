use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested pulse angle cannot be reached at the mode maximum.
    #[error(
        "infeasible design at ion {ion}: needs {required:.6} rad but the maximum pulse angle is \
         {max_angle:.6} rad (margin {margin:.6} rad)"
    )]
    InfeasibleDesign {
        ion: usize,
        required: f64,
        max_angle: f64,
        /// `max_angle - pi/2`; negative when even a single-ion design fails.
        margin: f64,
    },

    #[error("accuracy failure: {0}")]
    Accuracy(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {value}")))
    }
}
