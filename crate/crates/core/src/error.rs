use thiserror::Error;

use crate::result::MethodResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("t = {t} outside the MGF domain ({t_left}, {t_right})")]
    Domain { t: f64, t_left: f64, t_right: f64 },

    /// The form has no random part; it is identically equal to the constant.
    #[error("form is the degenerate constant {0}")]
    DegenerateConstant(f64),

    #[error("method not applicable: {0}")]
    NotApplicable(String),

    /// Carries the best value obtained before giving up.
    #[error("convergence failure: {message}")]
    Convergence {
        message: String,
        partial: Option<Box<MethodResult>>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn not_applicable(msg: impl Into<String>) -> Self {
        Error::NotApplicable(msg.into())
    }

    pub fn convergence(msg: impl Into<String>, partial: Option<MethodResult>) -> Self {
        Error::Convergence {
            message: msg.into(),
            partial: partial.map(Box::new),
        }
    }
}
