use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NhError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("Lagrangian is not regular here: velocity Hessian condition number {condition:e}")]
    Regularity { condition: f64 },

    #[error("compatibility condition fails: multiplier matrix smallest singular value {singular_value:e}")]
    Compatibility { singular_value: f64 },

    #[error("two-form is degenerate: smallest singular value {singular_value:e}")]
    Degenerate { singular_value: f64 },

    #[error("state is not on the constraint submanifold: residual {residual:e}")]
    OffConstraint { residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure at step {step}: {message}")]
    Numerical { step: usize, message: String },
}

pub type Result<T> = std::result::Result<T, NhError>;
