use nhmech::NhError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] NhError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for anything wrong with the request, 3 for a numerical breakdown while running it.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Library(e) => match e {
                NhError::Config(_)
                | NhError::Dimension { .. }
                | NhError::Unsupported(_)
                | NhError::OffConstraint { .. } => 2,
                NhError::Regularity { .. }
                | NhError::Compatibility { .. }
                | NhError::Degenerate { .. }
                | NhError::Numerical { .. } => 3,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(NhError::OffConstraint { residual: 1.0 }).exit_code(), 2);
        assert_eq!(CliError::from(NhError::Unsupported("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(NhError::Dimension { expected: 1, got: 2 }).exit_code(), 2);
        assert_eq!(CliError::from(NhError::Regularity { condition: 1e20 }).exit_code(), 3);
        assert_eq!(CliError::from(NhError::Compatibility { singular_value: 0.0 }).exit_code(), 3);
        assert_eq!(CliError::from(NhError::Numerical { step: 4, message: "x".into() }).exit_code(), 3);
    }
}
