use std::fmt;

use ralp::RalpError;

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Solver(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl From<RalpError> for Failure {
    fn from(e: RalpError) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_errors_exit_with_three() {
        assert_eq!(Failure::from(RalpError::Solver("cycling".into())).exit_code(), 3);
        assert_eq!(Failure::from(RalpError::Degenerate("rank 1".into())).exit_code(), 3);
        assert_eq!(Failure::from(RalpError::IterationCap { cap: 5, diagnostic: String::new() }).exit_code(), 3);
    }

    #[test]
    fn bad_input_exits_with_two() {
        let e = RalpError::Parse { location: "x".into(), message: "y".into() };
        assert_eq!(Failure::from(e).exit_code(), 2);
        assert_eq!(Failure::from(RalpError::Invalid("z".into())).exit_code(), 2);
    }
}
