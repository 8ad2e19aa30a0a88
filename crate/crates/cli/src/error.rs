use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Parse(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Engine(#[from] lti_bounds::Error),

    #[error("cannot write report: {0}")]
    Output(String),

    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Parse(_) => 2,
            Self::Precondition(_) | Self::Output(_) => 3,
            Self::Engine(lti_bounds::Error::TooManyFailedTrials { .. }) | Self::ChecksFailed(_) => {
                1
            }
            Self::Engine(_) => 3,
        }
    }
}
