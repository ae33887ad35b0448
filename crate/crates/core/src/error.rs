use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("charge sector {charge} is outside the built range (k_max = {k_max})")]
    SectorOutOfRange { charge: usize, k_max: usize },

    #[error("invalid gate spec: {0}")]
    InvalidSpec(String),

    #[error("unknown gate `{0}`")]
    UnknownGate(String),

    #[error("contract violated: {0}")]
    ContractViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
