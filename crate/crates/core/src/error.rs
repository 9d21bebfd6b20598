use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{value} is not a dyadic rational in (0,1] with level <= {max_level}")]
    NotDyadic { value: f64, max_level: u32 },

    #[error("basis index {index} needs grid level {needed}, path has level {available}")]
    Resolution {
        index: u64,
        needed: u32,
        available: u32,
    },

    #[error("eigenvalue sequence rejected: {0}")]
    InvalidSequence(String),

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("bounds certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("numerical overflow at step {step} (t = {time}), member {member}, coordinate {coordinate}: {value}")]
    Overflow {
        step: usize,
        time: f64,
        member: usize,
        coordinate: usize,
        value: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
