use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A call sequence violated the environment/actor/adder protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// An action did not satisfy the environment's action spec.
    #[error("action outside spec: {0}")]
    SpecViolation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// NaN or infinite values where finite numbers are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("replay table is closed")]
    Closed,
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("schema mismatch: expected tag {expected:#06x}, found {found:#06x}")]
    Schema { expected: u16, found: u16 },
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("dataset contains no records")]
    EmptyDataset,
    #[error("environment fault: {0}")]
    Environment(String),
    #[error("worker failed: {0}")]
    Worker(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
