use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid IP address {0:?}")]
    InvalidIp(String),
    #[error("empty username")]
    EmptyUsername,
    #[error("invalid RTT sample {0}")]
    InvalidRtt(f64),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CidrError {
    #[error("malformed CIDR {0:?}")]
    Malformed(String),
    #[error("prefix length {len} too long for {addr}")]
    PrefixTooLong { addr: String, len: u8 },
}

#[derive(Debug, Error)]
pub enum ResolverError {
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Violations of the scoring preconditions. Callers handle first logins before
/// scoring, so reaching one of these is a bug on their side.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("user has no login history")]
    EmptyHistory,
    #[error("user has no stored logins in the global counters")]
    UnknownUser,
    #[error("global probability undefined: no logins and zero smoothing")]
    EmptyGlobalHistory,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("history log I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt history log at line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Debug, Error)]
pub enum ReputationError {
    #[error("line {line}: not an IP address or CIDR prefix: {text:?}")]
    Parse { line: usize, text: String },
    #[error("failed to read reputation source {source_name}: {message}")]
    Source { source_name: String, message: String },
}

#[derive(Debug, Error)]
pub enum VerificationError {
    #[error("no contact address registered for {0}")]
    NoContact(String),
    #[error("message delivery failed: {0}")]
    Delivery(String),
    #[error("HOTP secret must be at least 16 bytes, got {0}")]
    ShortSecret(usize),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset has no column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("dataset I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed column mapping: {0}")]
    Mapping(String),
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
