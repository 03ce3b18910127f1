use thiserror::Error;

/// Errors surfaced by the library. Callers that need exit-code semantics
/// can split these into configuration errors (bad arguments, unknown
/// domains) and data-integrity errors (corrupt or mismatched artifacts).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A structurally invalid record in a line-oriented input file.
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    /// A configuration field failed validation.
    #[error("invalid config `{field}`: {msg}")]
    Config { field: String, msg: String },

    /// A caller violated an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown domain `{0}`")]
    UnknownDomain(String),

    /// A requested domain has no cached/retrieved result to merge.
    #[error("domain `{0}` has no retrieved results")]
    MissingDomain(String),

    #[error("duplicate passage id `{0}`")]
    DuplicateId(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    /// A persisted artifact failed structural validation.
    #[error("corrupt artifact {path}: {msg}")]
    Corrupt { path: String, msg: String },

    /// Payload bytes do not match the checksum recorded in a manifest.
    #[error("checksum mismatch for {path}: manifest {expected:016x}, payload {got:016x}")]
    Checksum { path: String, expected: u64, got: u64 },
}

impl Error {
    /// True for errors caused by bad configuration or arguments rather
    /// than by damaged data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidInput(_)
                | Error::UnknownDomain(_)
                | Error::MissingDomain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
