use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("format version {found} is not supported (expected {expected}); the file needs migration")]
    Version { found: u32, expected: u32 },
    #[error("face detector: {0}")]
    Detector(String),
    #[error(transparent)]
    Engine(#[from] duoauth_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status for this error. Every variant maps to exactly one code.
    pub fn exit_code(&self) -> i32 {
        use duoauth_core::Error as E;
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. } => 3,
            Error::Format(_) => 4,
            Error::Unsupported(_) => 5,
            Error::Integrity(_) => 6,
            Error::Version { .. } => 7,
            Error::Detector(_) => 15,
            Error::Engine(e) => match e {
                E::Config(_) => 2,
                E::Spec(_) => 8,
                E::FingerprintMismatch { .. } => 9,
                E::TooShort { .. } | E::EmptyVoice => 10,
                E::Shape(_) | E::Contract(_) | E::DegenerateVector => 11,
                E::Numeric(_) => 12,
                E::Conflict(_) | E::ClassTaken { .. } => 13,
                E::UnmappedClass(_) | E::UnknownUser(_) | E::EmptyStore => 14,
            },
        }
    }
}

/// Exit status table, as printed by `duoauth --help`.
pub const EXIT_CODES: &[(i32, &str)] = &[
    (0, "success"),
    (2, "usage or configuration error"),
    (3, "file could not be read or written"),
    (4, "malformed input file"),
    (5, "unsupported encoding"),
    (6, "checksum or truncation failure"),
    (7, "format version needs migration"),
    (8, "model spec mismatch"),
    (9, "store/model fingerprint mismatch"),
    (10, "audio too short or silent"),
    (11, "shape or contract violation"),
    (12, "non-finite value during computation"),
    (13, "enrollment conflict"),
    (14, "unknown user, unmapped face class or empty store"),
    (15, "external face detector failed"),
];
