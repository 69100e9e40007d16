//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("audio too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },

    #[error("length mismatch: {left} vs {right} samples")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },

    #[error("channel count mismatch: {left} vs {right}")]
    ChannelMismatch { left: usize, right: usize },

    #[error("signal is silent: {0}")]
    SilentSignal(String),

    #[error("window/hop pair does not satisfy the constant-overlap-add condition")]
    NonCola,

    #[error("speed factor {0} outside supported range [0.5, 2.0]")]
    SpeedFactorOutOfRange(f64),

    #[error("point {point:?} lies outside the room {dims:?}")]
    OutsideRoom { point: [f64; 3], dims: [f64; 3] },

    #[error("recording '{0}' not present in RTTM")]
    RecordingMissing(String),

    #[error("speaker '{0}' not present in RTTM for this recording")]
    SpeakerMissing(String),

    #[error("near-singular matrix at frequency bin {freq}{}", source_hint(*.source_index))]
    SingularMatrix {
        freq: usize,
        source_index: Option<usize>,
    },

    #[error("RTTM parse error at line {line}: {message}")]
    RttmParse { line: usize, message: String },

    #[error("reference contains no speech: diarization error rate undefined")]
    EmptyReference,

    #[error("requested {requested} clusters but only {available} embeddings")]
    TooManyClusters { requested: usize, available: usize },

    #[error("embedding container error: {0}")]
    EmbeddingFormat(String),

    #[error("no diarization source: provide an RTTM or an embedding set")]
    NoDiarizationSource,

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("hook error: {0}")]
    Hook(#[from] HookError),

    #[error("config error: {0}")]
    Config(String),

    #[error("wav error for {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("i/o error for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failures of an external hook command. Kept separate so callers can map
/// them to a distinct exit code.
#[derive(Debug, Error)]
pub enum HookError {
    #[error("hook template must contain both {{in}} and {{out}} placeholders")]
    MissingPlaceholder,

    #[error("hook timed out after {0} s")]
    Timeout(f64),

    #[error("hook exited with status {got}, expected {expected}")]
    ExitStatus { got: i32, expected: i32 },

    #[error("hook produced no output file at {0}")]
    NoOutput(PathBuf),

    #[error("hook output unparseable: {0}")]
    BadOutput(String),

    #[error("failed to spawn hook: {0}")]
    Spawn(std::io::Error),
}

fn source_hint(source_index: Option<usize>) -> String {
    match source_index {
        Some(n) => format!(", source {n}"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn wav(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Wav {
            path: path.into(),
            message: message.into(),
        }
    }
}
