//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("not a RIFF/WAVE file")]
    NotWave,

    #[error("unsupported WAV encoding: format tag {0} (only PCM = 1 is accepted)")]
    NonPcmEncoding(u16),

    #[error("unsupported sample rate {found} Hz (pipeline requires {required} Hz)")]
    SampleRate { found: u32, required: u32 },

    #[error("unsupported channel count {0} (mono required)")]
    MultiChannel(u16),

    #[error("unsupported bit depth {0} (16-bit required)")]
    BitDepth(u16),

    #[error("truncated WAV file: {0}")]
    TruncatedWav(&'static str),

    #[error("audio shorter than one analysis window ({samples} samples < {window} window)")]
    AudioTooShort { samples: usize, window: usize },

    #[error("bad magic bytes (expected \"QBEF\")")]
    BadMagic,

    #[error("unsupported format version {0}")]
    BadVersion(u16),

    #[error("unknown feature kind code {0}")]
    BadKindCode(u8),

    #[error("payload size mismatch: header promises {expected} bytes, file holds {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("corrupt profile: {0}")]
    CorruptProfile(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("zero-norm vector where a direction is required ({0})")]
    ZeroVector(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature kind/dims do not match across inputs: {0}")]
    InconsistentFeatures(String),

    #[error("embedder failed on window {window}: {source}")]
    Embedder {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no embedding provided for window starting at frame {0}")]
    MissingWindowEmbedding(usize),

    #[error("trial set needs at least one target and one non-target")]
    SingleClassTrials,

    #[error("invalid span [{start}, {end}] for content of {frames} frames")]
    InvalidSpan {
        start: usize,
        end: usize,
        frames: usize,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
