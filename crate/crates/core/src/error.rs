use thiserror::Error;

/// Crate-wide error type. Variants mirror the failure modes of the numeric
/// engine, the DSP front end, the text frontend, the models and the corpus
/// tooling so callers can match on what actually went wrong.
#[derive(Debug, Error)]
pub enum Error {
    // -- tensor engine -------------------------------------------------
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("conv kernel size must be odd, got {0}")]
    InvalidKernel(usize),
    #[error("dropout rate must be in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("index {index} out of range for dimension of size {size}")]
    Index { index: usize, size: usize },
    #[error("mean pool over an all-false mask")]
    EmptyPool,
    #[error("non-finite gradient in '{0}'")]
    NonFiniteGradient(String),
    #[error("non-finite value in '{0}'")]
    NonFinite(String),
    #[error("schedule step must be >= 1")]
    InvalidStep,

    // -- audio dsp ------------------------------------------------------
    #[error("unsupported wav format: {0}")]
    UnsupportedFormat(String),
    #[error("audio stream is empty")]
    EmptyAudio,
    #[error("input of {len} samples is shorter than one window of {win}")]
    InputTooShort { len: usize, win: usize },
    #[error("invalid frequency range: {0}")]
    InvalidRange(String),

    // -- text frontend ----------------------------------------------------
    #[error("inventory error: {0}")]
    Inventory(String),
    #[error("text produced no phonemes")]
    EmptyText,
    #[error("positional encoding dimension must be even, got {0}")]
    InvalidDim(usize),

    // -- model blocks -----------------------------------------------------
    #[error("attention mask error: {0}")]
    Mask(String),
    #[error("length regulation produced an empty sequence")]
    EmptyExpansion,

    // -- clip / tts ---------------------------------------------------------
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    // -- data harness ------------------------------------------------------
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("{frames} mel frames cannot cover {phonemes} phonemes")]
    TooShort { frames: usize, phonemes: usize },

    // -- persistence ----------------------------------------------------
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Wraps an error with the pipeline stage it occurred in.
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tag an error with a pipeline stage label.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
