use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("audio buffer is empty")]
    EmptyBuffer,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("sample-rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error(
        "non-canonical input: expected {expected} samples at 16000 Hz, got {len} at {rate} Hz"
    )]
    NonCanonical {
        expected: usize,
        len: usize,
        rate: u32,
    },

    #[error("degenerate room: every dimension must be positive")]
    DegenerateRoom,
    #[error("{0} position outside room (or closer than 0.1 m to a wall)")]
    PositionOutsideRoom(&'static str),
    #[error("source and microphone coincide")]
    CoincidentPositions,
    #[error("absorption coefficient {0} outside (0, 1]")]
    InvalidAbsorption(f64),
    #[error("impulse response has no energy")]
    ZeroEnergy,
    #[error("insufficient decay")]
    InsufficientDecay,

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("not a scorer model")]
    NotAModel,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated model file")]
    TruncatedModel,
    #[error("malformed model: {0}")]
    MalformedModel(&'static str),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(&'static str),

    #[error("no consensus labels")]
    NoConsensusLabels,
    #[error("need at least 2 training and 2 validation examples")]
    TooFewExamples,
    #[error("training diverged: non-finite loss in epoch {0}")]
    Diverged(usize),

    #[error("nothing to enhance")]
    NothingToEnhance,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}
