use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed wav data: {0}")]
    Format(String),
    #[error("unsupported audio encoding: {0}")]
    UnsupportedCodec(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("invalid audio signal: {0}")]
    InvalidSignal(String),
    #[error("corpus at {0} contains no usable utterances")]
    EmptyCorpus(PathBuf),
    #[error("speaker {0} has no readable utterances")]
    SpeakerWithoutUtterances(String),
    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz in {utterance}")]
    SampleRateMismatch {
        expected: u32,
        found: u32,
        utterance: String,
    },
    #[error("signal of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need more than {needed} frames to fit {needed} components, got {got}")]
    RankDeficient { needed: usize, got: usize },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("fine-tuning needs at least two distinct labels, found {0}")]
    DegenerateLabels(usize),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("exact enumeration is capped at {cap} units, model has {units}")]
    EnumerationCap { units: usize, cap: usize },
    #[error("unknown speaker {0:?}")]
    UnknownSpeaker(String),
    #[error("no frames to score")]
    EmptyFrames,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid model bundle: {0}")]
    Bundle(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

/// Pipeline stage, attached to errors raised while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Framing,
    Whitener,
    Pretrain,
    Finetune,
    Features,
    Enrollment,
    Background,
    Normalization,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Framing => "framing",
            Stage::Whitener => "whitener",
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
            Stage::Features => "features",
            Stage::Enrollment => "enrollment",
            Stage::Background => "background",
            Stage::Normalization => "normalization",
        };
        f.write_str(name)
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage wrappers peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self.root(), Error::Divergence(_))
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
