use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid channel profile: {0}")]
    InvalidProfile(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("invalid class index {class} for constellation of order {order}")]
    InvalidClass { class: usize, order: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite loss at fold {fold}, epoch {epoch}, batch {batch}")]
    NonFiniteLoss { fold: usize, epoch: usize, batch: usize },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Failed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_frame(self, frame: usize) -> Self {
        Error::Frame { frame, source: Box::new(self) }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage { stage: stage.into(), source: Box::new(self) }
    }

    /// Walks through `Frame`/`Stage` wrappers to the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Frame { source, .. } | Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors that originate in the filesystem.
    pub fn is_io(&self) -> bool {
        matches!(self.root(), Error::Io(_))
    }
}
