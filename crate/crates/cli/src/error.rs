use std::fmt;

use pbvgan::classify::ClassifyError;
use pbvgan::gan::GanError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            kind: ErrorKind::Usage,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self {
            kind: ErrorKind::Data,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            kind: self.kind,
            error: self.error.context(ctx),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self { kind: ErrorKind::Data, error: e.into() }
            }
        }
    )*};
}

data_errors!(
    std::io::Error,
    pbvgan::pcap_ingest::PcapError,
    pbvgan::preprocess::PreprocessError,
    pbvgan::dataset::DatasetError,
    pbvgan::resample::ResampleError,
    pbvgan::neural::NeuralError
);

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        let kind = match e {
            GanError::NonFinite { .. } => ErrorKind::Numeric,
            GanError::InvalidConfig(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        };
        Self { kind, error: e.into() }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        let kind = match e {
            ClassifyError::NonFinite { .. } => ErrorKind::Numeric,
            ClassifyError::InvalidConfig(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        };
        Self { kind, error: e.into() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attach a path or stage name to any error convertible into [`CliError`].
pub trait Context<T> {
    fn ctx(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Result<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn ctx(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Result<T> {
        self.map_err(|e| e.into().context(ctx))
    }
}
