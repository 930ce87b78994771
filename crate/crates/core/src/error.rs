use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    /// A problem with stream data. `record` is the 0-based example index (or
    /// the 1-based file line when `line` is set).
    #[error("data error at {}: {message}", location(*record, *line))]
    Data {
        record: Option<usize>,
        line: Option<u64>,
        message: String,
    },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("incompatible checkpoint version {found} (supported: {supported})")]
    Version { found: u16, supported: u16 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location(record: Option<usize>, line: Option<u64>) -> String {
    match (record, line) {
        (_, Some(l)) => format!("line {l}"),
        (Some(r), None) => format!("record {r}"),
        (None, None) => "unknown position".to_string(),
    }
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn data_at_record(record: usize, message: impl Into<String>) -> Self {
        Error::Data {
            record: Some(record),
            line: None,
            message: message.into(),
        }
    }

    pub(crate) fn data_at_line(line: u64, message: impl Into<String>) -> Self {
        Error::Data {
            record: None,
            line: Some(line),
            message: message.into(),
        }
    }

    /// True for errors caused by the data stream rather than configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Data { .. })
    }
}
