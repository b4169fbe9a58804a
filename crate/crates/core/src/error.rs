use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variants split into two families: validation failures (bad values, bad
/// shapes, bad ordering) and I/O failures (files that cannot be opened,
/// read, decoded or written). [`Error::is_io`] tells them apart, which is
/// what the command-line driver uses to pick an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("year {year} outside the supported range 1950-2050")]
    YearOutOfRange { year: i32 },

    #[error("sun projects to ({x:.1}, {y:.1}), outside the {width}x{height} frame")]
    OutOfFrame {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("no pixel centers inside the circumsolar disk")]
    EmptyRegion,

    #[error("missing exposure metadata field `{field}`{}", file_suffix(.file))]
    MissingMetadata {
        field: &'static str,
        file: Option<PathBuf>,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: timestamps must be increasing ({detail})")]
    Ordering { line: u64, detail: String },

    #[error("line {line}: cell {cell} value {value} outside [0, 100]")]
    CotRange { line: u64, cell: String, value: f64 },

    #[error("all COT cells are fill values")]
    EmptyGrid,

    #[error("series must be sorted by timestamp: {0}")]
    Unsorted(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("singular fit: all predictor values are identical")]
    SingularFit,

    #[error("degenerate range: series is constant")]
    DegenerateRange,

    #[error("degenerate variance: series is constant")]
    DegenerateVariance,

    #[error("length mismatch: {left} vs {right}")]
    Shape { left: usize, right: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

fn file_suffix(file: &Option<PathBuf>) -> String {
    match file {
        Some(p) => format!(" for {}", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Image { .. })
    }
}
