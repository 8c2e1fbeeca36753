use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("input shape mismatch: {0}")]
    Shape(String),
    #[error("invalid camera intrinsics: {0}")]
    Intrinsics(String),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("direction is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("point cloud has no valid pixel to select as target")]
    NoTarget,
    #[error("unrecognized joint layout with {0} joints")]
    Layout(usize),
    #[error("degenerate pose: neck to mid-hip distance {0} px")]
    DegeneratePose(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("record `{record}`: field `{field}`: {msg}")]
    Record {
        record: String,
        field: &'static str,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
