use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: corrupt record: byte length {len} is not a multiple of 16")]
    CorruptScan { path: PathBuf, len: u64 },

    #[error("{path}: non-finite coordinate in point {index}")]
    NonFinitePoint { path: PathBuf, index: usize },

    #[error("calibration: missing required key `{0}`")]
    MissingCalibKey(String),

    #[error("calibration: key `{key}` has {found} values, expected {expected}")]
    CalibValueCount {
        key: String,
        expected: usize,
        found: usize,
    },

    #[error("calibration: {0} is not orthonormal")]
    NotOrthonormal(&'static str),

    #[error("calibration: singular transform")]
    SingularTransform,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("box center ({x:.3}, {y:.3}) lies outside the BEV grid")]
    OutsideGrid { x: f64, y: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("detections reference unknown frame ids: {0:?}")]
    UnknownFrames(Vec<String>),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
