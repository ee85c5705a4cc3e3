use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bad magic bytes {found:?}, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },

    #[error("file truncated: expected {expected} bytes of payload, found {found}")]
    TruncatedFile { expected: usize, found: usize },

    #[error("count mismatch: {what} has {found} entries, expected {expected}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in row {row}")]
    NonFiniteValue { row: usize },

    #[error("row {row} has norm {norm} but the file is flagged as normalized")]
    NotNormalized { row: usize, norm: f64 },

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("zero vector (row {row})")]
    ZeroVector { row: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate training data: no separating direction (|w| = {norm:e})")]
    DegenerateData { norm: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("class {0} is empty")]
    EmptyClass(u8),

    #[error("direction is not unit length (|w| = {norm})")]
    UnnormalizedDirection { norm: f64 },

    #[error("too few groups: {0}")]
    TooFewGroups(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("antipodal vectors: interpolation path is undefined")]
    AntipodalVectors,

    #[error("group {0:?} is empty")]
    EmptyGroup(String),

    #[error("distribution is empty (all counts zero)")]
    EmptyDistribution,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("baseline dispersion is zero")]
    ZeroBaseline,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid Wikidata identifier {0:?}")]
    InvalidQid(String),

    #[error("image is empty")]
    EmptyImage,

    #[error("image {width}x{height} is too small for a 3x3 kernel")]
    TooSmall { width: u32, height: u32 },

    #[error("invalid face box: {0}")]
    InvalidBox(String),

    #[error("cell ({group}, {gender}) has an odd row count {count}")]
    OddCellCount {
        group: String,
        gender: String,
        count: usize,
    },

    #[error("unknown concept {0:?}")]
    UnknownConcept(String),

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[cfg(feature = "wdqs")]
    #[error(transparent)]
    Http(#[from] reqwest::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the environment (filesystem, network) rather
    /// than of the inputs themselves.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Image(image::ImageError::IoError(_)) => true,
            Error::Csv(e) => e.is_io_error(),
            Error::Json(e) => e.is_io(),
            #[cfg(feature = "wdqs")]
            Error::Http(_) => true,
            _ => false,
        }
    }
}
