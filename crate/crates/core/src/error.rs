use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image dimensions {width}x{height} for {len} values")]
    InvalidImage {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("failed to read image {path}: {source}")]
    ImageRead {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("failed to write image {path}: {source}")]
    ImageWrite {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cluster count {n} out of range 1..={max}")]
    ClusterCount { n: usize, max: usize },
    #[error("empty pixel set")]
    EmptyPixelSet,
    #[error("negative radius {0}")]
    NegativeRadius(f64),
    #[error("marker set is empty")]
    EmptyMarkerSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("ground truth is empty")]
    EmptyTruth,
}

pub type Result<T> = std::result::Result<T, Error>;
