use std::io;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("invalid image dimensions {height}x{width}")]
    InvalidDimensions { height: usize, width: usize },

    #[error("buffer of length {len} does not match {height}x{width}x{channels}")]
    BufferLength {
        len: usize,
        height: usize,
        width: usize,
        channels: usize,
    },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("jpeg quality {0} outside 1..=100")]
    InvalidQuality(u8),

    #[error("malformed jpeg stream: {0}")]
    JpegDecode(String),

    #[error("unsupported jpeg feature: {0}")]
    JpegUnsupported(String),

    #[error("png decoding failed: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encoding failed: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("unrecognized image format")]
    UnknownFormat,

    #[error("invalid osn profile: {0}")]
    InvalidProfile(String),

    #[error("profile json: {0}")]
    ProfileJson(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
