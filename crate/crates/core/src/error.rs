use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{context}: dimensions {actual_w}x{actual_h} do not match {expected_w}x{expected_h}")]
    DimensionMismatch {
        context: &'static str,
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("expected {expected} channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("grid of {actual_w}x{actual_h} is too small, need at least {needed}x{needed}")]
    GridTooSmall {
        needed: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("{which} mask is empty")]
    EmptyMask { which: &'static str },

    #[error("object and shadow centroids coincide (distance {distance:.3} px)")]
    CoincidentCentroids { distance: f64 },

    #[error("cannot normalize a near-zero vector (norm {norm:e})")]
    ZeroVector { norm: f64 },

    #[error("malformed light record {path}: {detail}")]
    MalformedLight { path: PathBuf, detail: String },

    #[error("attached mask carries no shadow evidence (no positive pixels in region)")]
    EmptyAttachedEvidence,

    #[error("attached mask covers the whole region (no negative pixels to contrast against)")]
    AttachedCoversRegion,

    #[error("attached mask has pixels outside the fit region")]
    AttachedOutsideRegion,

    #[error("evaluation mask selects no pixels")]
    EmptyEvalMask,

    #[error("degenerate scene: {0}")]
    DegenerateScene(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
