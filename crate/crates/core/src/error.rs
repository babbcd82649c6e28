use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no boxes")]
    NoBoxes,

    #[error("degenerate measurement: box has zero area")]
    DegenerateMeasurement,

    #[error("frame order violation: expected frame {expected}, got {got}")]
    FrameOrder { expected: u32, got: u32 },

    #[error("track too young: {have} history entries, need {need}")]
    TrackTooYoung { have: usize, need: usize },

    #[error("degenerate object: bounding box has zero area")]
    DegenerateObject,

    #[error("gamma must be ≥ 1 (got {0})")]
    InvalidGamma(f64),

    #[error("empty crop: rectangle lies outside the frame")]
    EmptyCrop,

    #[error("frame dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },

    #[error("window length must be odd and at least 3 (got {0})")]
    EvenWindow(usize),

    #[error("sequence shorter than window: {frames} frames, window of {window}")]
    SequenceTooShort { frames: usize, window: usize },

    #[error("missing frame {0}")]
    MissingFrame(u32),

    #[error("no frames found in {0}")]
    NoFrames(PathBuf),

    #[error("undefined AP: no ground truth")]
    UndefinedAp,

    #[error("malformed channel count: expected {expected}, got {got}")]
    ChannelCount { expected: usize, got: usize },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
