//! Small moving object detection in surveillance video.
//!
//! The pipeline runs a permissive coarse detector over sliding windows of `n`
//! frames, tracks the suspicious objects with SORT, turns each track's recent
//! motion range into an adaptive spatio-temporal cube, and re-detects inside
//! every cube with a stricter fine detector. Boxes from the fine stage are
//! mapped back to image coordinates and reported for the window's middle
//! frame.
//!
//! Modules, bottom-up:
//!
//! - [`geometry`]: boxes, IoU, enclosing rectangles, NMS.
//! - [`tracking`]: Kalman filter, Hungarian assignment, the SORT tracker.
//! - [`motion_cube`]: motion range, motion amount, adaptive range, cube
//!   extraction and channel stacking.
//! - [`detectors`]: coarse/fine detector traits, classical reference
//!   detectors and a JSONL adapter for externally produced detections.
//! - [`pipeline`]: the streaming orchestration.
//! - [`evaluation`]: precision, recall and AP.
//! - [`synthgen`]: seeded synthetic scenes with exact ground truth.
//! - [`io`]: frame directories and JSONL detection files.

pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod motion_cube;
pub mod pipeline;
mod raster;
pub mod synthgen;
pub mod tracking;

pub use error::{Error, Result};
pub use geometry::{BBox, Detection};
pub use pipeline::{FinalDetection, FrameRecord, Pipeline, PipelineConfig};
