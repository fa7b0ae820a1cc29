//! Temporal localization of driver actions from multi-view classifier
//! scores: proposal generation with soft-NMS, multi-view/multi-rate score
//! fusion, threshold calibration, filtering and duplicate merging, plus the
//! matching evaluation suite (boundary-tolerance F1, mIoU, time-positive
//! accuracy, AR@AN) and a deterministic synthetic scenario generator.

pub mod calibration;
pub mod config;
pub mod error;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod proposal;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
