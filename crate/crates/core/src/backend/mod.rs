//! Detector and segmenter interfaces plus the backends that implement them.
//!
//! Two families ship here: deterministic oracles that answer prompts from
//! ground-truth annotations, and a client for out-of-process model servers
//! speaking the newline-delimited JSON protocol in [`external`].

pub mod external;
mod oracle;
pub(crate) mod scene;
mod synth;

pub use external::{ExternalBackend, DEFAULT_TIMEOUT};
pub use oracle::{oracle_detect, OracleDetector, OracleSegmenter, BACKGROUND_SCORE};
pub use scene::{ImageRef, Instance, SceneAnnotation, SceneError, SizeClass};
pub use synth::{synth_scene, SynthError, SYNTH_CATEGORIES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BBox, BinaryMask};
use crate::prompt::Prompt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub category_id: i64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResult {
    pub mask: BinaryMask,
    pub score: f64,
}

/// Per-run call and time accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendStats {
    pub segmenter_calls: u64,
    pub detector_calls: u64,
    /// Seconds.
    pub wall_time: f64,
}

impl BackendStats {
    pub fn merge(&mut self, other: &BackendStats) {
        self.segmenter_calls += other.segmenter_calls;
        self.detector_calls += other.detector_calls;
        self.wall_time += other.wall_time;
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend reported error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("backend has no scene for image {0}")]
    UnknownImage(String),
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
}

pub trait Detector {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Detection>, BackendError>;
}

pub trait Segmenter {
    fn segment(&self, image: &ImageRef, prompt: &Prompt) -> Result<SegmentResult, BackendError>;
}

impl<T: Detector + ?Sized> Detector for &T {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        (**self).detect(image)
    }
}

impl<T: Segmenter + ?Sized> Segmenter for &T {
    fn segment(&self, image: &ImageRef, prompt: &Prompt) -> Result<SegmentResult, BackendError> {
        (**self).segment(image, prompt)
    }
}
