//! Detector-guided promptable segmentation with coverage-driven sparse
//! prompting, plus the evaluation machinery to measure it.
//!
//! The crate never touches image pixels. Segmenters and detectors are
//! reached through the [`backend::Detector`] and [`backend::Segmenter`]
//! traits, implemented by ground-truth oracles for synthetic scenes and by a
//! JSON-lines client for external model servers.

pub mod backend;
pub mod eval;
pub mod mask;
pub mod pipeline;
pub mod prompt;
pub mod records;
pub mod seed;

pub use backend::{Detection, SceneAnnotation, SegmentResult};
pub use mask::{BBox, BinaryMask, MaskError, RleMask};
pub use pipeline::{MaskCollection, Mode, PipelineConfig};
