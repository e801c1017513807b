//! Evaluation: category-aware COCO AP and class-agnostic AR / mIoU.

mod agnostic;
mod ap;
mod report;

pub use agnostic::{eval_class_agnostic, matched_pair_miou, AgnosticSummary};
pub use ap::{eval_ap, ApSummary, MAX_DETS};
pub use report::{
    aggregate_report, predictions_of, report_from_parts, EvalReport, EvalTrack, CSV_HEADER,
};

use std::collections::HashMap;

use thiserror::Error;

use crate::backend::SceneAnnotation;
use crate::mask::BinaryMask;

/// A scored mask attributed to an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    pub score: f64,
    pub category_id: Option<i64>,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("prediction {index} has no category_id; the detector track needs categories")]
    MissingCategory { index: usize },
    #[error("prediction {index} is {got:?} but image {image_id} is {expected:?}")]
    Shape {
        index: usize,
        image_id: String,
        got: (u32, u32),
        expected: (u32, u32),
    },
    #[error("no ground truth for images: {}", .0.join(", "))]
    UnknownImages(Vec<String>),
}

/// `n` evenly spaced values from `start` to `stop` inclusive, computed the
/// way numpy's `linspace` does so thresholds land on identical floats.
pub(crate) fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    let step = (stop - start) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| start + i as f64 * step).collect();
    v[n - 1] = stop;
    v
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> Vec<f64> {
    linspace(0.5, 0.95, 10)
}

/// Recall sample points 0.00, 0.01, ..., 1.00.
pub fn recall_thresholds() -> Vec<f64> {
    linspace(0.0, 1.0, 101)
}

/// Predictions grouped by image, keeping their global indices.
fn group_by_image(preds: &[Prediction]) -> HashMap<&str, Vec<usize>> {
    let mut by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, p) in preds.iter().enumerate() {
        by_image.entry(p.image_id.as_str()).or_default().push(i);
    }
    by_image
}

fn check_shapes(preds: &[Prediction], gts: &[SceneAnnotation]) -> Result<(), EvalError> {
    let dims: HashMap<&str, (u32, u32)> = gts
        .iter()
        .map(|g| (g.image_id.as_str(), (g.width, g.height)))
        .collect();
    for (index, p) in preds.iter().enumerate() {
        if let Some(&expected) = dims.get(p.image_id.as_str()) {
            let got = (p.mask.width(), p.mask.height());
            if got != expected {
                return Err(EvalError::Shape {
                    index,
                    image_id: p.image_id.clone(),
                    got,
                    expected,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        let t = iou_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
        let r = recall_thresholds();
        assert_eq!(r.len(), 101);
        assert_eq!(r[100], 1.0);
        assert!((r[37] - 0.37).abs() < 1e-15);
    }
}
