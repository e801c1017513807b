//! Class-agnostic coverage metrics.
//!
//! * mIoU: mean over ground-truth instances of the best IoU any prediction
//!   on the same image achieves (0 when the image has no predictions).
//! * AR: at each IoU threshold in 0.50:0.05:0.95, predictions and ground
//!   truth are paired one-to-one by taking candidate pairs in descending IoU
//!   order (ties by prediction index, then GT index); recall is matched GT
//!   over all GT. AR is the mean over thresholds.
//!
//! Categories are ignored.

use serde::{Deserialize, Serialize};

use super::{check_shapes, group_by_image, iou_thresholds, EvalError, Prediction};
use crate::backend::SceneAnnotation;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgnosticSummary {
    pub ar: f64,
    pub miou: f64,
}

/// IoU matrix `[prediction][gt]` for every image in `gts` order.
fn iou_tables(preds: &[Prediction], gts: &[SceneAnnotation]) -> Vec<Vec<Vec<f64>>> {
    let by_image = group_by_image(preds);
    gts.iter()
        .map(|scene| {
            by_image
                .get(scene.image_id.as_str())
                .map(|ix| {
                    ix.iter()
                        .map(|&p| {
                            scene
                                .instances
                                .iter()
                                .map(|g| preds[p].mask.iou(&g.mask).expect("shapes checked"))
                                .collect()
                        })
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect()
}

/// Greedy one-to-one pairs with IoU at least `threshold`.
pub(crate) fn greedy_pairs(ious: &[Vec<f64>], threshold: f64) -> Vec<(usize, usize, f64)> {
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (p, row) in ious.iter().enumerate() {
        for (g, &v) in row.iter().enumerate() {
            if v >= threshold && v > 0.0 {
                candidates.push((p, g, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let n_gt = ious.first().map_or(0, |r| r.len());
    let mut pred_used = vec![false; ious.len()];
    let mut gt_used = vec![false; n_gt];
    let mut pairs = Vec::new();
    for (p, g, v) in candidates {
        if !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            pairs.push((p, g, v));
        }
    }
    pairs
}

pub fn eval_class_agnostic(
    preds: &[Prediction],
    gts: &[SceneAnnotation],
) -> Result<AgnosticSummary, EvalError> {
    check_shapes(preds, gts)?;
    let total_gt: usize = gts.iter().map(|g| g.instances.len()).sum();
    if total_gt == 0 {
        return Ok(AgnosticSummary::default());
    }
    let tables = iou_tables(preds, gts);

    let mut best_sum = 0.0;
    for (scene, table) in gts.iter().zip(&tables) {
        for g in 0..scene.instances.len() {
            best_sum += table.iter().map(|row| row[g]).fold(0.0, f64::max);
        }
    }

    let thresholds = iou_thresholds();
    let recall_sum: f64 = thresholds
        .iter()
        .map(|&t| {
            let matched: usize = tables.iter().map(|tab| greedy_pairs(tab, t).len()).sum();
            matched as f64 / total_gt as f64
        })
        .sum();

    Ok(AgnosticSummary {
        ar: recall_sum / thresholds.len() as f64,
        miou: best_sum / total_gt as f64,
    })
}

/// Mean IoU over greedily matched pairs at `threshold`; `None` without
/// any pair. Unlike [`eval_class_agnostic`]'s mIoU this ignores missed
/// ground truth.
pub fn matched_pair_miou(
    preds: &[Prediction],
    gts: &[SceneAnnotation],
    threshold: f64,
) -> Result<Option<f64>, EvalError> {
    check_shapes(preds, gts)?;
    let (sum, n) = iou_tables(preds, gts)
        .iter()
        .flat_map(|tab| greedy_pairs(tab, threshold))
        .fold((0.0, 0usize), |(s, n), (_, _, v)| (s + v, n + 1));
    Ok((n > 0).then(|| sum / n as f64))
}
