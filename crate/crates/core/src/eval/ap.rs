//! COCO-style mask AP with size splits.
//!
//! Follows the reference cocoeval procedure: per image and category,
//! detections are ranked by score (stable), capped at [`MAX_DETS`], and
//! greedily matched at each IoU threshold, preferring non-ignored ground
//! truth. Precision is made monotone and sampled at 101 recall points, then
//! averaged over thresholds, recall points and categories. Crowd regions are
//! not supported.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    check_shapes, group_by_image, iou_thresholds, recall_thresholds, EvalError, Prediction,
};
use crate::backend::{SceneAnnotation, SizeClass};

/// Detections per image and category considered by the evaluator.
pub const MAX_DETS: usize = 100;

/// `None` where no category has ground truth in the area range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ApSummary {
    pub ap: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
}

#[derive(Clone, Copy)]
enum AreaRange {
    All,
    Only(SizeClass),
}

impl AreaRange {
    fn contains(&self, area: u64) -> bool {
        match self {
            AreaRange::All => true,
            AreaRange::Only(c) => SizeClass::of_area(area) == *c,
        }
    }
}

/// Matching outcome for one image/category/area range.
struct ImageEval {
    scores: Vec<f64>,
    /// `[threshold][detection]`
    matched: Vec<Vec<bool>>,
    ignored: Vec<Vec<bool>>,
    gt_counted: usize,
}

fn evaluate_image(
    dts: &[&Prediction],
    gt_masks: &[&crate::mask::BinaryMask],
    range: AreaRange,
    thresholds: &[f64],
) -> Option<ImageEval> {
    if dts.is_empty() && gt_masks.is_empty() {
        return None;
    }
    // ground truth: in-range first, stable
    let gt_areas: Vec<u64> = gt_masks.iter().map(|m| m.area()).collect();
    let mut gt_order: Vec<usize> = (0..gt_masks.len()).collect();
    gt_order.sort_by_key(|&g| !range.contains(gt_areas[g]));
    let gt_ignore: Vec<bool> = gt_order
        .iter()
        .map(|&g| !range.contains(gt_areas[g]))
        .collect();

    let ious: Vec<Vec<f64>> = dts
        .iter()
        .map(|d| {
            gt_order
                .iter()
                .map(|&g| d.mask.iou(gt_masks[g]).expect("shapes checked"))
                .collect()
        })
        .collect();

    let mut matched = vec![vec![false; dts.len()]; thresholds.len()];
    let mut ignored = vec![vec![false; dts.len()]; thresholds.len()];
    for (t, &thr) in thresholds.iter().enumerate() {
        let mut gt_taken = vec![false; gt_order.len()];
        for d in 0..dts.len() {
            let mut best_iou = thr.min(1.0 - 1e-10);
            let mut best: Option<usize> = None;
            for g in 0..gt_order.len() {
                if gt_taken[g] {
                    continue;
                }
                // already holding a counted match; ignored GT sort last
                if let Some(m) = best {
                    if !gt_ignore[m] && gt_ignore[g] {
                        break;
                    }
                }
                if ious[d][g] < best_iou {
                    continue;
                }
                best_iou = ious[d][g];
                best = Some(g);
            }
            if let Some(m) = best {
                gt_taken[m] = true;
                matched[t][d] = true;
                ignored[t][d] = gt_ignore[m];
            } else if !range.contains(dts[d].mask.area()) {
                ignored[t][d] = true;
            }
        }
    }

    Some(ImageEval {
        scores: dts.iter().map(|d| d.score).collect(),
        matched,
        ignored,
        gt_counted: gt_ignore.iter().filter(|&&i| !i).count(),
    })
}

/// Mean interpolated precision for one category over all thresholds, or
/// `None` when the category has no counted ground truth.
fn category_precision(evals: &[ImageEval], n_thresholds: usize, rec_thr: &[f64]) -> Option<f64> {
    let npig: usize = evals.iter().map(|e| e.gt_counted).sum();
    if npig == 0 {
        return None;
    }
    // concatenate in image order, then stable sort by descending score
    let mut flat: Vec<(usize, usize)> = Vec::new();
    for (i, e) in evals.iter().enumerate() {
        flat.extend((0..e.scores.len()).map(|d| (i, d)));
    }
    flat.sort_by(|a, b| evals[b.0].scores[b.1].total_cmp(&evals[a.0].scores[a.1]));

    let mut total = 0.0;
    for t in 0..n_thresholds {
        let (mut tp, mut fp) = (0.0f64, 0.0f64);
        let mut recall = Vec::with_capacity(flat.len());
        let mut precision = Vec::with_capacity(flat.len());
        for &(i, d) in &flat {
            let e = &evals[i];
            if !e.ignored[t][d] {
                if e.matched[t][d] {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
            recall.push(tp / npig as f64);
            precision.push(if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 });
        }
        for k in (1..precision.len()).rev() {
            if precision[k] > precision[k - 1] {
                precision[k - 1] = precision[k];
            }
        }
        let mut sum = 0.0;
        for &r in rec_thr {
            // first index with recall >= r
            let idx = recall.partition_point(|&x| x < r);
            match precision.get(idx) {
                Some(&p) => sum += p,
                None => break,
            }
        }
        total += sum / rec_thr.len() as f64;
    }
    Some(total / n_thresholds as f64)
}

fn ap_for_range(
    preds: &[Prediction],
    gts: &[SceneAnnotation],
    categories: &BTreeSet<i64>,
    range: AreaRange,
) -> Option<f64> {
    let thresholds = iou_thresholds();
    let rec_thr = recall_thresholds();
    let by_image = group_by_image(preds);

    let mut per_category = Vec::new();
    for &cat in categories {
        let mut evals = Vec::new();
        for scene in gts {
            let gt_masks: Vec<_> = scene
                .instances
                .iter()
                .filter(|i| i.category_id == cat)
                .map(|i| &i.mask)
                .collect();
            let mut dts: Vec<&Prediction> = by_image
                .get(scene.image_id.as_str())
                .map(|ix| ix.iter().map(|&i| &preds[i]).collect())
                .unwrap_or_default();
            dts.retain(|p| p.category_id == Some(cat));
            dts.sort_by(|a, b| b.score.total_cmp(&a.score));
            dts.truncate(MAX_DETS);
            if let Some(e) = evaluate_image(&dts, &gt_masks, range, &thresholds) {
                evals.push(e);
            }
        }
        if let Some(p) = category_precision(&evals, thresholds.len(), &rec_thr) {
            per_category.push(p);
        }
    }
    if per_category.is_empty() {
        None
    } else {
        Some(per_category.iter().sum::<f64>() / per_category.len() as f64)
    }
}

/// AP@[0.50:0.95] overall and per size class.
///
/// Every prediction must carry a category id. Predictions on images absent
/// from `gts`, or with categories absent from the ground truth, are ignored.
pub fn eval_ap(preds: &[Prediction], gts: &[SceneAnnotation]) -> Result<ApSummary, EvalError> {
    if let Some(index) = preds.iter().position(|p| p.category_id.is_none()) {
        return Err(EvalError::MissingCategory { index });
    }
    check_shapes(preds, gts)?;
    let categories: BTreeSet<i64> = gts
        .iter()
        .flat_map(|g| g.instances.iter().map(|i| i.category_id))
        .collect();
    let ap = |r| ap_for_range(preds, gts, &categories, r);
    Ok(ApSummary {
        ap: ap(AreaRange::All),
        ap_small: ap(AreaRange::Only(SizeClass::Small)),
        ap_medium: ap(AreaRange::Only(SizeClass::Medium)),
        ap_large: ap(AreaRange::Only(SizeClass::Large)),
    })
}
