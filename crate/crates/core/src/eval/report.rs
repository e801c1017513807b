use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{eval_ap, eval_class_agnostic, matched_pair_miou, EvalError, Prediction};
use crate::backend::{BackendStats, SceneAnnotation};
use crate::pipeline::{ImageOutcome, MaskCollection, Mode};

pub const CSV_HEADER: &str = "mode,AR,mIoU,AP,AP_s,AP_m,AP_l,time/img,calls/img";

const DEFINITIONS: &str = "ap: COCO mask AP@[.50:.95], 101-point interpolation, size split \
small<32^2<=medium<96^2<=large, category-tagged predictions only; \
ar: recall averaged over IoU 0.50:0.05:0.95 with greedy one-to-one matching in descending IoU \
order, categories ignored; miou: mean over ground-truth instances of the best IoU of any \
prediction on the same image; calls_per_image: segmenter calls (one per prompt)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTrack {
    Detector,
    ClassAgnostic,
    Both,
}

impl FromStr for EvalTrack {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "detector" => Ok(EvalTrack::Detector),
            "class_agnostic" | "class-agnostic" | "agnostic" => Ok(EvalTrack::ClassAgnostic),
            "both" => Ok(EvalTrack::Both),
            other => Err(format!("unknown track {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Option<Mode>,
    pub ap: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub ar: Option<f64>,
    pub miou: Option<f64>,
    /// Mean IoU over matched pairs only; computed on request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_miou: Option<f64>,
    pub seconds_per_image: f64,
    pub calls_per_image: f64,
    pub images_evaluated: usize,
    pub images_skipped: usize,
    pub definitions: String,
}

impl EvalReport {
    /// One row under [`CSV_HEADER`]; missing metrics are empty cells.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let mut row = String::new();
        write!(
            row,
            "{},{},{},{},{},{},{},{:.4},{:.2}",
            self.mode.map(|m| m.as_str()).unwrap_or(""),
            opt(self.ar),
            opt(self.miou),
            opt(self.ap),
            opt(self.ap_small),
            opt(self.ap_medium),
            opt(self.ap_large),
            self.seconds_per_image,
            self.calls_per_image,
        )
        .expect("writing to a String");
        row
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Report from already-materialised predictions.
///
/// `evaluated` holds ground truth for the images that ran; `stats` has one
/// entry per evaluated image. For the detector track only category-tagged
/// predictions are scored; asking for it when every prediction is untagged
/// is an error.
pub fn report_from_parts(
    preds: &[Prediction],
    evaluated: &[SceneAnnotation],
    stats: &[BackendStats],
    skipped: usize,
    track: EvalTrack,
    with_matched_miou: bool,
) -> Result<EvalReport, EvalError> {
    let tagged: Vec<Prediction> = preds
        .iter()
        .filter(|p| p.category_id.is_some())
        .cloned()
        .collect();
    let run_ap = match track {
        EvalTrack::Detector => {
            if tagged.is_empty() && !preds.is_empty() {
                return Err(EvalError::MissingCategory { index: 0 });
            }
            true
        }
        EvalTrack::Both => !tagged.is_empty() || preds.is_empty(),
        EvalTrack::ClassAgnostic => false,
    };
    let ap = if run_ap {
        Some(eval_ap(&tagged, evaluated)?)
    } else {
        None
    };
    let agnostic = match track {
        EvalTrack::Detector => None,
        _ => Some(eval_class_agnostic(preds, evaluated)?),
    };
    let matched_miou = if with_matched_miou {
        matched_pair_miou(preds, evaluated, 0.5)?
    } else {
        None
    };

    Ok(EvalReport {
        mode: None,
        ap: ap.and_then(|a| a.ap),
        ap_small: ap.and_then(|a| a.ap_small),
        ap_medium: ap.and_then(|a| a.ap_medium),
        ap_large: ap.and_then(|a| a.ap_large),
        ar: agnostic.map(|a| a.ar),
        miou: agnostic.map(|a| a.miou),
        matched_miou,
        seconds_per_image: mean(stats.iter().map(|s| s.wall_time)),
        calls_per_image: mean(stats.iter().map(|s| s.segmenter_calls as f64)),
        images_evaluated: evaluated.len(),
        images_skipped: skipped,
        definitions: DEFINITIONS.to_string(),
    })
}

pub fn predictions_of(image_id: &str, masks: &MaskCollection) -> Vec<Prediction> {
    masks
        .entries
        .iter()
        .map(|e| Prediction {
            image_id: image_id.to_string(),
            score: e.result.score,
            category_id: e.category_id,
            mask: e.result.mask.clone(),
        })
        .collect()
}

/// Means over successfully processed images; failed images are counted as
/// skipped and their ground truth left out.
pub fn aggregate_report(
    outcomes: &[ImageOutcome],
    gts: &[SceneAnnotation],
    track: EvalTrack,
) -> Result<EvalReport, EvalError> {
    let by_id: HashMap<&str, &SceneAnnotation> =
        gts.iter().map(|g| (g.image_id.as_str(), g)).collect();
    let missing: Vec<String> = outcomes
        .iter()
        .filter(|o| !by_id.contains_key(o.image_id.as_str()))
        .map(|o| o.image_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::UnknownImages(missing));
    }

    let mut seen = HashSet::new();
    let mut preds = Vec::new();
    let mut evaluated = Vec::new();
    let mut stats = Vec::new();
    let mut skipped = 0;
    for o in outcomes {
        if !seen.insert(o.image_id.as_str()) {
            continue;
        }
        match &o.result {
            Ok(run) => {
                preds.extend(predictions_of(&o.image_id, &run.masks));
                evaluated.push(by_id[o.image_id.as_str()].clone());
                stats.push(run.stats);
            }
            Err(_) => skipped += 1,
        }
    }
    report_from_parts(&preds, &evaluated, &stats, skipped, track, false)
}
