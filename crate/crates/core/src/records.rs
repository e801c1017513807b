//! Prediction JSON-lines, one object per mask:
//!
//! ```text
//! {"image_id":"scene-0001","score":0.93,"category_id":3,"provenance":"box","rle":{"size":[h,w],"counts":[...]}}
//! ```
//!
//! `category_id` is `null` for point-derived masks.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::scene::string_or_int;
use crate::eval::Prediction;
use crate::mask::RleMask;
use crate::pipeline::{MaskCollection, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(deserialize_with = "string_or_int")]
    pub image_id: String,
    pub score: f64,
    pub category_id: Option<i64>,
    pub provenance: Provenance,
    pub rle: RleMask,
}

impl PredictionRecord {
    pub fn into_prediction(self) -> Prediction {
        Prediction {
            image_id: self.image_id,
            score: self.score,
            category_id: self.category_id,
            mask: self.rle.decode(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn records_of(image_id: &str, masks: &MaskCollection) -> Vec<PredictionRecord> {
    masks
        .entries
        .iter()
        .map(|e| PredictionRecord {
            image_id: image_id.to_string(),
            score: e.result.score,
            category_id: e.category_id,
            provenance: e.provenance,
            rle: RleMask::encode(&e.result.mask),
        })
        .collect()
}

pub fn write_predictions(
    mut out: impl Write,
    image_id: &str,
    masks: &MaskCollection,
) -> io::Result<()> {
    for rec in records_of(image_id, masks) {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions(input: impl BufRead) -> Result<Vec<PredictionRecord>, RecordError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| RecordError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}
