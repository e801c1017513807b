//! Prompt generation: point grids, coverage-filtered grids and box prompts.

use std::num::NonZeroU32;

use serde::{Deserialize, Serialize};

use crate::backend::Detection;
use crate::mask::{BBox, BinaryMask};

/// Default confidence floor applied to detector output.
pub const DEFAULT_DETECTION_FLOOR: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPrompt {
    pub x: f64,
    pub y: f64,
}

impl PointPrompt {
    /// Pixel containing the point (floor of each coordinate).
    pub fn pixel(&self) -> (u32, u32) {
        (self.x.floor() as u32, self.y.floor() as u32)
    }
}

/// Category and score of the detection a box prompt came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRef {
    pub category_id: i64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub bbox: BBox,
    pub source: Option<DetectionRef>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prompt {
    Box(BoxPrompt),
    Point(PointPrompt),
}

/// Square point grid, `points_per_side` points along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridSpec {
    points_per_side: NonZeroU32,
}

impl GridSpec {
    pub fn new(points_per_side: u32) -> Option<Self> {
        NonZeroU32::new(points_per_side).map(|points_per_side| Self { points_per_side })
    }

    pub fn points_per_side(&self) -> u32 {
        self.points_per_side.get()
    }

    pub fn point_count(&self) -> usize {
        let n = self.points_per_side() as usize;
        n * n
    }
}

/// Cell centres of a uniform `n x n` partition, row-major.
pub fn full_grid(spec: GridSpec, width: u32, height: u32) -> Vec<PointPrompt> {
    let n = spec.points_per_side();
    let (cw, ch) = (width as f64 / n as f64, height as f64 / n as f64);
    let mut points = Vec::with_capacity(spec.point_count());
    for j in 0..n {
        for i in 0..n {
            points.push(PointPrompt {
                x: (i as f64 + 0.5) * cw,
                y: (j as f64 + 0.5) * ch,
            });
        }
    }
    points
}

/// Grid points whose pixel is not set in `coverage`, in grid order.
pub fn uncovered_grid(spec: GridSpec, coverage: &BinaryMask) -> Vec<PointPrompt> {
    full_grid(spec, coverage.width(), coverage.height())
        .into_iter()
        .filter(|p| {
            let (x, y) = p.pixel();
            !coverage.get(x, y)
        })
        .collect()
}

/// Clamp, filter by `floor` and order detections by descending score.
///
/// Detections scoring below `floor` or collapsing to nothing after clamping
/// are dropped. Equal scores keep input order.
pub fn boxes_from_detections(
    detections: &[Detection],
    width: u32,
    height: u32,
    floor: f64,
) -> Vec<BoxPrompt> {
    let mut prompts: Vec<BoxPrompt> = detections
        .iter()
        .filter(|d| d.score >= floor)
        .filter_map(|d| {
            d.bbox.clamp(width, height).map(|bbox| BoxPrompt {
                bbox,
                source: Some(DetectionRef {
                    category_id: d.category_id,
                    score: d.score,
                }),
            })
        })
        .collect();
    // stable sort: ties stay in input order
    prompts.sort_by(|a, b| {
        let sa = a.source.map_or(0.0, |s| s.score);
        let sb = b.source.map_or(0.0, |s| s.score);
        sb.total_cmp(&sa)
    });
    prompts
}
