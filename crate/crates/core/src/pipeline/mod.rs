//! The three full-scene segmentation strategies.
//!
//! * **boxes-only**: every detection becomes a box prompt; duplicates are
//!   merged by IoU suppression.
//! * **hybrid**: boxes-only, then a sparse point grid restricted to pixels
//!   not covered by any box-derived mask; both stages merged jointly with
//!   box-derived masks winning score ties.
//! * **hierarchical**: a coarse point grid over the whole image, keeping
//!   only high-confidence masks as coverage, then a dense grid over what
//!   remains uncovered.

mod nms;

pub use nms::{coverage_of, iou_nms};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, BackendStats, Detector, ImageRef, SegmentResult, Segmenter};
use crate::prompt::{
    boxes_from_detections, full_grid, uncovered_grid, GridSpec, PointPrompt, Prompt,
    DEFAULT_DETECTION_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Hierarchical,
    BoxesOnly,
    Hybrid,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Hierarchical, Mode::BoxesOnly, Mode::Hybrid];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Hierarchical => "hierarchical",
            Mode::BoxesOnly => "boxes_only",
            Mode::Hybrid => "hybrid",
        }
    }

    pub fn needs_detector(&self) -> bool {
        !matches!(self, Mode::Hierarchical)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hierarchical" => Ok(Mode::Hierarchical),
            "boxes_only" | "boxes-only" | "boxes" => Ok(Mode::BoxesOnly),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(PipelineError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub coarse_grid: GridSpec,
    pub dense_grid: GridSpec,
    pub sparse_grid: GridSpec,
    pub nms_iou_threshold: f64,
    pub high_conf_threshold: f64,
    pub detection_conf_floor: f64,
    /// Pixels; smaller masks are dropped before suppression.
    pub min_mask_area: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Hybrid,
            coarse_grid: GridSpec::new(8).expect("nonzero"),
            dense_grid: GridSpec::new(32).expect("nonzero"),
            sparse_grid: GridSpec::new(16).expect("nonzero"),
            nms_iou_threshold: 0.7,
            high_conf_threshold: 0.88,
            detection_conf_floor: DEFAULT_DETECTION_FLOOR,
            min_mask_area: 16,
        }
    }
}

impl PipelineConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, v) in [
            ("nms_iou_threshold", self.nms_iou_threshold),
            ("high_conf_threshold", self.high_conf_threshold),
            ("detection_conf_floor", self.detection_conf_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PipelineError::Config(format!(
                    "{name} = {v} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Which prompt produced a mask. Declaration order is the tie-break order
/// used by suppression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[serde(rename = "box")]
    BoxPrompt,
    PointRound1,
    PointRound2,
    #[serde(rename = "sparse")]
    SparsePoint,
}

impl Provenance {
    fn rank(&self) -> u8 {
        match self {
            Provenance::BoxPrompt => 0,
            Provenance::PointRound1 => 1,
            Provenance::PointRound2 => 2,
            Provenance::SparsePoint => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskEntry {
    pub result: SegmentResult,
    pub provenance: Provenance,
    pub category_id: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskCollection {
    pub width: u32,
    pub height: u32,
    pub entries: Vec<MaskEntry>,
}

impl MaskCollection {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: MaskEntry) -> Result<(), PipelineError> {
        let m = &entry.result.mask;
        if m.width() != self.width || m.height() != self.height {
            return Err(PipelineError::Shape {
                got: (m.width(), m.height()),
                expected: (self.width, self.height),
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn coverage(&self) -> crate::mask::BinaryMask {
        coverage_of(&self.entries, self.width, self.height)
    }
}

/// Prompts issued per stage, counted independently of the backends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptCounts {
    pub box_prompts: u64,
    pub round1_points: u64,
    pub round2_points: u64,
    pub sparse_points: u64,
}

impl PromptCounts {
    pub fn total(&self) -> u64 {
        self.box_prompts + self.round1_points + self.round2_points + self.sparse_points
    }
}

/// Output of one image through one mode.
#[derive(Debug, Clone)]
pub struct ImageRun {
    pub masks: MaskCollection,
    pub stats: BackendStats,
    pub prompts: PromptCounts,
}

/// Result of one image in a batch; failures carry a diagnostic.
#[derive(Debug, Clone)]
pub struct ImageOutcome {
    pub image_id: String,
    pub result: Result<ImageRun, String>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("mode requires a detector backend")]
    MissingDetector,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backend returned a {got:?} mask for a {expected:?} image")]
    Shape {
        got: (u32, u32),
        expected: (u32, u32),
    },
}

/// Counts backend calls as they are made.
struct Session<'a> {
    image: &'a ImageRef,
    segmenter: &'a dyn Segmenter,
    config: &'a PipelineConfig,
    stats: BackendStats,
    prompts: PromptCounts,
}

impl<'a> Session<'a> {
    fn new(image: &'a ImageRef, segmenter: &'a dyn Segmenter, config: &'a PipelineConfig) -> Self {
        Self {
            image,
            segmenter,
            config,
            stats: BackendStats::default(),
            prompts: PromptCounts::default(),
        }
    }

    fn segment(&mut self, prompt: &Prompt) -> Result<SegmentResult, PipelineError> {
        self.stats.segmenter_calls += 1;
        let r = self.segmenter.segment(self.image, prompt)?;
        let m = &r.mask;
        if m.width() != self.image.width || m.height() != self.image.height {
            return Err(PipelineError::Shape {
                got: (m.width(), m.height()),
                expected: (self.image.width, self.image.height),
            });
        }
        Ok(r)
    }

    fn big_enough(&self, r: &SegmentResult) -> bool {
        r.mask.area() >= self.config.min_mask_area
    }

    /// Box-prompt stage shared by boxes-only and hybrid.
    fn box_stage(&mut self, detector: &dyn Detector) -> Result<Vec<MaskEntry>, PipelineError> {
        self.stats.detector_calls += 1;
        let detections = detector.detect(self.image)?;
        let prompts = boxes_from_detections(
            &detections,
            self.image.width,
            self.image.height,
            self.config.detection_conf_floor,
        );
        let mut out = Vec::with_capacity(prompts.len());
        for p in prompts {
            self.prompts.box_prompts += 1;
            let r = self.segment(&Prompt::Box(p))?;
            if self.big_enough(&r) {
                out.push(MaskEntry {
                    result: r,
                    provenance: Provenance::BoxPrompt,
                    category_id: p.source.map(|s| s.category_id),
                });
            }
        }
        Ok(out)
    }

    fn point_stage(
        &mut self,
        points: &[PointPrompt],
        provenance: Provenance,
    ) -> Result<Vec<MaskEntry>, PipelineError> {
        let mut out = Vec::with_capacity(points.len());
        for p in points {
            match provenance {
                Provenance::PointRound1 => self.prompts.round1_points += 1,
                Provenance::PointRound2 => self.prompts.round2_points += 1,
                Provenance::SparsePoint => self.prompts.sparse_points += 1,
                Provenance::BoxPrompt => unreachable!("point stage with box provenance"),
            }
            let r = self.segment(&Prompt::Point(*p))?;
            if self.big_enough(&r) {
                out.push(MaskEntry {
                    result: r,
                    provenance,
                    category_id: None,
                });
            }
        }
        Ok(out)
    }

    fn finish(self, entries: Vec<MaskEntry>, started: Instant) -> ImageRun {
        let collection = MaskCollection {
            width: self.image.width,
            height: self.image.height,
            entries,
        };
        let mut stats = self.stats;
        let masks = iou_nms(collection, self.config.nms_iou_threshold);
        stats.wall_time = started.elapsed().as_secs_f64();
        ImageRun {
            masks,
            stats,
            prompts: self.prompts,
        }
    }
}

pub fn run_boxes_only(
    image: &ImageRef,
    detector: &dyn Detector,
    segmenter: &dyn Segmenter,
    config: &PipelineConfig,
) -> Result<ImageRun, PipelineError> {
    let started = Instant::now();
    let mut session = Session::new(image, segmenter, config);
    let entries = session.box_stage(detector)?;
    Ok(session.finish(entries, started))
}

pub fn run_hybrid(
    image: &ImageRef,
    detector: &dyn Detector,
    segmenter: &dyn Segmenter,
    config: &PipelineConfig,
) -> Result<ImageRun, PipelineError> {
    let started = Instant::now();
    let mut session = Session::new(image, segmenter, config);
    let mut entries = session.box_stage(detector)?;
    let coverage = coverage_of(&entries, image.width, image.height);
    let points = uncovered_grid(config.sparse_grid, &coverage);
    entries.extend(session.point_stage(&points, Provenance::SparsePoint)?);
    Ok(session.finish(entries, started))
}

pub fn run_hierarchical(
    image: &ImageRef,
    segmenter: &dyn Segmenter,
    config: &PipelineConfig,
) -> Result<ImageRun, PipelineError> {
    let started = Instant::now();
    let mut session = Session::new(image, segmenter, config);
    let coarse = full_grid(config.coarse_grid, image.width, image.height);
    let mut entries: Vec<MaskEntry> = session
        .point_stage(&coarse, Provenance::PointRound1)?
        .into_iter()
        .filter(|e| e.result.score >= config.high_conf_threshold)
        .collect();
    let coverage = coverage_of(&entries, image.width, image.height);
    let dense = uncovered_grid(config.dense_grid, &coverage);
    entries.extend(session.point_stage(&dense, Provenance::PointRound2)?);
    Ok(session.finish(entries, started))
}

/// Dispatch on `config.mode`.
pub fn run(
    image: &ImageRef,
    detector: Option<&dyn Detector>,
    segmenter: &dyn Segmenter,
    config: &PipelineConfig,
) -> Result<ImageRun, PipelineError> {
    config.validate()?;
    match config.mode {
        Mode::Hierarchical => run_hierarchical(image, segmenter, config),
        Mode::BoxesOnly => run_boxes_only(
            image,
            detector.ok_or(PipelineError::MissingDetector)?,
            segmenter,
            config,
        ),
        Mode::Hybrid => run_hybrid(
            image,
            detector.ok_or(PipelineError::MissingDetector)?,
            segmenter,
            config,
        ),
    }
}
