//! Ground-truth oracles standing in for a detector and a promptable segmenter.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    BackendError, Detection, Detector, ImageRef, SceneAnnotation, SegmentResult, Segmenter,
};
use crate::mask::BinaryMask;
use crate::prompt::{BoxPrompt, PointPrompt, Prompt};
use crate::seed;

/// Score attached to background-region masks returned for point prompts.
pub const BACKGROUND_SCORE: f64 = 0.8;

/// Simulated detector: each instance is found with probability `recall`.
///
/// The keep draw and the score for instance `k` depend only on
/// `(seed, image_id, k)`, so reruns and reorderings reproduce exactly.
pub fn oracle_detect(scene: &SceneAnnotation, recall: f64, seed: u64) -> Vec<Detection> {
    let image_key = seed::hash_str(&scene.image_id);
    scene
        .instances
        .iter()
        .enumerate()
        .filter_map(|(k, inst)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(&[seed, image_key, k as u64]));
            let draw: f64 = rng.gen();
            let score = 0.5 + 0.5 * rng.gen::<f64>();
            if draw < recall {
                inst.mask.bbox().map(|bbox| Detection {
                    bbox,
                    category_id: inst.category_id,
                    score,
                })
            } else {
                None
            }
        })
        .collect()
}

fn check_image(scene: &SceneAnnotation, image: &ImageRef) -> Result<(), BackendError> {
    if image.image_id == scene.image_id {
        Ok(())
    } else {
        Err(BackendError::UnknownImage(image.image_id.clone()))
    }
}

pub struct OracleDetector<'a> {
    scene: &'a SceneAnnotation,
    recall: f64,
    seed: u64,
    calls: AtomicU64,
}

impl<'a> OracleDetector<'a> {
    pub fn new(scene: &'a SceneAnnotation, recall: f64, seed: u64) -> Self {
        Self {
            scene,
            recall,
            seed,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Detector for OracleDetector<'_> {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        check_image(self.scene, image)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(oracle_detect(self.scene, self.recall, self.seed))
    }
}

/// Answers prompts with ground-truth masks.
///
/// Boxes resolve to the instance whose tight box overlaps the prompt best.
/// Points resolve to the smallest instance containing them, or to the
/// 4-connected background component under the point.
pub struct OracleSegmenter<'a> {
    scene: &'a SceneAnnotation,
    by_area: Vec<usize>,
    background: OnceLock<Vec<u32>>,
    components: Mutex<HashMap<u32, BinaryMask>>,
    calls: AtomicU64,
}

const NO_LABEL: u32 = u32::MAX;

impl<'a> OracleSegmenter<'a> {
    pub fn new(scene: &'a SceneAnnotation) -> Self {
        let areas: Vec<u64> = scene.instances.iter().map(|i| i.mask.area()).collect();
        let mut by_area: Vec<usize> = (0..scene.instances.len()).collect();
        by_area.sort_by_key(|&i| (areas[i], i));
        Self {
            scene,
            by_area,
            background: OnceLock::new(),
            components: Mutex::new(HashMap::new()),
            calls: AtomicU64::new(0),
        }
    }

    /// Number of prompts answered so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn empty(&self) -> BinaryMask {
        BinaryMask::new(self.scene.width, self.scene.height).expect("validated scene")
    }

    pub fn segment_box(&self, prompt: &BoxPrompt) -> SegmentResult {
        let mut best: Option<(usize, f64)> = None;
        for (k, inst) in self.scene.instances.iter().enumerate() {
            let Some(b) = inst.mask.bbox() else { continue };
            let score = b.iou(&prompt.bbox);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((k, score));
            }
        }
        match best {
            Some((k, score)) if score > 0.0 => SegmentResult {
                mask: self.scene.instances[k].mask.clone(),
                score,
            },
            _ => SegmentResult {
                mask: self.empty(),
                score: 0.0,
            },
        }
    }

    pub fn segment_point(&self, prompt: &PointPrompt) -> Result<SegmentResult, BackendError> {
        let (w, h) = (self.scene.width as f64, self.scene.height as f64);
        if !(prompt.x >= 0.0 && prompt.x < w && prompt.y >= 0.0 && prompt.y < h) {
            return Err(BackendError::InvalidPrompt(format!(
                "point ({}, {}) outside {}x{} image",
                prompt.x, prompt.y, self.scene.width, self.scene.height
            )));
        }
        let (x, y) = prompt.pixel();
        if let Some(&k) = self
            .by_area
            .iter()
            .find(|&&k| self.scene.instances[k].mask.get(x, y))
        {
            return Ok(SegmentResult {
                mask: self.scene.instances[k].mask.clone(),
                score: 1.0,
            });
        }
        let labels = self.background.get_or_init(|| self.label_background());
        let label = labels[y as usize * self.scene.width as usize + x as usize];
        debug_assert_ne!(label, NO_LABEL);
        let mut cache = self.components.lock().expect("component cache poisoned");
        let mask = cache
            .entry(label)
            .or_insert_with(|| {
                let width = self.scene.width as usize;
                BinaryMask::from_fn(self.scene.width, self.scene.height, |x, y| {
                    labels[y as usize * width + x as usize] == label
                })
                .expect("validated scene")
            })
            .clone();
        Ok(SegmentResult {
            mask,
            score: BACKGROUND_SCORE,
        })
    }

    /// 4-connected labelling of the complement of all instances.
    fn label_background(&self) -> Vec<u32> {
        let (w, h) = (self.scene.width as usize, self.scene.height as usize);
        let free = self.scene.foreground().complement();
        let mut labels = vec![NO_LABEL; w * h];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..w * h {
            let (sx, sy) = ((start % w) as u32, (start / w) as u32);
            if labels[start] != NO_LABEL || !free.get(sx, sy) {
                continue;
            }
            labels[start] = next;
            queue.push_back(start);
            while let Some(p) = queue.pop_front() {
                let (px, py) = (p % w, p / w);
                let mut visit = |q: usize| {
                    if labels[q] == NO_LABEL && free.get((q % w) as u32, (q / w) as u32) {
                        labels[q] = next;
                        queue.push_back(q);
                    }
                };
                if px > 0 {
                    visit(p - 1);
                }
                if px + 1 < w {
                    visit(p + 1);
                }
                if py > 0 {
                    visit(p - w);
                }
                if py + 1 < h {
                    visit(p + w);
                }
            }
            next += 1;
        }
        labels
    }
}

impl Segmenter for OracleSegmenter<'_> {
    fn segment(&self, image: &ImageRef, prompt: &Prompt) -> Result<SegmentResult, BackendError> {
        check_image(self.scene, image)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        match prompt {
            Prompt::Box(b) => Ok(self.segment_box(b)),
            Prompt::Point(p) => self.segment_point(p),
        }
    }
}
