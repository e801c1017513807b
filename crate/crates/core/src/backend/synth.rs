//! Synthetic ground-truth scenes of rectangles and digital ellipses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Instance, SceneAnnotation};
use crate::mask::BinaryMask;

/// Category ids handed out round-robin to synthetic instances.
pub const SYNTH_CATEGORIES: [i64; 5] = [1, 2, 3, 4, 5];

/// Upper bound on pairwise mask IoU between synthetic instances.
pub const MAX_PAIR_IOU: f64 = 0.3;

const ATTEMPTS_PER_INSTANCE: usize = 500;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("placed {placed} of {requested} instances before giving up")]
    GenerationFailure { placed: usize, requested: usize },
    #[error("image must be at least 1x1")]
    EmptyImage,
}

fn ellipse(width: u32, height: u32, x0: u32, y0: u32, bw: u32, bh: u32) -> BinaryMask {
    let (rx, ry) = (bw as f64 / 2.0, bh as f64 / 2.0);
    let (cx, cy) = (x0 as f64 + rx, y0 as f64 + ry);
    BinaryMask::from_fn(width, height, |x, y| {
        let dx = (x as f64 + 0.5 - cx) / rx;
        let dy = (y as f64 + 0.5 - cy) / ry;
        dx * dx + dy * dy <= 1.0
    })
    .expect("positive dimensions")
}

fn rectangle(width: u32, height: u32, x0: u32, y0: u32, bw: u32, bh: u32) -> BinaryMask {
    BinaryMask::from_fn(width, height, |x, y| {
        x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh
    })
    .expect("positive dimensions")
}

/// Deterministic scene with `n_instances` shapes whose pairwise IoU stays
/// at or below [`MAX_PAIR_IOU`].
///
/// Shape sides range from 1/16 to 1/3 of the shorter image side (at least
/// four pixels). Placement uses rejection sampling with a bounded number
/// of attempts per instance.
pub fn synth_scene(
    image_id: impl Into<String>,
    width: u32,
    height: u32,
    n_instances: usize,
    seed: u64,
) -> Result<SceneAnnotation, SynthError> {
    if width == 0 || height == 0 {
        return Err(SynthError::EmptyImage);
    }
    let short = width.min(height);
    let min_side = (short / 16).max(4).min(short);
    let max_side = (short / 3).max(min_side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances: Vec<Instance> = Vec::with_capacity(n_instances);

    while instances.len() < n_instances {
        let mut placed = false;
        for _ in 0..ATTEMPTS_PER_INSTANCE {
            let bw = rng.gen_range(min_side..=max_side).min(width);
            let bh = rng.gen_range(min_side..=max_side).min(height);
            let x0 = rng.gen_range(0..=width - bw);
            let y0 = rng.gen_range(0..=height - bh);
            let mask = if rng.gen_bool(0.5) {
                rectangle(width, height, x0, y0, bw, bh)
            } else {
                ellipse(width, height, x0, y0, bw, bh)
            };
            if mask.is_empty() {
                continue;
            }
            let fits = instances
                .iter()
                .all(|other| mask.iou(&other.mask).expect("same shape") <= MAX_PAIR_IOU);
            if fits {
                let category_id = SYNTH_CATEGORIES[instances.len() % SYNTH_CATEGORIES.len()];
                instances.push(Instance { mask, category_id });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SynthError::GenerationFailure {
                placed: instances.len(),
                requested: n_instances,
            });
        }
    }

    Ok(SceneAnnotation::new(image_id, width, height, instances).expect("shapes match the image"))
}
