//! Independent reference implementations and fixture builders shared by the
//! integration tests. Everything here works pixel by pixel on purpose.

#![allow(dead_code)]

use promptplan::backend::{synth_scene, Instance, SceneAnnotation};
use promptplan::eval::{iou_thresholds, recall_thresholds, Prediction};
use promptplan::mask::{BBox, BinaryMask};
use promptplan::pipeline::{MaskCollection, MaskEntry, Provenance};
use promptplan::SegmentResult;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// (intersection, union) by scanning every pixel.
pub fn naive_counts(a: &BinaryMask, b: &BinaryMask) -> (u64, u64) {
    let (mut i, mut u) = (0, 0);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.get(x, y), b.get(x, y));
            i += (p && q) as u64;
            u += (p || q) as u64;
        }
    }
    (i, u)
}

pub fn naive_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (i, u) = naive_counts(a, b);
    if u == 0 {
        0.0
    } else {
        i as f64 / u as f64
    }
}

pub fn naive_area(m: &BinaryMask) -> u64 {
    let mut n = 0;
    for y in 0..m.height() {
        for x in 0..m.width() {
            n += m.get(x, y) as u64;
        }
    }
    n
}

/// Random mask in one of several styles: noise of random density, a union
/// of rectangles, a single blob, or empty/full.
pub fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BinaryMask {
    match rng.gen_range(0..10) {
        0 => BinaryMask::new(w, h).unwrap(),
        1 => BinaryMask::full(w, h).unwrap(),
        2..=4 => {
            let p: f64 = rng.gen();
            BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(p)).unwrap()
        }
        _ => {
            let mut m = BinaryMask::new(w, h).unwrap();
            for _ in 0..rng.gen_range(1..4) {
                let b = random_box(rng, w, h);
                m.union_into(&BinaryMask::from_box(w, h, b).unwrap())
                    .unwrap();
            }
            m
        }
    }
}

pub fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BBox {
    let x0 = rng.gen_range(0..w) as i32;
    let y0 = rng.gen_range(0..h) as i32;
    let x1 = rng.gen_range(x0 + 1..=w as i32);
    let y1 = rng.gen_range(y0 + 1..=h as i32);
    BBox::new(x0, y0, x1, y1).unwrap()
}

/// Copy of `m` with each pixel flipped with probability `p`.
pub fn jitter(rng: &mut ChaCha8Rng, m: &BinaryMask, p: f64) -> BinaryMask {
    BinaryMask::from_fn(m.width(), m.height(), |x, y| m.get(x, y) ^ rng.gen_bool(p)).unwrap()
}

pub const PROVENANCES: [Provenance; 4] = [
    Provenance::BoxPrompt,
    Provenance::PointRound1,
    Provenance::PointRound2,
    Provenance::SparsePoint,
];

fn provenance_rank(p: Provenance) -> usize {
    PROVENANCES.iter().position(|&q| q == p).unwrap()
}

/// Collection of `n` masks built from a few base shapes plus jitter, so that
/// pairwise IoUs spread across the whole range; scores come from a small set
/// to force ties.
pub fn random_collection(rng: &mut ChaCha8Rng, n: usize, w: u32, h: u32) -> MaskCollection {
    let bases: Vec<BinaryMask> = (0..rng.gen_range(1..6))
        .map(|_| BinaryMask::from_box(w, h, random_box(rng, w, h)).unwrap())
        .collect();
    let mut c = MaskCollection::new(w, h);
    for _ in 0..n {
        let base = &bases[rng.gen_range(0..bases.len())];
        let mask = match rng.gen_range(0..4) {
            0 => base.clone(),
            1 => jitter(rng, base, 0.02),
            2 => {
                let b = base.bbox().unwrap_or(BBox::new(0, 0, 1, 1).unwrap());
                let grow = BBox::new(
                    b.x_min - rng.gen_range(0..4),
                    b.y_min - rng.gen_range(0..4),
                    b.x_max + rng.gen_range(0..4),
                    b.y_max + rng.gen_range(0..4),
                )
                .unwrap();
                BinaryMask::from_box(w, h, grow).unwrap()
            }
            _ => random_mask(rng, w, h),
        };
        let score = [0.3, 0.5, 0.8, 0.9, 1.0][rng.gen_range(0..5)];
        c.push(MaskEntry {
            result: SegmentResult { mask, score },
            provenance: PROVENANCES[rng.gen_range(0..4)],
            category_id: None,
        })
        .unwrap();
    }
    c
}

/// Brute-force greedy suppression: repeatedly pick the best remaining entry
/// by linear scan and compare it against every kept mask pixel by pixel.
pub fn reference_nms(c: &MaskCollection, threshold: f64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..c.entries.len()).collect();
    let mut kept: Vec<usize> = Vec::new();
    while !remaining.is_empty() {
        let mut best_pos = 0;
        for pos in 1..remaining.len() {
            let (a, b) = (&c.entries[remaining[pos]], &c.entries[remaining[best_pos]]);
            let better = a.result.score > b.result.score
                || (a.result.score == b.result.score
                    && (provenance_rank(a.provenance) < provenance_rank(b.provenance)
                        || (a.provenance == b.provenance && remaining[pos] < remaining[best_pos])));
            if better {
                best_pos = pos;
            }
        }
        let i = remaining.remove(best_pos);
        let m = &c.entries[i].result.mask;
        if kept
            .iter()
            .all(|&j| naive_iou(m, &c.entries[j].result.mask) <= threshold)
        {
            kept.push(i);
        }
    }
    kept
}

pub fn scene_of(id: &str, w: u32, h: u32, masks: Vec<(BinaryMask, i64)>) -> SceneAnnotation {
    SceneAnnotation::new(
        id,
        w,
        h,
        masks
            .into_iter()
            .map(|(mask, category_id)| Instance { mask, category_id })
            .collect(),
    )
    .unwrap()
}

/// A randomized AP micro-fixture: at most 5 images and 10 masks of each kind,
/// two categories, sizes chosen to straddle the small/medium boundary.
pub fn ap_micro_fixture(rng: &mut ChaCha8Rng) -> (Vec<Prediction>, Vec<SceneAnnotation>) {
    let (w, h) = (64, 64);
    let n_images = rng.gen_range(1..=5);
    let n_gt = rng.gen_range(1..=10);
    let n_pred = rng.gen_range(0..=10);
    let mut gt_masks: Vec<Vec<(BinaryMask, i64)>> = vec![Vec::new(); n_images];
    for k in 0..n_gt {
        let img = if k < n_images {
            k
        } else {
            rng.gen_range(0..n_images)
        };
        let side_w = rng.gen_range(3..=48);
        let side_h = rng.gen_range(3..=48);
        let x0 = rng.gen_range(0..=w - side_w) as i32;
        let y0 = rng.gen_range(0..=h - side_h) as i32;
        let b = BBox::new(x0, y0, x0 + side_w as i32, y0 + side_h as i32).unwrap();
        gt_masks[img].push((BinaryMask::from_box(w, h, b).unwrap(), rng.gen_range(1..=2)));
    }
    let gts: Vec<SceneAnnotation> = gt_masks
        .into_iter()
        .enumerate()
        .map(|(i, m)| scene_of(&format!("img{i}"), w, h, m))
        .collect();

    let mut preds = Vec::new();
    for _ in 0..n_pred {
        let img = rng.gen_range(0..n_images);
        let scene = &gts[img];
        let mask = if !scene.instances.is_empty() && rng.gen_bool(0.7) {
            let g = &scene.instances[rng.gen_range(0..scene.instances.len())].mask;
            match rng.gen_range(0..3) {
                0 => g.clone(),
                1 => jitter(rng, g, 0.05),
                _ => {
                    let b = g.bbox().unwrap();
                    let d = rng.gen_range(-3..=3);
                    let bb =
                        BBox::new(b.x_min + d.max(0), b.y_min, b.x_max + d.min(0) + 2, b.y_max)
                            .unwrap();
                    BinaryMask::from_box(w, h, bb).unwrap()
                }
            }
        } else {
            BinaryMask::from_box(w, h, random_box(rng, w, h)).unwrap()
        };
        // coarse scores so ties across images occur
        let score = rng.gen_range(1..=6) as f64 / 6.0;
        preds.push(Prediction {
            image_id: scene.image_id.clone(),
            score,
            category_id: Some(rng.gen_range(1..=2)),
            mask,
        });
    }
    (preds, gts)
}

#[derive(Clone, Copy, PartialEq)]
pub enum RefRange {
    All,
    Small,
    Medium,
    Large,
}

impl RefRange {
    fn contains(self, area: u64) -> bool {
        match self {
            RefRange::All => true,
            RefRange::Small => area < 32 * 32,
            RefRange::Medium => (32 * 32..96 * 96).contains(&area),
            RefRange::Large => area >= 96 * 96,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Tp,
    Fp,
    Ignored,
}

/// Reference COCO-style AP written from the definition.
///
/// Per image and category, detections are taken by descending score (input
/// order on ties, at most 100) and each claims the unclaimed counted ground
/// truth it overlaps best at the threshold, falling back to out-of-range
/// ground truth. Interpolated precision at recall r is the best precision
/// over every ranked prefix whose recall reaches r.
pub fn reference_ap(preds: &[Prediction], gts: &[SceneAnnotation], range: RefRange) -> Option<f64> {
    let mut cats: Vec<i64> = gts
        .iter()
        .flat_map(|g| g.instances.iter().map(|i| i.category_id))
        .collect();
    cats.sort();
    cats.dedup();

    let mut per_cat = Vec::new();
    for &cat in &cats {
        let counted: usize = gts
            .iter()
            .flat_map(|g| &g.instances)
            .filter(|i| i.category_id == cat && range.contains(naive_area(&i.mask)))
            .count();
        if counted == 0 {
            continue;
        }
        let mut per_thr = Vec::new();
        for &t in &iou_thresholds() {
            // (score, image, rank within image, status)
            let mut records: Vec<(f64, usize, usize, Status)> = Vec::new();
            for (gi, scene) in gts.iter().enumerate() {
                let gt: Vec<&BinaryMask> = scene
                    .instances
                    .iter()
                    .filter(|i| i.category_id == cat)
                    .map(|i| &i.mask)
                    .collect();
                let mut dts: Vec<(usize, &Prediction)> = preds
                    .iter()
                    .filter(|p| p.image_id == scene.image_id && p.category_id == Some(cat))
                    .enumerate()
                    .collect();
                dts.sort_by(|a, b| {
                    b.1.score
                        .partial_cmp(&a.1.score)
                        .unwrap()
                        .then(a.0.cmp(&b.0))
                });
                dts.truncate(100);
                let mut claimed = vec![false; gt.len()];
                for (rank, (_, d)) in dts.iter().enumerate() {
                    let pick = |want_counted: bool, claimed: &[bool]| -> Option<usize> {
                        let mut best: Option<(usize, f64)> = None;
                        for (g, m) in gt.iter().enumerate() {
                            if claimed[g] || range.contains(naive_area(m)) != want_counted {
                                continue;
                            }
                            let v = naive_iou(&d.mask, m);
                            if v >= t && best.is_none_or(|(_, bv)| v >= bv) {
                                best = Some((g, v));
                            }
                        }
                        best.map(|(g, _)| g)
                    };
                    let status = if let Some(g) = pick(true, &claimed) {
                        claimed[g] = true;
                        Status::Tp
                    } else if let Some(g) = pick(false, &claimed) {
                        claimed[g] = true;
                        Status::Ignored
                    } else if range.contains(naive_area(&d.mask)) {
                        Status::Fp
                    } else {
                        Status::Ignored
                    };
                    records.push((d.score, gi, rank, status));
                }
            }
            records.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut curve: Vec<(f64, f64)> = Vec::new();
            let (mut tp, mut fp) = (0usize, 0usize);
            for r in &records {
                match r.3 {
                    Status::Tp => tp += 1,
                    Status::Fp => fp += 1,
                    Status::Ignored => continue,
                }
                curve.push((tp as f64 / counted as f64, tp as f64 / (tp + fp) as f64));
            }
            let rts = recall_thresholds();
            let sum: f64 = rts
                .iter()
                .map(|&r| {
                    curve
                        .iter()
                        .filter(|c| c.0 >= r)
                        .map(|c| c.1)
                        .fold(0.0, f64::max)
                })
                .sum();
            per_thr.push(sum / rts.len() as f64);
        }
        per_cat.push(per_thr.iter().sum::<f64>() / per_thr.len() as f64);
    }
    if per_cat.is_empty() {
        None
    } else {
        Some(per_cat.iter().sum::<f64>() / per_cat.len() as f64)
    }
}

/// Largest one-to-one matching with IoU >= t, by exhaustive search.
pub fn max_matching(ious: &[Vec<f64>], n_gt: usize, t: f64) -> usize {
    fn go(g: usize, n_gt: usize, ious: &[Vec<f64>], t: f64, used: &mut Vec<bool>) -> usize {
        if g == n_gt {
            return 0;
        }
        let mut best = go(g + 1, n_gt, ious, t, used);
        for p in 0..ious.len() {
            if !used[p] && ious[p][g] >= t && ious[p][g] > 0.0 {
                used[p] = true;
                best = best.max(1 + go(g + 1, n_gt, ious, t, used));
                used[p] = false;
            }
        }
        best
    }
    go(0, n_gt, ious, t, &mut vec![false; ious.len()])
}

/// AR with optimal matching and mIoU, both by brute force.
pub fn reference_agnostic(preds: &[Prediction], gts: &[SceneAnnotation]) -> (f64, f64) {
    let total: usize = gts.iter().map(|g| g.instances.len()).sum();
    if total == 0 {
        return (0.0, 0.0);
    }
    let mut recall_sum = 0.0;
    let mut best_sum = 0.0;
    let thresholds = iou_thresholds();
    let mut matched = vec![0usize; thresholds.len()];
    for scene in gts {
        let mine: Vec<&Prediction> = preds
            .iter()
            .filter(|p| p.image_id == scene.image_id)
            .collect();
        let ious: Vec<Vec<f64>> = mine
            .iter()
            .map(|p| {
                scene
                    .instances
                    .iter()
                    .map(|g| naive_iou(&p.mask, &g.mask))
                    .collect()
            })
            .collect();
        for g in 0..scene.instances.len() {
            best_sum += ious.iter().map(|r| r[g]).fold(0.0, f64::max);
        }
        for (k, &t) in thresholds.iter().enumerate() {
            matched[k] += max_matching(&ious, scene.instances.len(), t);
        }
    }
    for m in matched {
        recall_sum += m as f64 / total as f64;
    }
    (
        recall_sum / thresholds.len() as f64,
        best_sum / total as f64,
    )
}

/// The fixed set of 50 end-to-end scenes: 256×256 with 5 to 20 instances.
pub fn e2e_scenes() -> Vec<SceneAnnotation> {
    let mut r = rng(0xE2E);
    (0..50)
        .map(|i| {
            let n = r.gen_range(5..=20);
            synth_scene(format!("scene{i:03}"), 256, 256, n, 1000 + i as u64).unwrap()
        })
        .collect()
}
