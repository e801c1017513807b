use std::cmp::Ordering;

use super::{MaskCollection, MaskEntry};
use crate::mask::{ratio, BBox, BinaryMask};

/// Ranking used by NMS: higher score first, then provenance (box prompts
/// before point prompts), then original position.
pub(crate) fn nms_order(entries: &[MaskEntry]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&entries[a], &entries[b]);
        eb.result
            .score
            .total_cmp(&ea.result.score)
            .then_with(|| ea.provenance.cmp(&eb.provenance))
            .then(a.cmp(&b))
    });
    order
}

/// Greedy IoU suppression.
///
/// A mask is accepted iff its IoU with every previously accepted mask is at
/// most `threshold`. Accepted entries are returned in acceptance order.
pub fn iou_nms(masks: MaskCollection, threshold: f64) -> MaskCollection {
    let MaskCollection {
        width,
        height,
        entries,
    } = masks;
    let order = nms_order(&entries);
    let boxes: Vec<Option<BBox>> = entries.iter().map(|e| e.result.mask.bbox()).collect();
    let areas: Vec<u64> = entries.iter().map(|e| e.result.mask.area()).collect();

    let mut accepted: Vec<usize> = Vec::new();
    for &i in &order {
        let keep = accepted.iter().all(|&j| {
            // masks with disjoint boxes have IoU 0 and can never be suppressed
            let overlapping = match (&boxes[i], &boxes[j]) {
                (Some(a), Some(b)) => a.intersection_area(b) > 0,
                _ => false,
            };
            if !overlapping {
                return true;
            }
            // IoU never exceeds the smaller area over the larger one
            let (lo, hi) = (areas[i].min(areas[j]), areas[i].max(areas[j]));
            if ratio(lo, hi) <= threshold {
                return true;
            }
            let (a, b) = (&entries[i].result.mask, &entries[j].result.mask);
            // identical masks have IoU 1, already known to exceed the threshold
            a != b && pair_iou(a, b) <= threshold
        });
        if keep {
            accepted.push(i);
        }
    }

    let mut slots: Vec<Option<MaskEntry>> = entries.into_iter().map(Some).collect();
    let out = MaskCollection {
        width,
        height,
        entries: accepted
            .into_iter()
            .map(|i| slots[i].take().expect("each index accepted once"))
            .collect(),
    };
    debug_assert!(out.max_pairwise_iou() <= threshold || out.len() < 2);
    out
}

fn pair_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    a.iou(b).expect("collection masks share dimensions")
}

/// Union of every mask in the collection.
pub fn coverage_of<'a>(
    masks: impl IntoIterator<Item = &'a MaskEntry>,
    width: u32,
    height: u32,
) -> BinaryMask {
    let mut cov = BinaryMask::new(width, height).expect("positive image dimensions");
    for e in masks {
        cov.union_into(&e.result.mask)
            .expect("collection masks share dimensions");
    }
    cov
}

impl MaskCollection {
    /// Largest IoU over all pairs; 0 for fewer than two masks.
    pub fn max_pairwise_iou(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                worst = worst.max(pair_iou(&a.result.mask, &b.result.mask));
            }
        }
        worst
    }
}

impl PartialOrd for super::Provenance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for super::Provenance {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SegmentResult;
    use crate::pipeline::Provenance;

    fn entry(mask: BinaryMask, score: f64, provenance: Provenance) -> MaskEntry {
        MaskEntry {
            result: SegmentResult { mask, score },
            provenance,
            category_id: None,
        }
    }

    fn cols(lo: u32, hi: u32) -> BinaryMask {
        BinaryMask::from_fn(20, 10, |x, _| x >= lo && x < hi).unwrap()
    }

    fn collection(entries: Vec<MaskEntry>) -> MaskCollection {
        MaskCollection {
            width: 20,
            height: 10,
            entries,
        }
    }

    #[test]
    fn higher_score_duplicate_survives() {
        let c = collection(vec![
            entry(cols(0, 5), 0.8, Provenance::SparsePoint),
            entry(cols(0, 5), 0.9, Provenance::SparsePoint),
        ]);
        let out = iou_nms(c, 0.7);
        assert_eq!(out.len(), 1);
        assert_eq!(out.entries[0].result.score, 0.9);
    }

    #[test]
    fn disjoint_masks_all_survive() {
        for t in [0.0, 0.5, 1.0] {
            let c = collection(vec![
                entry(cols(0, 5), 0.8, Provenance::SparsePoint),
                entry(cols(5, 10), 0.9, Provenance::SparsePoint),
                entry(cols(12, 20), 0.1, Provenance::BoxPrompt),
            ]);
            assert_eq!(iou_nms(c, t).len(), 3);
        }
    }

    #[test]
    fn box_prompt_wins_score_tie() {
        let c = collection(vec![
            entry(cols(0, 5), 0.9, Provenance::SparsePoint),
            entry(cols(0, 5), 0.9, Provenance::BoxPrompt),
        ]);
        let out = iou_nms(c, 0.7);
        assert_eq!(out.entries[0].provenance, Provenance::BoxPrompt);
    }

    #[test]
    fn threshold_is_inclusive() {
        // IoU of [0,6) and [2,8) columns = 4/8 = 0.5
        let c = collection(vec![
            entry(cols(0, 6), 0.9, Provenance::SparsePoint),
            entry(cols(2, 8), 0.8, Provenance::SparsePoint),
        ]);
        assert_eq!(iou_nms(c.clone(), 0.5).len(), 2);
        assert_eq!(iou_nms(c, 0.49).len(), 1);
    }

    #[test]
    fn coverage_cases() {
        assert!(coverage_of(&[], 20, 10).is_empty());
        let full = [entry(
            BinaryMask::full(20, 10).unwrap(),
            1.0,
            Provenance::BoxPrompt,
        )];
        assert!(coverage_of(&full, 20, 10).is_full());
        let parts = [
            entry(cols(0, 3), 1.0, Provenance::BoxPrompt),
            entry(cols(2, 6), 1.0, Provenance::BoxPrompt),
        ];
        assert_eq!(coverage_of(&parts, 20, 10).area(), 60);
    }
}
