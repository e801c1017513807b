//! Uncompressed COCO run-length encoding.
//!
//! Runs traverse the image column-major and alternate zero/one, starting
//! with zeros; a mask whose first pixel is set begins with a zero-length run.

use serde::{Deserialize, Serialize};

use super::{BinaryMask, MaskError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct RleMask {
    width: u32,
    height: u32,
    counts: Vec<u32>,
}

/// Wire form: `{"size": [height, width], "counts": [...]}`.
#[derive(Serialize, Deserialize)]
struct RleJson {
    size: [u32; 2],
    counts: Vec<u32>,
}

impl RleMask {
    /// Validates sum and run structure.
    pub fn from_counts(width: u32, height: u32, counts: Vec<u32>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::InvalidDimensions { width, height });
        }
        if let Some(i) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(MaskError::MalformedRle(format!(
                "zero-length run at index {}",
                i + 1
            )));
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(MaskError::MalformedRle(format!(
                "run lengths sum to {total}, expected {expected}"
            )));
        }
        Ok(Self {
            width,
            height,
            counts,
        })
    }

    pub fn encode(mask: &BinaryMask) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                let v = mask.get(x, y);
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Self {
            width: w,
            height: h,
            counts,
        }
    }

    pub fn decode(&self) -> BinaryMask {
        let mut mask = BinaryMask::new(self.width, self.height)
            .expect("RleMask dimensions are validated on construction");
        let h = self.height as u64;
        let mut pos = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            let end = pos + c as u64;
            if i % 2 == 1 {
                for p in pos..end {
                    mask.set((p / h) as u32, (p % h) as u32, true);
                }
            }
            pos = end;
        }
        mask
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Sum of the set-pixel runs.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }
}

impl TryFrom<RleJson> for RleMask {
    type Error = MaskError;

    fn try_from(v: RleJson) -> Result<Self, Self::Error> {
        RleMask::from_counts(v.size[1], v.size[0], v.counts)
    }
}

impl From<RleMask> for RleJson {
    fn from(r: RleMask) -> Self {
        RleJson {
            size: [r.height, r.width],
            counts: r.counts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_and_all_one() {
        let zero = BinaryMask::new(3, 2).unwrap();
        assert_eq!(RleMask::encode(&zero).counts(), &[6]);
        let one = BinaryMask::full(3, 2).unwrap();
        assert_eq!(RleMask::encode(&one).counts(), &[0, 6]);
    }

    #[test]
    fn decode_all_zero() {
        let rle = RleMask::from_counts(3, 2, vec![6]).unwrap();
        assert!(rle.decode().is_empty());
    }

    #[test]
    fn decode_follows_column_major_order() {
        // 3 wide, 2 tall: column-major positions 0..6 are
        // (0,0) (0,1) (1,0) (1,1) (2,0) (2,1). Skip 1, set 2, skip 3.
        let m = RleMask::from_counts(3, 2, vec![1, 2, 3]).unwrap().decode();
        let set: Vec<_> = m.iter_set().collect();
        assert_eq!(set, vec![(1, 0), (0, 1)]);
        assert!(m.get(0, 1) && m.get(1, 0));
        assert_eq!(m.area(), 2);
    }

    #[test]
    fn malformed_sum() {
        assert!(matches!(
            RleMask::from_counts(3, 2, vec![5]),
            Err(MaskError::MalformedRle(_))
        ));
        assert!(RleMask::from_counts(3, 2, vec![]).is_err());
    }

    #[test]
    fn malformed_interior_zero() {
        assert!(matches!(
            RleMask::from_counts(3, 2, vec![2, 0, 4]),
            Err(MaskError::MalformedRle(_))
        ));
        assert!(RleMask::from_counts(3, 2, vec![6, 0]).is_err());
        assert!(RleMask::from_counts(3, 2, vec![0, 2, 4]).is_ok());
    }

    #[test]
    fn json_form() {
        let m = RleMask::from_counts(3, 2, vec![1, 2, 3]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"size":[2,3],"counts":[1,2,3]}"#);
        let back: RleMask = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<RleMask>(r#"{"size":[2,3],"counts":[5]}"#).is_err());
    }

    #[test]
    fn area_from_runs() {
        let m = BinaryMask::from_fn(5, 4, |x, y| x > y).unwrap();
        assert_eq!(RleMask::encode(&m).area(), m.area());
    }
}
