//! Binary pixel masks and the geometric kernels built on them.
//!
//! Masks are stored row-major as packed `u64` words (bit `y * width + x`).
//! Bits past `width * height` in the final word are always zero, so
//! popcounts over whole words never see padding.

mod bbox;
mod rle;

pub use bbox::BBox;
pub use rle::RleMask;

use std::fmt;

use thiserror::Error;

const WORD_BITS: usize = u64::BITS as usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("malformed RLE: {0}")]
    MalformedRle(String),
    #[error("degenerate box [{0}, {1}, {2}, {3}]")]
    DegenerateBox(i32, i32, i32, i32),
}

/// Dense binary mask over a `width x height` pixel grid.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl BinaryMask {
    /// Empty (all-zero) mask.
    pub fn new(width: u32, height: u32) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::InvalidDimensions { width, height });
        }
        let n = width as usize * height as usize;
        Ok(Self {
            width,
            height,
            words: vec![0; n.div_ceil(WORD_BITS)],
        })
    }

    pub fn full(width: u32, height: u32) -> Result<Self, MaskError> {
        let mut mask = Self::new(width, height)?;
        mask.words.iter_mut().for_each(|w| *w = !0);
        mask.clear_padding();
        Ok(mask)
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> bool,
    ) -> Result<Self, MaskError> {
        let mut mask = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set_index(y as usize * width as usize + x as usize);
                }
            }
        }
        Ok(mask)
    }

    /// Mask with every pixel inside `bbox` (clipped to the image) set.
    pub fn from_box(width: u32, height: u32, bbox: BBox) -> Result<Self, MaskError> {
        let mut mask = Self::new(width, height)?;
        if let Some(b) = bbox.clamp(width, height) {
            for y in b.y_min..b.y_max {
                for x in b.x_min..b.x_max {
                    mask.set(x as u32, y as u32, true);
                }
            }
        }
        Ok(mask)
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn check_shape(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x}, {y}) outside {}x{} mask",
            self.width,
            self.height
        );
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    fn set_index(&mut self, i: usize) {
        self.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
    }

    /// Panics when `(x, y)` is outside the mask.
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        let i = self.index(x, y);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    /// Panics when `(x, y)` is outside the mask.
    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        let bit = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= bit;
        } else {
            self.words[i / WORD_BITS] &= !bit;
        }
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.area() == self.pixel_count()
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64, MaskError> {
        self.check_shape(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum())
    }

    pub fn union_area(&self, other: &BinaryMask) -> Result<u64, MaskError> {
        self.check_shape(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as u64)
            .sum())
    }

    /// `|a ∩ b| / |a ∪ b|`, with two empty masks scoring 0.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64, MaskError> {
        self.check_shape(other)?;
        let (inter, union) =
            self.words
                .iter()
                .zip(&other.words)
                .fold((0u64, 0u64), |(i, u), (a, b)| {
                    (
                        i + (a & b).count_ones() as u64,
                        u + (a | b).count_ones() as u64,
                    )
                });
        Ok(ratio(inter, union))
    }

    /// In-place cellwise OR.
    pub fn union_into(&mut self, source: &BinaryMask) -> Result<(), MaskError> {
        self.check_shape(source)?;
        self.words
            .iter_mut()
            .zip(&source.words)
            .for_each(|(a, b)| *a |= b);
        Ok(())
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask, MaskError> {
        let mut out = self.clone();
        out.union_into(other)?;
        Ok(out)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask, MaskError> {
        self.check_shape(other)?;
        let mut out = self.clone();
        out.words
            .iter_mut()
            .zip(&other.words)
            .for_each(|(a, b)| *a &= b);
        Ok(out)
    }

    pub fn complement(&self) -> BinaryMask {
        let mut out = self.clone();
        out.words.iter_mut().for_each(|w| *w = !*w);
        out.clear_padding();
        out
    }

    fn clear_padding(&mut self) {
        let n = self.pixel_count() as usize;
        let tail = n % WORD_BITS;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }

    /// Coordinates of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let width = self.width as usize;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                let i = wi * WORD_BITS + bit;
                Some(((i % width) as u32, (i / width) as u32))
            })
        })
    }

    /// Tight half-open bounding box of the set pixels.
    pub fn bbox(&self) -> Option<BBox> {
        let width = self.width as usize;
        let (mut x_min, mut x_max) = (u32::MAX, 0u32);
        let (mut y_min, mut y_max) = (u32::MAX, 0u32);
        for (wi, &word) in self.words.iter().enumerate() {
            if word == 0 {
                continue;
            }
            let first = wi * WORD_BITS + word.trailing_zeros() as usize;
            let last = wi * WORD_BITS + (WORD_BITS - 1 - word.leading_zeros() as usize);
            y_min = y_min.min((first / width) as u32);
            y_max = y_max.max((last / width) as u32);
            if first / width == last / width {
                // all set bits of this word sit on one row
                x_min = x_min.min((first % width) as u32);
                x_max = x_max.max((last % width) as u32);
            } else if x_min > 0 || x_max + 1 < self.width {
                let mut w = word;
                while w != 0 {
                    let x = ((wi * WORD_BITS + w.trailing_zeros() as usize) % width) as u32;
                    x_min = x_min.min(x);
                    x_max = x_max.max(x);
                    w &= w - 1;
                }
            }
        }
        if y_min == u32::MAX {
            return None;
        }
        Some(BBox {
            x_min: x_min as i32,
            y_min: y_min as i32,
            x_max: x_max as i32 + 1,
            y_max: y_max as i32 + 1,
        })
    }

    /// Fraction of the image covered by set pixels.
    pub fn coverage_fraction(&self) -> f64 {
        self.area() as f64 / self.pixel_count() as f64
    }
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

/// Integer ratio with the empty-denominator case mapped to 0.
#[inline]
pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
