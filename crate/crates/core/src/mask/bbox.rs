use serde::{Deserialize, Serialize};

use super::MaskError;

/// Axis-aligned pixel box, half-open on the max edges.
///
/// Coordinates are signed so detector output that spills past the image can
/// be represented before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i32; 4]", into = "[i32; 4]")]
pub struct BBox {
    pub x_min: i32,
    pub y_min: i32,
    pub x_max: i32,
    pub y_max: i32,
}

impl BBox {
    pub fn new(x_min: i32, y_min: i32, x_max: i32, y_max: i32) -> Result<Self, MaskError> {
        if x_min < x_max && y_min < y_max {
            Ok(Self {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            Err(MaskError::DegenerateBox(x_min, y_min, x_max, y_max))
        }
    }

    /// Smallest pixel box containing the continuous box `[x0, x1) x [y0, y1)`.
    pub fn from_f64(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, MaskError> {
        let conv = |v: f64| v.clamp(i32::MIN as f64, i32::MAX as f64) as i32;
        if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
            return Err(MaskError::DegenerateBox(0, 0, 0, 0));
        }
        Self::new(
            conv(x0.floor()),
            conv(y0.floor()),
            conv(x1.ceil()),
            conv(y1.ceil()),
        )
    }

    #[inline]
    pub fn width(&self) -> i64 {
        self.x_max as i64 - self.x_min as i64
    }

    #[inline]
    pub fn height(&self) -> i64 {
        self.y_max as i64 - self.y_min as i64
    }

    #[inline]
    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    /// Intersect with the image rectangle; `None` if nothing remains.
    pub fn clamp(&self, width: u32, height: u32) -> Option<BBox> {
        let (w, h) = (
            width.min(i32::MAX as u32) as i32,
            height.min(i32::MAX as u32) as i32,
        );
        BBox::new(
            self.x_min.clamp(0, w),
            self.y_min.clamp(0, h),
            self.x_max.clamp(0, w),
            self.y_max.clamp(0, h),
        )
        .ok()
    }

    pub fn intersection_area(&self, other: &BBox) -> i64 {
        let w = (self.x_max.min(other.x_max) as i64 - self.x_min.max(other.x_min) as i64).max(0);
        let h = (self.y_max.min(other.y_max) as i64 - self.y_min.max(other.y_min) as i64).max(0);
        w * h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn contains_pixel(&self, x: i64, y: i64) -> bool {
        x >= self.x_min as i64
            && x < self.x_max as i64
            && y >= self.y_min as i64
            && y < self.y_max as i64
    }

    pub fn as_array(&self) -> [i32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[i32; 4]> for BBox {
    type Error = MaskError;

    fn try_from(v: [i32; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [i32; 4] {
    fn from(b: BBox) -> Self {
        b.as_array()
    }
}
