use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in normalized image coordinates.
///
/// Always satisfies `0 <= x1 < x2 <= 1` and `0 <= y1 < y2 <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Deserialize)]
struct RawBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = Error;

    fn try_from(r: RawBox) -> Result<Self> {
        BoundingBox::new(r.x1, r.y1, r.x2, r.y2)
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0) {
            return Err(Error::DegenerateGeometry(format!(
                "box {coords:?} leaves the unit square"
            )));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::DegenerateGeometry(format!(
                "box {coords:?} has zero or negative extent"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn unit() -> Self {
        Self {
            x1: 0.0,
            y1: 0.0,
            x2: 1.0,
            y2: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Area of the overlap with `other`, zero when disjoint.
    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Converts a pixel box to normalized coordinates by dividing each coordinate
/// by the matching image dimension.
pub fn normalize_box(abs: [f64; 4], width: u32, height: u32) -> Result<BoundingBox> {
    if width == 0 || height == 0 {
        return Err(Error::DegenerateGeometry(format!(
            "image size {width}x{height}"
        )));
    }
    let [x1, y1, x2, y2] = abs;
    let (w, h) = (f64::from(width), f64::from(height));
    if abs.iter().any(|c| !c.is_finite()) || x1 < 0.0 || y1 < 0.0 || x2 > w || y2 > h {
        return Err(Error::DegenerateGeometry(format!(
            "box {abs:?} outside {width}x{height} image"
        )));
    }
    if x1 >= x2 || y1 >= y2 {
        return Err(Error::DegenerateGeometry(format!(
            "box {abs:?} has zero or negative extent"
        )));
    }
    BoundingBox::new(x1 / w, y1 / h, x2 / w, y2 / h)
}

pub fn denormalize_box(b: &BoundingBox, width: u32, height: u32) -> [f64; 4] {
    let (w, h) = (f64::from(width), f64::from(height));
    [b.x1 * w, b.y1 * h, b.x2 * w, b.y2 * h]
}
