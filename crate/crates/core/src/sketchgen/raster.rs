use image::{GrayImage, Luma};

use crate::error::{Error, Result};

pub const STROKE: u8 = 0;
pub const BACKGROUND: u8 = 255;

/// Binary instance mask. Always holds at least one foreground pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRaster {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl MaskRaster {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidParameter(format!(
                "mask buffer of {} pixels for {width}x{height}",
                data.len()
            )));
        }
        if !data.iter().any(|&f| f) {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Nonzero pixels are foreground.
    pub fn from_gray(img: &GrayImage) -> Result<Self> {
        let data = img.pixels().map(|p| p.0[0] != 0).collect();
        Self::new(img.width(), img.height(), data)
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn is_foreground(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&f| f).count()
    }

    /// Inclusive pixel bounds `(x0, y0, x1, y1)` of the foreground.
    pub fn bounds(&self) -> (u32, u32, u32, u32) {
        let mut b = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_foreground(x, y) {
                    b.0 = b.0.min(x);
                    b.1 = b.1.min(y);
                    b.2 = b.2.max(x);
                    b.3 = b.3.max(y);
                }
            }
        }
        b
    }

    /// Foreground as 255, background as 0.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.is_foreground(x, y) { 255 } else { 0 }])
        })
    }

    pub(crate) fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<Self> {
        Self::from_fn(w, h, |x, y| self.is_foreground(x0 + x, y0 + y))
    }
}

/// Binary stroke raster: black strokes (`0`) on white (`255`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrokeMap {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl StrokeMap {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidParameter(format!(
                "stroke buffer of {} pixels for {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v != STROKE && v != BACKGROUND) {
            return Err(Error::InvalidParameter(
                "stroke map values must be 0 or 255".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn blank(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![BACKGROUND; (width as usize) * (height as usize)],
        }
    }

    pub fn from_fn(width: u32, height: u32, is_stroke: impl Fn(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity((width as usize) * (height as usize));
        for y in 0..height {
            for x in 0..width {
                data.push(if is_stroke(x, y) { STROKE } else { BACKGROUND });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Pixels darker than `threshold` become strokes.
    pub fn binarize(img: &GrayImage, threshold: u8) -> Self {
        Self::from_fn(img.width(), img.height(), |x, y| {
            img.get_pixel(x, y).0[0] < threshold
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    pub fn is_stroke(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize] == STROKE
    }

    pub fn stroke_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == STROKE).count()
    }

    /// Inclusive bounds `(x0, y0, x1, y1)` of the strokes, if any.
    pub fn stroke_bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_stroke(x, y) {
                    b = Some(match b {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        b
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction")
    }
}

/// Pixelwise stroke union.
pub fn aggregate_strokes(a: &StrokeMap, b: &StrokeMap) -> Result<StrokeMap> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: a.dimensions(),
            actual: b.dimensions(),
        });
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&p, &q)| if p == STROKE || q == STROKE { STROKE } else { BACKGROUND })
        .collect();
    Ok(StrokeMap {
        width: a.width,
        height: a.height,
        data,
    })
}
