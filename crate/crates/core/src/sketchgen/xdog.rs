//! Native line-drawing stylizer: thresholded difference of Gaussians.

use std::path::PathBuf;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::raster::StrokeMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StylizerKind {
    NativeXdog,
    /// Pre-rendered stylizer output, one `<instance id>.png` per instance,
    /// at the source image resolution.
    ExternalRasterDir { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StylizerSpec {
    #[serde(flatten)]
    pub kind: StylizerKind,
    pub sigma: f64,
    pub k: f64,
    pub epsilon: f64,
}

impl Default for StylizerSpec {
    fn default() -> Self {
        Self {
            kind: StylizerKind::NativeXdog,
            sigma: 1.0,
            k: 1.6,
            epsilon: 0.1,
        }
    }
}

impl StylizerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma {} must be > 0", self.sigma)));
        }
        if !(self.k > 1.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter(format!("k {} must be > 1", self.k)));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter("epsilon must be finite".into()));
        }
        Ok(())
    }

    /// Pixel reach of the wider blur.
    pub fn support_radius(&self) -> u32 {
        kernel_radius(self.k * self.sigma) as u32
    }
}

fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil().max(1.0) as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = kernel_radius(sigma) as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur of a row-major `w x h` buffer, edge-replicated.
pub fn gaussian_blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * row[(x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, kv)| {
                    let sy = (y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize;
                    kv * tmp[sy * w + x]
                })
                .sum();
        }
    }
    out
}

/// Difference of Gaussians (`sigma` minus `k * sigma`) on intensities scaled to
/// `[0, 1]`, divided by its largest magnitude so the result lies in `[-1, 1]`.
/// A response with no meaningful contrast is returned as all zeros.
pub fn xdog_response(gray: &GrayImage, sigma: f64, k: f64) -> Vec<f64> {
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let intensity: Vec<f64> = gray.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
    let narrow = gaussian_blur(&intensity, w, h, sigma);
    let wide = gaussian_blur(&intensity, w, h, k * sigma);
    let mut diff: Vec<f64> = narrow.iter().zip(&wide).map(|(a, b)| a - b).collect();
    let peak = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak < 1e-6 {
        diff.iter_mut().for_each(|v| *v = 0.0);
    } else {
        diff.iter_mut().for_each(|v| *v /= peak);
    }
    diff
}

/// Pixels whose normalized response falls below `-epsilon` become strokes.
pub fn xdog_stylize(gray: &GrayImage, spec: &StylizerSpec) -> Result<StrokeMap> {
    if spec.kind != StylizerKind::NativeXdog {
        return Err(Error::InvalidParameter(
            "xdog_stylize needs the native stylizer".into(),
        ));
    }
    spec.validate()?;
    let response = xdog_response(gray, spec.sigma, spec.k);
    let w = gray.width();
    Ok(StrokeMap::from_fn(w, gray.height(), |x, y| {
        response[(y * w + x) as usize] < -spec.epsilon
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;
    use proptest::prelude::*;

    /// Full 2D Gaussian convolution, evaluated directly.
    fn blur_oracle(img: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
        let r = (3.0 * sigma).ceil() as i64;
        let mut weights = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                weights.push((dx, dy, (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp()));
            }
        }
        let total: f64 = weights.iter().map(|w| w.2).sum();
        let mut out = vec![0.0; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for &(dx, dy, wt) in &weights {
                    let sx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    acc += wt * img[sy * w + sx];
                }
                out[y as usize * w + x as usize] = acc / total;
            }
        }
        out
    }

    fn disk(size: u32, radius: f64) -> GrayImage {
        let c = (size as f64 - 1.0) / 2.0;
        GrayImage::from_fn(size, size, |x, y| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            Luma([if d <= radius { 0 } else { 255 }])
        })
    }

    #[test]
    fn flat_field_has_no_strokes() {
        let img = GrayImage::from_pixel(20, 20, Luma([90]));
        let s = xdog_stylize(&img, &StylizerSpec::default()).unwrap();
        assert_eq!(s.stroke_count(), 0);
    }

    #[test]
    fn disk_response_matches_direct_convolution() {
        let img = disk(32, 9.0);
        let spec = StylizerSpec::default();
        let intensity: Vec<f64> = img.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
        let narrow = blur_oracle(&intensity, 32, 32, spec.sigma);
        let wide = blur_oracle(&intensity, 32, 32, spec.k * spec.sigma);
        let diff: Vec<f64> = narrow.iter().zip(&wide).map(|(a, b)| a - b).collect();
        let peak = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let expected: Vec<f64> = diff.iter().map(|v| v / peak).collect();

        let got = xdog_response(&img, spec.sigma, spec.k);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
        let strokes = xdog_stylize(&img, &spec).unwrap();
        let oracle_strokes = expected.iter().filter(|v| **v < -spec.epsilon).count();
        assert_eq!(strokes.stroke_count(), oracle_strokes);
    }

    #[test]
    fn disk_strokes_form_a_ring_on_the_boundary() {
        let radius = 9.0;
        let img = disk(32, radius);
        let strokes = xdog_stylize(&img, &StylizerSpec::default()).unwrap();
        assert!(strokes.stroke_count() > 0);
        let c = 15.5;
        for y in 0..32 {
            for x in 0..32 {
                if strokes.is_stroke(x, y) {
                    let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
                    assert!((d - radius).abs() <= 4.0, "stroke at distance {d}");
                }
            }
        }
        // every direction around the disk is covered
        for step in 0..16 {
            let a = step as f64 * std::f64::consts::PI / 8.0;
            let hit = (0..=8).any(|i| {
                let d = radius - 4.0 + i as f64;
                let x = (c + d * a.cos()).round() as u32;
                let y = (c + d * a.sin()).round() as u32;
                strokes.is_stroke(x, y)
            });
            assert!(hit, "no stroke at angle step {step}");
        }
    }

    #[test]
    fn external_kind_is_rejected() {
        let spec = StylizerSpec {
            kind: StylizerKind::ExternalRasterDir { dir: "x".into() },
            ..Default::default()
        };
        assert!(xdog_stylize(&GrayImage::new(4, 4), &spec).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn raising_epsilon_never_adds_strokes(
            data in proptest::collection::vec(any::<u8>(), 12 * 12),
            e1 in 0.0..1.0f64, de in 0.0..1.0f64,
        ) {
            let img = GrayImage::from_raw(12, 12, data).unwrap();
            let lo = StylizerSpec { epsilon: e1, ..Default::default() };
            let hi = StylizerSpec { epsilon: e1 + de, ..Default::default() };
            prop_assert!(
                xdog_stylize(&img, &hi).unwrap().stroke_count()
                    <= xdog_stylize(&img, &lo).unwrap().stroke_count()
            );
        }
    }
}
