use image::imageops::{self, FilterType};
use image::{GrayImage, Luma};

use super::morphology::erode;
use super::raster::{StrokeMap, BACKGROUND};
use crate::error::{Error, Result};

pub const DEFAULT_CANVAS: u32 = 512;

const MARGIN_FRACTION: f64 = 0.04;
const BINARIZE_AT: u8 = 128;

/// Crops to the stroke bounds plus a 4% margin, fits the crop onto a white
/// `target x target` canvas preserving aspect ratio, centers it and
/// re-binarizes.
pub fn render_canvas(strokes: &StrokeMap, target: u32) -> Result<StrokeMap> {
    if target < 64 {
        return Err(Error::InvalidParameter(format!(
            "canvas size {target} is below 64"
        )));
    }
    let (x0, y0, x1, y1) = strokes.stroke_bounds().ok_or(Error::EmptySketch)?;
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let margin = ((f64::from(bw.max(bh)) * MARGIN_FRACTION).round() as u32).max(1);
    let (cw, ch) = (bw + 2 * margin, bh + 2 * margin);

    let src = strokes.to_image();
    let (sw, sh) = strokes.dimensions();
    let mut crop = GrayImage::from_fn(cw, ch, |x, y| {
        let sx = i64::from(x0) + i64::from(x) - i64::from(margin);
        let sy = i64::from(y0) + i64::from(y) - i64::from(margin);
        if sx < 0 || sy < 0 || sx >= i64::from(sw) || sy >= i64::from(sh) {
            Luma([BACKGROUND])
        } else {
            *src.get_pixel(sx as u32, sy as u32)
        }
    });

    let scale = f64::from(target) / f64::from(cw.max(ch));
    let nw = ((f64::from(cw) * scale).round() as u32).clamp(1, target);
    let nh = ((f64::from(ch) * scale).round() as u32).clamp(1, target);

    if scale < 1.0 {
        // thicken so one-pixel strokes still cover an output pixel
        let thicken = ((1.0 / scale - 1.0) / 2.0).ceil() as u32;
        crop = erode(&crop, thicken);
    }
    let resized = imageops::resize(&crop, nw, nh, FilterType::Triangle);

    let (ox, oy) = ((target - nw) / 2, (target - nh) / 2);
    let out = StrokeMap::from_fn(target, target, |x, y| {
        x >= ox
            && y >= oy
            && x < ox + nw
            && y < oy + nh
            && resized.get_pixel(x - ox, y - oy).0[0] < BINARIZE_AT
    });
    if out.stroke_count() == 0 {
        return Err(Error::EmptySketch);
    }
    Ok(out)
}
