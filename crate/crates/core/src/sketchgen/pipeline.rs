use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Pixel, RgbImage};
use serde::{Deserialize, Serialize};

use super::canvas::{render_canvas, DEFAULT_CANVAS};
use super::morphology::{erode, morph_gradient, otsu_level};
use super::raster::{aggregate_strokes, MaskRaster, StrokeMap};
use super::xdog::{xdog_stylize, StylizerKind, StylizerSpec};
use crate::datamodel::{denormalize_box, ImageRecord, SketchRecord, SketchSource};
use crate::error::{Error, Result};

/// Slack allowed between the mask and its annotation box, as a fraction of
/// the box size on each side.
const MASK_BOX_SLACK: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SketchParams {
    pub stylizer: StylizerSpec,
    pub gradient_radius: u32,
    pub canvas: u32,
}

impl Default for SketchParams {
    fn default() -> Self {
        Self {
            stylizer: StylizerSpec::default(),
            gradient_radius: 1,
            canvas: DEFAULT_CANVAS,
        }
    }
}

/// Everything needed to draw one annotated instance.
#[derive(Debug, Clone, Copy)]
pub struct SketchInput<'a> {
    pub image: &'a ImageRecord,
    pub annotation_index: usize,
    pub photo: &'a RgbImage,
    pub mask: &'a MaskRaster,
}

impl SketchInput<'_> {
    pub fn instance_id(&self) -> String {
        format!("{}_{}", self.image.id, self.annotation_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSketch {
    pub id: String,
    pub class_id: u32,
    pub origin_image_id: String,
    pub strokes: StrokeMap,
}

impl InstanceSketch {
    pub fn record(&self, source: SketchSource, path: PathBuf) -> SketchRecord {
        SketchRecord {
            id: self.id.clone(),
            class_id: self.class_id,
            source,
            path,
            origin_image_id: Some(self.origin_image_id.clone()),
        }
    }
}

/// Paints every pixel outside the mask pure white.
pub fn mask_foreground<P>(
    image: &ImageBuffer<P, Vec<u8>>,
    mask: &MaskRaster,
) -> Result<ImageBuffer<P, Vec<u8>>>
where
    P: Pixel<Subpixel = u8>,
{
    if image.dimensions() != mask.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: image.dimensions(),
            actual: mask.dimensions(),
        });
    }
    let mut out = image.clone();
    for (x, y, p) in out.enumerate_pixels_mut() {
        if !mask.is_foreground(x, y) {
            p.channels_mut().iter_mut().for_each(|c| *c = u8::MAX);
        }
    }
    Ok(out)
}

/// Rec. 709 luma in integer arithmetic; gray inputs expanded to RGB map back
/// to themselves.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let [r, g, b] = img.get_pixel(x, y).0;
        let l = (2126 * u32::from(r) + 7152 * u32::from(g) + 722 * u32::from(b) + 5000) / 10_000;
        Luma([l as u8])
    })
}

fn inside(mask_gray: &GrayImage, reach: u32) -> GrayImage {
    erode(mask_gray, reach)
}

fn check_mask_within_box(input: &SketchInput<'_>) -> Result<()> {
    let ann = &input.image.annotations[input.annotation_index];
    let [bx1, by1, bx2, by2] = denormalize_box(&ann.bbox, input.image.width, input.image.height);
    let (sx, sy) = ((bx2 - bx1) * MASK_BOX_SLACK, (by2 - by1) * MASK_BOX_SLACK);
    let (mx0, my0, mx1, my1) = input.mask.bounds();
    let ok = f64::from(mx0) >= (bx1 - sx).floor()
        && f64::from(my0) >= (by1 - sy).floor()
        && f64::from(mx1 + 1) <= (bx2 + sx).ceil()
        && f64::from(my1 + 1) <= (by2 + sy).ceil();
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "mask of {} extends beyond its annotation box",
            input.instance_id()
        )))
    }
}

fn load_external(dir: &Path, id: &str, dims: (u32, u32)) -> Result<StrokeMap> {
    let path = dir.join(format!("{id}.png"));
    let img = image::open(&path)
        .map_err(|source| Error::Image {
            path: path.clone(),
            source,
        })?
        .to_luma8();
    if img.dimensions() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: img.dimensions(),
        });
    }
    Ok(StrokeMap::binarize(&img, 128))
}

/// Draws one instance: masked foreground, stylized strokes, binarized
/// morphological edges and the mask silhouette, unioned and fitted onto the
/// canvas.
///
/// Photo-derived strokes are kept only where the operator window lies wholly
/// inside the mask, so pixels outside the mask never influence the result and
/// a flat foreground contributes nothing beyond the silhouette.
pub fn generate_instance_sketch(input: SketchInput<'_>, params: &SketchParams) -> Result<InstanceSketch> {
    let dims = (input.image.width, input.image.height);
    for actual in [input.photo.dimensions(), input.mask.dimensions()] {
        if actual != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual,
            });
        }
    }
    let ann = input
        .image
        .annotations
        .get(input.annotation_index)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "image {} has no annotation {}",
                input.image.id, input.annotation_index
            ))
        })?;
    params.stylizer.validate()?;
    check_mask_within_box(&input)?;

    let radius = params.gradient_radius.max(1);
    let id = input.instance_id();

    // Work on a window around the mask wide enough that every operator sees
    // white beyond it; for the external stylizer the whole frame is kept.
    let (cx, cy, cw, ch) = match params.stylizer.kind {
        StylizerKind::NativeXdog => {
            let pad = params.stylizer.support_radius() + radius + 2;
            let (x0, y0, x1, y1) = input.mask.bounds();
            let cx = x0.saturating_sub(pad);
            let cy = y0.saturating_sub(pad);
            let ex = (x1 + pad + 1).min(dims.0);
            let ey = (y1 + pad + 1).min(dims.1);
            (cx, cy, ex - cx, ey - cy)
        }
        StylizerKind::ExternalRasterDir { .. } => (0, 0, dims.0, dims.1),
    };
    let photo = image::imageops::crop_imm(input.photo, cx, cy, cw, ch).to_image();
    let mask = input.mask.crop(cx, cy, cw, ch)?;
    let mask_gray = mask.to_gray();

    let gray = to_grayscale(&mask_foreground(&photo, &mask)?);

    let stylized = match &params.stylizer.kind {
        StylizerKind::NativeXdog => {
            let raw = xdog_stylize(&gray, &params.stylizer)?;
            let keep = inside(&mask_gray, params.stylizer.support_radius());
            StrokeMap::from_fn(cw, ch, |x, y| {
                raw.is_stroke(x, y) && keep.get_pixel(x, y).0[0] == u8::MAX
            })
        }
        StylizerKind::ExternalRasterDir { dir } => load_external(dir, &id, dims)?,
    };

    let gradient = morph_gradient(&gray, radius);
    let keep = inside(&mask_gray, radius);
    let interior = || {
        gradient
            .pixels()
            .zip(keep.pixels())
            .filter(|(_, k)| k.0[0] == u8::MAX)
            .map(|(g, _)| g.0[0])
    };
    let edges = if interior().next().is_some() {
        let level = otsu_level(interior());
        StrokeMap::from_fn(cw, ch, |x, y| {
            keep.get_pixel(x, y).0[0] == u8::MAX && gradient.get_pixel(x, y).0[0] > level
        })
    } else {
        StrokeMap::blank(cw, ch)
    };

    let silhouette_grad = morph_gradient(&mask_gray, radius);
    let silhouette = StrokeMap::from_fn(cw, ch, |x, y| silhouette_grad.get_pixel(x, y).0[0] > 0);

    let merged = aggregate_strokes(&aggregate_strokes(&stylized, &edges)?, &silhouette)?;
    let strokes = render_canvas(&merged, params.canvas)?;

    Ok(InstanceSketch {
        id,
        class_id: ann.class_id,
        origin_image_id: input.image.id.clone(),
        strokes,
    })
}
