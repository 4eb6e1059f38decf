//! Instance-level sketch synthesis.
//!
//! For one annotated instance: the photo is masked to its segmentation
//! foreground, converted to grayscale, and three stroke layers are built and
//! unioned: a stylized line drawing, binarized morphological-gradient edges
//! of the foreground, and the silhouette contour of the mask itself. The
//! union is cropped and fitted onto a square white canvas.

mod canvas;
mod morphology;
mod pipeline;
mod raster;
mod xdog;

pub use canvas::{render_canvas, DEFAULT_CANVAS};
pub use morphology::{dilate, erode, morph_gradient, otsu_level};
pub use pipeline::{
    generate_instance_sketch, mask_foreground, to_grayscale, InstanceSketch, SketchInput,
    SketchParams,
};
pub use raster::{aggregate_strokes, MaskRaster, StrokeMap, BACKGROUND, STROKE};
pub use xdog::{gaussian_blur, xdog_response, xdog_stylize, StylizerKind, StylizerSpec};
