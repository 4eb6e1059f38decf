//! COCO-style annotation import (`images` / `annotations` / `categories`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::datamodel::{normalize_box, Annotation, ImageRecord};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocoImport {
    pub images: Vec<ImageRecord>,
    /// Category names; `class_id` indexes this list (categories sorted by id).
    pub class_names: Vec<String>,
    /// Crowd regions and boxes with no area left after clipping to the image.
    pub skipped_annotations: usize,
}

/// Converts a COCO annotation file. `[x, y, w, h]` boxes are clipped to the
/// image and normalized; `area_px` is the clipped box area. Image paths are
/// `image_root/file_name`.
pub fn import_coco(text: &str, origin: &Path, image_root: &Path) -> Result<CocoImport> {
    let coco: CocoFile = serde_json::from_str(text).map_err(|source| Error::Json {
        path: origin.to_path_buf(),
        line: 0,
        source,
    })?;
    let mut cats: Vec<&CocoCategory> = coco.categories.iter().collect();
    cats.sort_by_key(|c| c.id);
    let class_of: BTreeMap<u64, u32> = cats
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id, i as u32))
        .collect();

    let mut images: Vec<ImageRecord> = coco
        .images
        .iter()
        .map(|im| ImageRecord {
            id: im.id.to_string(),
            path: image_root.join(&im.file_name),
            width: im.width,
            height: im.height,
            annotations: Vec::new(),
        })
        .collect();
    let slot: BTreeMap<u64, usize> = coco
        .images
        .iter()
        .enumerate()
        .map(|(i, im)| (im.id, i))
        .collect();

    let mut skipped = 0;
    for ann in &coco.annotations {
        let (Some(&i), Some(&class_id)) = (slot.get(&ann.image_id), class_of.get(&ann.category_id)) else {
            return Err(Error::InvalidRecord(format!(
                "annotation references unknown image {} or category {}",
                ann.image_id, ann.category_id
            )));
        };
        if ann.iscrowd != 0 {
            skipped += 1;
            continue;
        }
        let img = &mut images[i];
        let (w, h) = (f64::from(img.width), f64::from(img.height));
        let [x, y, bw, bh] = ann.bbox;
        let abs = [x.clamp(0.0, w), y.clamp(0.0, h), (x + bw).clamp(0.0, w), (y + bh).clamp(0.0, h)];
        match normalize_box(abs, img.width, img.height) {
            Ok(bbox) => img.annotations.push(Annotation {
                class_id,
                bbox,
                area_px: (abs[2] - abs[0]) * (abs[3] - abs[1]),
            }),
            Err(_) => skipped += 1,
        }
    }

    Ok(CocoImport {
        images,
        class_names: cats.iter().map(|c| c.name.clone()).collect(),
        skipped_annotations: skipped,
    })
}
