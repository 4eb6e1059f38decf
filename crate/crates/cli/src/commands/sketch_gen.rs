use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::PathBuf;

use anyhow::Context;
use image::ImageFormat;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sketchforge_core::datamodel::{ImageRecord, SketchRecord};
use sketchforge_core::sketchgen::{generate_instance_sketch, MaskRaster, SketchInput, StylizerKind};

use super::{count_map, read_images, section, Ctx, Outcome};

#[derive(Debug, Serialize)]
struct Skip {
    instance_id: String,
    reason: String,
}

enum Drawn {
    Sketch(SketchRecord, Vec<u8>),
    Skipped(Skip),
}

/// Draws one sketch per annotated instance that has a mask.
pub fn sketch_gen(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let sec = section(&ctx.cfg.config.sketch_gen, "sketch_gen")?.clone();
    let images_path = ctx.input(&sec.images)?;
    let masks_dir = ctx.input(&sec.masks_dir)?;
    let photo_root = match &sec.photo_root {
        Some(p) => ctx.input(p)?,
        None => images_path.parent().map(PathBuf::from).unwrap_or_default(),
    };
    let mut params = sec.params.clone();
    if let StylizerKind::ExternalRasterDir { dir } = &params.stylizer.kind {
        params.stylizer.kind = StylizerKind::ExternalRasterDir { dir: ctx.input(dir)? };
    }
    params.stylizer.validate()?;
    let images = read_images(&images_path)?;
    let wanted = |c: u32| sec.classes.as_ref().is_none_or(|cs| cs.contains(&c));

    let per_image: Vec<anyhow::Result<Vec<Drawn>>> = images
        .par_iter()
        .map(|img: &ImageRecord| -> anyhow::Result<Vec<Drawn>> {
            let todo: Vec<usize> = (0..img.annotations.len())
                .filter(|&i| wanted(img.annotations[i].class_id))
                .collect();
            if todo.is_empty() {
                return Ok(Vec::new());
            }
            let photo_path = photo_root.join(&img.path);
            let photo = image::open(&photo_path)
                .with_context(|| format!("reading photo {}", photo_path.display()))?
                .to_rgb8();
            let mut out = Vec::with_capacity(todo.len());
            for idx in todo {
                let id = format!("{}_{idx}", img.id);
                let mask_path = masks_dir.join(format!("{id}.png"));
                if !mask_path.is_file() {
                    out.push(Drawn::Skipped(Skip { instance_id: id, reason: "no mask".into() }));
                    continue;
                }
                let mask_img = image::open(&mask_path)
                    .with_context(|| format!("reading mask {}", mask_path.display()))?
                    .to_luma8();
                let drawn = MaskRaster::from_gray(&mask_img).and_then(|mask| {
                    generate_instance_sketch(
                        SketchInput { image: img, annotation_index: idx, photo: &photo, mask: &mask },
                        &params,
                    )
                });
                match drawn {
                    Ok(sketch) => {
                        let mut png = Vec::new();
                        sketch
                            .strokes
                            .to_image()
                            .write_to(&mut Cursor::new(&mut png), ImageFormat::Png)?;
                        let rec = sketch.record(sec.source, PathBuf::from(format!("sketches/{id}.png")));
                        out.push(Drawn::Sketch(rec, png));
                    }
                    Err(e) => out.push(Drawn::Skipped(Skip { instance_id: id, reason: e.to_string() })),
                }
            }
            Ok(out)
        })
        .collect();

    let mut records = Vec::new();
    let mut files = Vec::new();
    let mut skips = Vec::new();
    for r in per_image {
        for d in r? {
            match d {
                Drawn::Sketch(rec, png) => {
                    files.push((format!("{}.png", rec.id), png));
                    records.push(rec);
                }
                Drawn::Skipped(s) => skips.push(s),
            }
        }
    }
    ctx.out.write_tree("sketches", files)?;
    ctx.write_jsonl("sketches.jsonl", &sec, &records)?;
    ctx.write_jsonl("sketch_skips.jsonl", &sec, &skips)?;
    let by_reason: BTreeMap<String, usize> = count_map(skips.iter().map(|s| {
        s.reason.split(':').next().unwrap_or_default().to_string()
    }));
    Ok(Outcome {
        summary: json!({ "sketches": records.len(), "skipped": skips.len(), "skipped_by_reason": by_reason }),
        ..Outcome::default()
    })
}
