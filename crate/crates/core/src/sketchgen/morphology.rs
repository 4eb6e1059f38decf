//! Grayscale morphology with a square structuring element of side
//! `2 * radius + 1`. Borders replicate the edge pixel.

use image::GrayImage;

fn window_pass(
    img: &GrayImage,
    radius: u32,
    horizontal: bool,
    pick: fn(u8, u8) -> u8,
) -> GrayImage {
    let (w, h) = img.dimensions();
    let src = img.as_raw();
    let mut out = vec![0u8; src.len()];
    let r = radius as i64;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = src[(y * w as i64 + x) as usize];
            for d in -r..=r {
                let (sx, sy) = if horizontal {
                    ((x + d).clamp(0, w as i64 - 1), y)
                } else {
                    (x, (y + d).clamp(0, h as i64 - 1))
                };
                acc = pick(acc, src[(sy * w as i64 + sx) as usize]);
            }
            out[(y * w as i64 + x) as usize] = acc;
        }
    }
    GrayImage::from_raw(w, h, out).expect("same dimensions")
}

/// Local maximum over the square window.
pub fn dilate(img: &GrayImage, radius: u32) -> GrayImage {
    if radius == 0 || img.width() == 0 || img.height() == 0 {
        return img.clone();
    }
    let rows = window_pass(img, radius, true, u8::max);
    window_pass(&rows, radius, false, u8::max)
}

/// Local minimum over the square window.
pub fn erode(img: &GrayImage, radius: u32) -> GrayImage {
    if radius == 0 || img.width() == 0 || img.height() == 0 {
        return img.clone();
    }
    let rows = window_pass(img, radius, true, u8::min);
    window_pass(&rows, radius, false, u8::min)
}

/// Dilation minus erosion. Zero exactly where the window is constant.
pub fn morph_gradient(gray: &GrayImage, radius: u32) -> GrayImage {
    let radius = radius.max(1);
    let hi = dilate(gray, radius);
    let lo = erode(gray, radius);
    let data = hi
        .as_raw()
        .iter()
        .zip(lo.as_raw())
        .map(|(&a, &b)| a - b)
        .collect();
    GrayImage::from_raw(gray.width(), gray.height(), data).expect("same dimensions")
}

/// Otsu's threshold: values `<= level` form the lower class. When all values
/// are equal the level is that value, so nothing lies above it.
pub fn otsu_level(values: impl IntoIterator<Item = u8>) -> u8 {
    let mut hist = [0u64; 256];
    for v in values {
        hist[v as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    let Some(max_value) = (0..256).rev().find(|&i| hist[i] > 0) else {
        return u8::MAX;
    };
    let sum: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();

    let mut level = max_value as u8;
    let mut best = -1.0f64;
    let (mut w_b, mut sum_b) = (0u64, 0.0f64);
    for (t, &count) in hist.iter().enumerate() {
        w_b += count;
        if w_b == 0 {
            continue;
        }
        let w_f = total - w_b;
        if w_f == 0 {
            break;
        }
        sum_b += t as f64 * count as f64;
        let m_b = sum_b / w_b as f64;
        let m_f = (sum - sum_b) / w_f as f64;
        let between = w_b as f64 * w_f as f64 * (m_b - m_f) * (m_b - m_f);
        if between > best {
            best = between;
            level = t as u8;
        }
    }
    level
}
