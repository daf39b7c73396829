//! Static PNG rendering: learning curves, cost-value histograms and
//! feasibility heatmaps. No text is drawn; axes are implied by the data
//! range, which callers record alongside the image.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{FacError, Result};
use crate::feasibility::{FeasibilityClass, FeasibilityMap};

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([90, 90, 90]);
const MARGIN: u32 = 8;

pub const PALETTE: [[u8; 3]; 4] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [255, 127, 14]];

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    Some(if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) })
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for i in 0..=steps {
        let x = x0 + (x1 - x0) * i / steps;
        let y = y0 + (y1 - y0) * i / steps;
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn frame(width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    let (l, b) = (MARGIN as i64, (height - MARGIN) as i64);
    draw_line(&mut img, (l, MARGIN as i64), (l, b), AXIS);
    draw_line(&mut img, (l, b), ((width - MARGIN) as i64, b), AXIS);
    img
}

/// Polylines for each `(xs, ys)` series on shared axes.
pub fn line_plot(path: &Path, series: &[(Vec<f64>, Vec<f64>)], width: u32, height: u32) -> Result<()> {
    if width <= 2 * MARGIN || height <= 2 * MARGIN {
        return Err(FacError::InvalidArgument("plot too small".into()));
    }
    let mut img = frame(width, height);
    let xb = bounds(series.iter().flat_map(|(x, _)| x.iter().copied()));
    let yb = bounds(series.iter().flat_map(|(_, y)| y.iter().copied()));
    if let (Some((x0, x1)), Some((y0, y1))) = (xb, yb) {
        let w = (width - 2 * MARGIN) as f64;
        let h = (height - 2 * MARGIN) as f64;
        let px = |x: f64| (MARGIN as f64 + (x - x0) / (x1 - x0) * w).round() as i64;
        let py = |y: f64| ((height - MARGIN) as f64 - (y - y0) / (y1 - y0) * h).round() as i64;
        for (k, (xs, ys)) in series.iter().enumerate() {
            let color = Rgb(PALETTE[k % PALETTE.len()]);
            let pts: Vec<(i64, i64)> = xs
                .iter()
                .zip(ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(&x, &y)| (px(x), py(y)))
                .collect();
            for w in pts.windows(2) {
                draw_line(&mut img, w[0], w[1], color);
            }
            if let [p] = pts.as_slice() {
                draw_line(&mut img, *p, *p, color);
            }
        }
    }
    save(&img, path)
}

/// Histogram of `values` with a vertical marker at `threshold`; bars at or
/// below the threshold are drawn in the first palette color, the rest in the second.
pub fn histogram(path: &Path, values: &[f64], bins: usize, threshold: f64, width: u32, height: u32) -> Result<()> {
    if bins == 0 || width <= 2 * MARGIN || height <= 2 * MARGIN {
        return Err(FacError::InvalidArgument("histogram needs bins and room".into()));
    }
    let mut img = frame(width, height);
    let Some((lo, hi)) = bounds(values.iter().copied().chain([threshold])) else {
        return save(&img, path);
    };
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let inner_w = (width - 2 * MARGIN) as f64;
    let inner_h = (height - 2 * MARGIN) as f64;
    let base = height - MARGIN;
    for (b, &c) in counts.iter().enumerate() {
        let x0 = MARGIN + (b as f64 / bins as f64 * inner_w) as u32;
        let x1 = MARGIN + ((b + 1) as f64 / bins as f64 * inner_w) as u32;
        let top = base - (c as f64 / peak * inner_h) as u32;
        let center = lo + (b as f64 + 0.5) / bins as f64 * (hi - lo);
        let color = Rgb(if center <= threshold { PALETTE[0] } else { PALETTE[1] });
        for x in x0..x1.max(x0 + 1).min(width - MARGIN) {
            for y in top..base {
                img.put_pixel(x, y, color);
            }
        }
    }
    let tx = (MARGIN as f64 + (threshold - lo) / (hi - lo) * inner_w).round() as i64;
    draw_line(&mut img, (tx, MARGIN as i64), (tx, base as i64), Rgb([0, 0, 0]));
    save(&img, path)
}

fn class_color(c: FeasibilityClass) -> Rgb<u8> {
    match c {
        FeasibilityClass::Inactive => Rgb([44, 160, 44]),
        FeasibilityClass::Active => Rgb([255, 190, 60]),
        FeasibilityClass::Infeasible => Rgb([200, 30, 30]),
    }
}

/// Cell `(i, j)` of a 1-D or 2-D map, with the first axis horizontal and the
/// second increasing upwards.
fn cell_image(map: &FeasibilityMap, scale: u32, mut color: impl FnMut(usize) -> Rgb<u8>) -> Result<RgbImage> {
    let shape = map.grid.shape();
    let (nx, ny) = match shape.as_slice() {
        [n] => (*n, 1),
        [a, b] => (*a, *b),
        _ => return Err(FacError::GridMismatch("heatmaps need a 1-D or 2-D grid".into())),
    };
    let scale = scale.max(1);
    let mut img = RgbImage::new(nx as u32 * scale, ny as u32 * scale);
    for i in 0..nx {
        for j in 0..ny {
            let c = color(i * ny + j);
            let py0 = (ny - 1 - j) as u32 * scale;
            for dx in 0..scale {
                for dy in 0..scale {
                    img.put_pixel(i as u32 * scale + dx, py0 + dy, c);
                }
            }
        }
    }
    Ok(img)
}

/// Three-color class map: green Inactive, amber Active, red Infeasible.
pub fn class_heatmap(path: &Path, map: &FeasibilityMap, scale: u32) -> Result<()> {
    let img = cell_image(map, scale, |k| class_color(map.classes[k]))?;
    save(&img, path)
}

/// Multiplier magnitude on a log scale, dark for zero and bright yellow at the maximum.
pub fn lambda_heatmap(path: &Path, map: &FeasibilityMap, scale: u32) -> Result<()> {
    let top = map.lambdas.iter().copied().fold(0.0f64, f64::max).ln_1p().max(1e-12);
    let img = cell_image(map, scale, |k| {
        let t = (map.lambdas[k].ln_1p() / top).clamp(0.0, 1.0);
        Rgb([(255.0 * t.sqrt()) as u8, (220.0 * t) as u8, (90.0 * (1.0 - t)) as u8])
    })?;
    save(&img, path)
}
