use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use reel_core::ScalarField;

use crate::error::{io_err, CliError};

/// Grayscale image of a field, min to black and max to white. Small grids
/// are upscaled by pixel replication.
pub fn field_png(field: &ScalarField, path: &Path) -> Result<(), CliError> {
    let g = field.grid();
    let scale = (256 / g.nx.max(g.ny)).max(1) as u32;
    let (lo, hi) = field
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = GrayImage::from_fn(g.ny as u32 * scale, g.nx as u32 * scale, |x, y| {
        let v = (field.at((y / scale) as usize, (x / scale) as usize) - lo) / span;
        Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    img.save(path).map_err(|e| io_err(path, e))
}

const W: u32 = 640;
const H: u32 = 400;
const MARGIN: u32 = 30;

/// Loss against epoch on a logarithmic vertical axis.
pub fn loss_png(losses: &[f64], path: &Path) -> Result<(), CliError> {
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    for x in MARGIN..W - MARGIN {
        img.put_pixel(x, H - MARGIN, axis);
    }
    for y in MARGIN..=H - MARGIN {
        img.put_pixel(MARGIN, y, axis);
    }
    let logs: Vec<f64> = losses
        .iter()
        .map(|&l| if l > 0.0 && l.is_finite() { l.log10() } else { f64::NAN })
        .collect();
    let (lo, hi) = logs
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        let span = if hi > lo { hi - lo } else { 1.0 };
        let pw = (W - 2 * MARGIN) as f64;
        let ph = (H - 2 * MARGIN) as f64;
        let to_px = |k: usize, v: f64| {
            let x = MARGIN as f64 + pw * k as f64 / (losses.len().max(2) - 1) as f64;
            let y = (H - MARGIN) as f64 - ph * (v - lo) / span;
            (x, y)
        };
        let mut prev: Option<(f64, f64)> = None;
        for (k, &v) in logs.iter().enumerate() {
            if !v.is_finite() {
                prev = None;
                continue;
            }
            let p = to_px(k, v);
            match prev {
                Some(q) => line(&mut img, q, p),
                None => dot(&mut img, p),
            }
            prev = Some(p);
        }
    }
    img.save(path).map_err(|e| io_err(path, e))
}

fn dot(img: &mut RgbImage, (x, y): (f64, f64)) {
    let (x, y) = (x.round() as i64, y.round() as i64);
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb([200, 30, 30]));
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64)) {
    let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for s in 0..=n {
        let t = s as f64 / n as f64;
        dot(img, (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
    }
}
