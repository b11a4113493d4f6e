//! Raster output: cell heatmaps and log-log curve plots.

use image::{Rgb, RgbImage};
use multiphase::grid::{GridDomain, IndicatorSet};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const MASKED: Rgb<u8> = Rgb([160, 160, 160]);

pub const PALETTE: [Rgb<u8>; 8] = [
    Rgb([31, 119, 180]),
    Rgb([214, 39, 40]),
    Rgb([44, 160, 44]),
    Rgb([255, 127, 14]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
    Rgb([227, 119, 194]),
    Rgb([23, 190, 207]),
];

/// Target size of the longer image side, in pixels.
const TARGET: u32 = 512;

/// Rasterizes the `z = nz/2` slice, one square block of pixels per cell,
/// with `y` pointing up.
fn raster(domain: &GridDomain<f64>, color: impl Fn(usize) -> Rgb<u8>) -> RgbImage {
    let [nx, ny, nz] = domain.shape();
    let scale = (TARGET / nx.max(ny) as u32).max(1);
    let k = nz / 2;
    RgbImage::from_fn(nx as u32 * scale, ny as u32 * scale, |px, py| {
        let i = (px / scale) as usize;
        let j = ny - 1 - (py / scale) as usize;
        let idx = domain.index([i, j, k]);
        if domain.in_mask(idx) {
            color(idx)
        } else {
            MASKED
        }
    })
}

/// One palette color per phase, white for void.
pub fn phase_map(domain: &GridDomain<f64>, sets: &[IndicatorSet<f64>]) -> RgbImage {
    raster(domain, |idx| {
        sets.iter()
            .position(|s| s.contains(idx))
            .map_or(WHITE, |p| PALETTE[p % PALETTE.len()])
    })
}

/// Scalar field on a white-to-blue ramp, scaled to its maximum.
pub fn scalar_map(domain: &GridDomain<f64>, values: &[f64]) -> RgbImage {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    raster(domain, |idx| {
        let t = ((values[idx] - lo) / span).clamp(0.0, 1.0);
        let mix = |a: f64, b: f64| (a + t * (b - a)).round() as u8;
        Rgb([mix(255.0, 8.0), mix(255.0, 48.0), mix(255.0, 107.0)])
    })
}

pub struct Series<'a> {
    pub color: Rgb<u8>,
    pub points: &'a [(f64, f64)],
}

/// Log-log plot of positive data with decade grid lines.
pub fn loglog(series: &[Series<'_>]) -> RgbImage {
    let (w, h, margin) = (640u32, 480u32, 40i64);
    let mut img = RgbImage::from_pixel(w, h, WHITE);
    let positive: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    if positive.is_empty() {
        return img;
    }
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = positive.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = positive.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(0.05);
        (lo - pad, hi + pad)
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let (pw, ph) = (w as i64 - 2 * margin, h as i64 - 2 * margin);
    let to_px = |lx: f64, ly: f64| {
        (
            margin + ((lx - x0) / (x1 - x0) * pw as f64).round() as i64,
            margin + ph - ((ly - y0) / (y1 - y0) * ph as f64).round() as i64,
        )
    };

    for d in x0.ceil() as i64..=x1.floor() as i64 {
        let (px, _) = to_px(d as f64, y0);
        line(&mut img, (px, margin), (px, margin + ph), GRID);
    }
    for d in y0.ceil() as i64..=y1.floor() as i64 {
        let (_, py) = to_px(x0, d as f64);
        line(&mut img, (margin, py), (margin + pw, py), GRID);
    }
    let corners = [(margin, margin), (margin + pw, margin), (margin + pw, margin + ph), (margin, margin + ph)];
    for i in 0..4 {
        line(&mut img, corners[i], corners[(i + 1) % 4], BLACK);
    }

    for s in series {
        let pts: Vec<(i64, i64)> = s
            .points
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
            .map(|&(x, y)| to_px(x.log10(), y.log10()))
            .collect();
        for pair in pts.windows(2) {
            for off in [(0, 0), (0, 1), (1, 0)] {
                line(&mut img, (pair[0].0 + off.0, pair[0].1 + off.1), (pair[1].0 + off.0, pair[1].1 + off.1), s.color);
            }
        }
        for &(px, py) in &pts {
            for dx in -2..=2 {
                for dy in -2..=2 {
                    put(&mut img, px + dx, py + dy, s.color);
                }
            }
        }
    }
    img
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Bresenham segment.
fn line(img: &mut RgbImage, (mut x, mut y): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use multiphase::grid::{build_domain, BoxSpec};

    use super::*;

    #[test]
    fn phase_map_colors_and_orientation() {
        let d = Arc::new(build_domain(&BoxSpec::<f64>::unit(2, 8), None).unwrap());
        let bottom = IndicatorSet::from_fn(d.clone(), |x| x[1] < 0.25);
        let img = phase_map(&d, &[bottom]);
        assert_eq!(img.width(), 512);
        assert_eq!(*img.get_pixel(0, 511), PALETTE[0]);
        assert_eq!(*img.get_pixel(0, 0), WHITE);
    }

    #[test]
    fn loglog_draws_series() {
        let pts = [(0.01, 1.0), (0.1, 10.0), (1.0, 100.0)];
        let img = loglog(&[Series { color: PALETTE[1], points: &pts }]);
        assert!(img.pixels().any(|p| *p == PALETTE[1]));
        let empty = loglog(&[Series { color: PALETTE[1], points: &[] }]);
        assert!(empty.pixels().all(|p| *p == WHITE));
    }
}
