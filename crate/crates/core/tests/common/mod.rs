#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use starscreen::image_io::GrayImage;
use starscreen::integral::WeightKind;

pub fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(w, h, |_, _| rng.random())
}

pub fn weight(kind: WeightKind, x: usize, y: usize, v: u8) -> i64 {
    let v = v as i64;
    match kind {
        WeightKind::Plain => v,
        WeightKind::XWeighted => (x as i64 + 1) * v,
        WeightKind::YWeighted => (y as i64 + 1) * v,
        WeightKind::Squared => v * v,
    }
}

/// Σ over pixels with `i ≤ x`, `j ≤ y`.
pub fn brute_sat_cell(img: &GrayImage, kind: WeightKind, x: isize, y: isize) -> i64 {
    let mut s = 0;
    for j in 0..img.height() as isize {
        for i in 0..img.width() as isize {
            if i <= x && j <= y {
                s += weight(
                    kind,
                    i as usize,
                    j as usize,
                    img.get(i as usize, j as usize),
                );
            }
        }
    }
    s
}

/// Σ over image pixels with `j ≤ y − |i − x|`.
pub fn brute_triangle(img: &GrayImage, kind: WeightKind, x: isize, y: isize) -> i64 {
    let mut s = 0;
    for j in 0..img.height() as isize {
        for i in 0..img.width() as isize {
            if j <= y - (i - x).abs() {
                s += weight(
                    kind,
                    i as usize,
                    j as usize,
                    img.get(i as usize, j as usize),
                );
            }
        }
    }
    s
}

pub fn brute_square(img: &GrayImage, kind: WeightKind, cx: usize, cy: usize, n: usize) -> i64 {
    let mut s = 0;
    for y in cy + 1 - n..=cy + n {
        for x in cx + 1 - n..=cx + n {
            s += weight(kind, x, y, img.get(x, y));
        }
    }
    s
}

pub fn brute_diamond(img: &GrayImage, kind: WeightKind, cx: usize, cy: usize, r: usize) -> i64 {
    let mut s = 0;
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            if x.abs_diff(cx) + y.abs_diff(cy) <= r {
                s += weight(kind, x, y, img.get(x, y));
            }
        }
    }
    s
}

#[derive(Clone, Copy, Debug)]
pub struct Oracle {
    pub mean: f64,
    pub std: f64,
    pub gx: f64,
    pub gy: f64,
}

/// Two-pass statistics and an L1-normalised linear ramp centred at
/// `(ox, oy)` over an explicit pixel list.
pub fn oracle_over(img: &GrayImage, pixels: &[(usize, usize)], ox: f64, oy: f64) -> Oracle {
    let n = pixels.len() as f64;
    let vals: Vec<f64> = pixels.iter().map(|&(x, y)| img.get(x, y) as f64).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let (mut ax, mut ay, mut nx, mut ny) = (0.0, 0.0, 0.0, 0.0);
    for (&(x, y), v) in pixels.iter().zip(&vals) {
        let (dx, dy) = (x as f64 - ox, y as f64 - oy);
        ax += dx * v;
        ay += dy * v;
        nx += dx.abs();
        ny += dy.abs();
    }
    let gx = if nx > 0.0 { ax / nx } else { 0.0 };
    let gy = if ny > 0.0 { ay / ny } else { 0.0 };
    Oracle {
        mean,
        std: var.sqrt(),
        gx,
        gy,
    }
}

pub fn square_pixels(cx: usize, cy: usize, n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for y in cy + 1 - n..=cy + n {
        for x in cx + 1 - n..=cx + n {
            v.push((x, y));
        }
    }
    v
}

pub fn diamond_pixels(cx: usize, cy: usize, r: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            if x.abs_diff(cx) + y.abs_diff(cy) <= r {
                v.push((x, y));
            }
        }
    }
    v
}

pub fn oracle_square(img: &GrayImage, cx: usize, cy: usize, n: usize) -> Oracle {
    oracle_over(
        img,
        &square_pixels(cx, cy, n),
        cx as f64 + 0.5,
        cy as f64 + 0.5,
    )
}

pub fn oracle_diamond(img: &GrayImage, cx: usize, cy: usize, r: usize) -> Oracle {
    oracle_over(img, &diamond_pixels(cx, cy, r), cx as f64, cy as f64)
}

/// (mean, std, grad_mag) of the star built from the two oracles.
pub fn oracle_octagon(
    img: &GrayImage,
    cx: usize,
    cy: usize,
    n: usize,
    r: usize,
) -> (f64, f64, f64) {
    let s = oracle_square(img, cx, cy, n);
    let d = oracle_diamond(img, cx, cy, r);
    (
        0.5 * (s.mean + d.mean),
        0.5 * (s.std + d.std),
        (0.5 * (s.gx + d.gx)).hypot(0.5 * (s.gy + d.gy)),
    )
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Quarter-turn permutation of a square image: pixel `(a, b)` moves to
/// `(N−1−b, a)`.
pub fn quarter_turn(img: &GrayImage) -> GrayImage {
    let n = img.width();
    GrayImage::from_fn(n, n, |x, y| img.get(y, n - 1 - x))
}

pub fn mirror_x(img: &GrayImage) -> GrayImage {
    let w = img.width();
    GrayImage::from_fn(w, img.height(), |x, y| img.get(w - 1 - x, y))
}
