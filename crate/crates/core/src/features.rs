//! Constant-time patch features over square, diamond and octagonal-star
//! regions.
//!
//! Every channel is on the intensity scale: means and standard deviations
//! directly, gradients as the inner product with a linear ramp centred on
//! the region, divided by the ramp's L1 norm.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::integral::{diamond_pixel_count, IntegralTables};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeFeatures {
    pub mean: f64,
    pub std: f64,
    pub gx: f64,
    pub gy: f64,
}

/// Mean, standard deviation and gradient magnitude of an octagonal star.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StarFeatures {
    pub mean: f64,
    pub std: f64,
    pub grad_mag: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingFeature {
    /// Half side of the ring's central area.
    pub half_size: usize,
    pub mean: f64,
    pub std: f64,
    pub grad_mag: f64,
}

impl RingFeature {
    #[inline]
    pub fn channels(&self) -> [f64; 3] {
        [self.mean, self.std, self.grad_mag]
    }
}

/// Per-ring features ordered from the outermost ring inward.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RingFeatureVector {
    pub rings: Vec<RingFeature>,
}

impl RingFeatureVector {
    pub fn len(&self) -> usize {
        self.rings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }
}

/// Round half up, the rounding used for every derived size.
#[inline]
pub fn round_half_up(v: f64) -> usize {
    (v + 0.5).floor().max(0.0) as usize
}

/// Diamond radius paired with a `2n × 2n` square of equal area.
#[inline]
pub fn paired_diamond_radius(n: usize) -> usize {
    round_half_up(SQRT_2 * n as f64)
}

#[inline]
fn moments(count: i64, s1: i64, s2: i64) -> (f64, f64) {
    let mean = s1 as f64 / count as f64;
    // count·S2 − S1² is exact and non-negative
    let num = count as i128 * s2 as i128 - s1 as i128 * s1 as i128;
    let var = (num as f64 / (count as f64 * count as f64)).max(0.0);
    (mean, var.sqrt())
}

/// Features of the `2n × 2n` window `[cx−n+1, cx+n] × [cy−n+1, cy+n]` without
/// bounds checks. The gradient ramp is centred on the window's geometric
/// centre `cx + ½`.
#[inline]
pub fn square_features_unchecked(
    t: &IntegralTables,
    cx: usize,
    cy: usize,
    n: usize,
) -> ShapeFeatures {
    let s1 = t.sat_plain.window_sum_unchecked(cx, cy, n);
    let sx = t.sat_x.window_sum_unchecked(cx, cy, n);
    let sy = t.sat_y.window_sum_unchecked(cx, cy, n);
    let s2 = t.sat_sq.window_sum_unchecked(cx, cy, n);
    let count = 4 * (n * n) as i64;
    let (mean, std) = moments(count, s1, s2);
    // 2·Σ(x − cx − ½)·I with 1-based weights in the tables
    let gx2 = 2 * (sx - (cx as i64 + 1) * s1) - s1;
    let gy2 = 2 * (sy - (cy as i64 + 1) * s1) - s1;
    // 2·Σ|x − cx − ½| = 4n³
    let norm2 = 4.0 * (n * n * n) as f64;
    ShapeFeatures {
        mean,
        std,
        gx: gx2 as f64 / norm2,
        gy: gy2 as f64 / norm2,
    }
}

/// L1 norm of the `x − cx` ramp over a closed ℓ1 ball of radius `r`.
#[inline]
pub fn diamond_ramp_norm(r: usize) -> usize {
    r * (r + 1) * (2 * r + 1) / 3
}

#[inline]
pub fn diamond_features_unchecked(
    t: &IntegralTables,
    cx: usize,
    cy: usize,
    r: usize,
) -> ShapeFeatures {
    let s1 = t.rsat_plain.diamond_sum_unchecked(cx, cy, r);
    let sx = t.rsat_x.diamond_sum_unchecked(cx, cy, r);
    let sy = t.rsat_y.diamond_sum_unchecked(cx, cy, r);
    let s2 = t.rsat_sq.diamond_sum_unchecked(cx, cy, r);
    let count = diamond_pixel_count(r) as i64;
    let (mean, std) = moments(count, s1, s2);
    let (gx, gy) = if r == 0 {
        (0.0, 0.0)
    } else {
        let norm = diamond_ramp_norm(r) as f64;
        let gx = sx - (cx as i64 + 1) * s1;
        let gy = sy - (cy as i64 + 1) * s1;
        (gx as f64 / norm, gy as f64 / norm)
    };
    ShapeFeatures { mean, std, gx, gy }
}

pub fn square_features(
    t: &IntegralTables,
    cx: usize,
    cy: usize,
    n: usize,
) -> Result<ShapeFeatures> {
    if !square_fits(t.width(), t.height(), cx, cy, n) {
        return Err(Error::OutOfBounds(format!(
            "square n={n} at ({cx},{cy}) in {}x{}",
            t.width(),
            t.height()
        )));
    }
    Ok(square_features_unchecked(t, cx, cy, n))
}

pub fn diamond_features(
    t: &IntegralTables,
    cx: usize,
    cy: usize,
    r: usize,
) -> Result<ShapeFeatures> {
    if r > t.max_radius() || !diamond_fits(t.width(), t.height(), cx, cy, r) {
        return Err(Error::OutOfBounds(format!(
            "diamond r={r} at ({cx},{cy}) in {}x{} (max radius {})",
            t.width(),
            t.height(),
            t.max_radius()
        )));
    }
    Ok(diamond_features_unchecked(t, cx, cy, r))
}

#[inline]
fn square_fits(w: usize, h: usize, cx: usize, cy: usize, n: usize) -> bool {
    n >= 1 && cx + 1 >= n && cy + 1 >= n && cx + n < w && cy + n < h
}

#[inline]
fn diamond_fits(w: usize, h: usize, cx: usize, cy: usize, r: usize) -> bool {
    cx >= r && cy >= r && cx + r < w && cy + r < h
}

/// Average the square and its paired diamond; the gradient magnitude is
/// taken after averaging the components.
#[inline]
pub fn combine_star(sq: ShapeFeatures, dm: ShapeFeatures) -> StarFeatures {
    StarFeatures {
        mean: 0.5 * (sq.mean + dm.mean),
        std: 0.5 * (sq.std + dm.std),
        grad_mag: (0.5 * (sq.gx + dm.gx)).hypot(0.5 * (sq.gy + dm.gy)),
    }
}

/// Octagonal star made of the `2n × 2n` square and the equal-area diamond
/// of radius `round(√2·n)` centred at `(cx, cy)`.
pub fn octagon_features(
    t: &IntegralTables,
    cx: usize,
    cy: usize,
    n: usize,
) -> Result<StarFeatures> {
    let r = paired_diamond_radius(n);
    let sq = square_features(t, cx, cy, n)?;
    let dm = diamond_features(t, cx, cy, r)?;
    Ok(combine_star(sq, dm))
}

/// Geometry of one ring: the half side of its central area and the
/// octagonal star inscribed in it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RingShape {
    pub half_size: usize,
    pub square_half: usize,
    pub diamond_radius: usize,
}

impl RingShape {
    /// Inscribe the largest equal-area star whose diamond stays inside the
    /// `2·half_size` central area.
    pub fn inscribed(half_size: usize) -> Option<Self> {
        if half_size < 2 {
            return None;
        }
        let limit = half_size - 1;
        let mut n = ((limit as f64) / SQRT_2).floor() as usize;
        while n > 0 && paired_diamond_radius(n) > limit {
            n -= 1;
        }
        (n >= 1).then(|| RingShape {
            half_size,
            square_half: n,
            diamond_radius: paired_diamond_radius(n),
        })
    }

    /// Pixels the star reaches left of/above the centre and right of/below it.
    #[inline]
    pub fn reach(&self) -> (usize, usize) {
        (
            self.diamond_radius.max(self.square_half - 1),
            self.diamond_radius.max(self.square_half),
        )
    }

    #[inline]
    pub fn fits(&self, w: usize, h: usize, cx: usize, cy: usize) -> bool {
        let (lo, hi) = self.reach();
        cx >= lo && cy >= lo && cx + hi < w && cy + hi < h
    }
}

/// Smallest ring half-size kept.
pub const MIN_RING_HALF_SIZE: usize = 4;

/// Ring shapes for an `m × m` patch: half-sizes `round(m / (2·√2^r))`,
/// dropping those below [`MIN_RING_HALF_SIZE`].
pub fn ring_shapes(m: usize, ring_count: usize) -> Vec<RingShape> {
    (0..ring_count)
        .map(|r| round_half_up(m as f64 / (2.0 * SQRT_2.powi(r as i32))))
        .take_while(|&h| h >= MIN_RING_HALF_SIZE)
        .filter_map(RingShape::inscribed)
        .collect()
}

#[inline]
pub fn ring_feature_unchecked(
    t: &IntegralTables,
    cx: usize,
    cy: usize,
    shape: &RingShape,
) -> RingFeature {
    let sq = square_features_unchecked(t, cx, cy, shape.square_half);
    let dm = diamond_features_unchecked(t, cx, cy, shape.diamond_radius);
    let s = combine_star(sq, dm);
    RingFeature {
        half_size: shape.half_size,
        mean: s.mean,
        std: s.std,
        grad_mag: s.grad_mag,
    }
}

pub fn ring_features_for(
    t: &IntegralTables,
    cx: usize,
    cy: usize,
    shapes: &[RingShape],
) -> Result<RingFeatureVector> {
    let mut rings = Vec::with_capacity(shapes.len());
    for shape in shapes {
        if !shape.fits(t.width(), t.height(), cx, cy) || shape.diamond_radius > t.max_radius() {
            return Err(Error::OutOfBounds(format!(
                "ring half-size {} at ({cx},{cy}) in {}x{}",
                shape.half_size,
                t.width(),
                t.height()
            )));
        }
        rings.push(ring_feature_unchecked(t, cx, cy, shape));
    }
    Ok(RingFeatureVector { rings })
}

/// Features of up to `ring_count` concentric central areas of the `m × m`
/// patch centred at `(cx, cy)`.
pub fn ring_features(
    t: &IntegralTables,
    cx: usize,
    cy: usize,
    m: usize,
    ring_count: usize,
) -> Result<RingFeatureVector> {
    if ring_count == 0 {
        return Err(Error::InvalidConfig("ring_count must be at least 1".into()));
    }
    let shapes = ring_shapes(m, ring_count);
    if shapes.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "patch size {m} has no ring of half-size >= {MIN_RING_HALF_SIZE}"
        )));
    }
    ring_features_for(t, cx, cy, &shapes)
}

/// Largest diamond radius used by any ring of an `m × m` patch.
pub fn max_diamond_radius(m: usize, ring_count: usize) -> usize {
    ring_shapes(m, ring_count)
        .iter()
        .map(|s| s.diamond_radius)
        .max()
        .unwrap_or(1)
}
