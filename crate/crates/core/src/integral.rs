//! Axis-aligned and 45°-tilted summed area tables.
//!
//! A [`Sat`] answers sums over axis-aligned `2n × 2n` windows with four
//! lookups. An [`Rsat`] answers sums over closed ℓ1 balls (diamonds) of
//! integer radius. It stores the upward triangle table
//!
//! ```text
//! T(x, y) = Σ { w(i,j)·I(i,j) : j ≤ y − |i − x| }
//! ```
//!
//! together with the two diagonal ray tables its construction needs
//! (`Dul`, the up-left ray from `(x, y)`, and `Dur`, the up-right ray). The
//! triangle lattice only contains points of one diagonal parity per corner,
//! so a closed ball is four triangle corners plus two ray corrections:
//!
//! ```text
//! ball(c, r) = T(cx, cy+r) − T(cx−r−1, cy) − T(cx+r+1, cy) + T(cx, cy−r−1)
//!            + Dul(cx−r−1, cy) + Dur(cx+r+1, cy)
//! ```
//!
//! All cells are exact 64-bit integers. Weights use 1-based coordinates, so
//! the x-weighted table accumulates `(x+1)·I(x,y)`.

use crate::error::{Error, Result};
use crate::image_io::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WeightKind {
    Plain,
    XWeighted,
    YWeighted,
    Squared,
}

impl WeightKind {
    pub const ALL: [WeightKind; 4] = [
        WeightKind::Plain,
        WeightKind::XWeighted,
        WeightKind::YWeighted,
        WeightKind::Squared,
    ];

    /// Weighted contribution of the pixel at 0-based `(x, y)`.
    #[inline]
    pub fn weight(self, x: usize, y: usize, v: u8) -> i64 {
        let v = v as i64;
        match self {
            WeightKind::Plain => v,
            WeightKind::XWeighted => (x as i64 + 1) * v,
            WeightKind::YWeighted => (y as i64 + 1) * v,
            WeightKind::Squared => v * v,
        }
    }
}

fn assert_budget(width: usize, height: usize, pad: usize) {
    let pixels = width as u128 * height as u128;
    let extent = (width.max(height) + pad) as u128;
    assert!(
        pixels <= 1 << 31 && 255 * 255 * extent * pixels <= i64::MAX as u128,
        "image {width}x{height} exceeds the 64-bit integral table budget"
    );
}

/// Axis-aligned summed area table with a virtual zero row and column at -1.
#[derive(Clone, Debug)]
pub struct Sat {
    width: usize,
    height: usize,
    kind: WeightKind,
    cells: Vec<i64>,
}

impl Sat {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    /// Cumulative sum over `i ≤ x, j ≤ y`; `x` and `y` may be -1.
    #[inline]
    pub fn cell(&self, x: isize, y: isize) -> i64 {
        debug_assert!(x >= -1 && y >= -1);
        self.cells[(y + 1) as usize * (self.width + 1) + (x + 1) as usize]
    }

    /// Sum over the `2n × 2n` window `[cx−n+1, cx+n] × [cy−n+1, cy+n]`
    /// without bounds checks.
    #[inline]
    pub fn window_sum_unchecked(&self, cx: usize, cy: usize, n: usize) -> i64 {
        let stride = self.width + 1;
        // cell index of (x, y) is (y+1)*stride + (x+1)
        let x_hi = cx + n + 1;
        let x_lo = cx + 1 - n;
        let y_hi = (cy + n + 1) * stride;
        let y_lo = (cy + 1 - n) * stride;
        self.cells[y_hi + x_hi] - self.cells[y_hi + x_lo] - self.cells[y_lo + x_hi]
            + self.cells[y_lo + x_lo]
    }
}

pub fn build_sat(img: &GrayImage, kind: WeightKind) -> Sat {
    let (w, h) = (img.width(), img.height());
    assert_budget(w, h, 0);
    let stride = w + 1;
    let mut cells = vec![0i64; stride * (h + 1)];
    // horizontal cumulative pass per row
    for y in 0..h {
        let row = (y + 1) * stride;
        let mut acc = 0i64;
        for x in 0..w {
            acc += kind.weight(x, y, img.get(x, y));
            cells[row + x + 1] = acc;
        }
    }
    // vertical cumulative pass per column
    for y in 1..h {
        let (prev, cur) = cells.split_at_mut((y + 1) * stride);
        let prev = &prev[y * stride..];
        for x in 1..stride {
            cur[x] += prev[x];
        }
    }
    Sat {
        width: w,
        height: h,
        kind,
        cells,
    }
}

/// Sum over the `2n × 2n` window centred (upper-left of centre) at `(cx, cy)`.
pub fn square_region_sum(sat: &Sat, cx: usize, cy: usize, n: usize) -> Result<i64> {
    if n == 0 || cx + 1 < n || cy + 1 < n || cx + n >= sat.width || cy + n >= sat.height {
        return Err(Error::OutOfBounds(format!(
            "window n={n} at ({cx},{cy}) in {}x{}",
            sat.width, sat.height
        )));
    }
    Ok(sat.window_sum_unchecked(cx, cy, n))
}

/// Tilted summed area table over a grid widened by `pad` on every side.
#[derive(Clone, Debug)]
pub struct Rsat {
    width: usize,
    height: usize,
    kind: WeightKind,
    pad: usize,
    grid_w: usize,
    tri: Vec<i64>,
    dul: Vec<i64>,
    dur: Vec<i64>,
}

impl Rsat {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    #[inline]
    pub fn max_radius(&self) -> usize {
        self.pad
    }

    /// Range of valid `x` indices (inclusive).
    pub fn x_range(&self) -> (isize, isize) {
        (-(self.pad as isize), (self.width + self.pad) as isize - 1)
    }

    /// Range of valid `y` indices (inclusive).
    pub fn y_range(&self) -> (isize, isize) {
        (-(self.pad as isize), (self.height + self.pad) as isize - 1)
    }

    #[inline]
    fn index(&self, x: isize, y: isize) -> usize {
        (y + self.pad as isize) as usize * self.grid_w + (x + self.pad as isize) as usize
    }

    /// Triangle sum with apex at `(x, y)`.
    #[inline]
    pub fn cell(&self, x: isize, y: isize) -> i64 {
        self.tri[self.index(x, y)]
    }

    /// Sum along the ray `(x−k, y−k)`, `k ≥ 0`.
    #[inline]
    pub fn ray_up_left(&self, x: isize, y: isize) -> i64 {
        self.dul[self.index(x, y)]
    }

    /// Sum along the ray `(x+k, y−k)`, `k ≥ 0`.
    #[inline]
    pub fn ray_up_right(&self, x: isize, y: isize) -> i64 {
        self.dur[self.index(x, y)]
    }

    /// Closed ℓ1 ball sum without bounds checks.
    #[inline]
    pub fn diamond_sum_unchecked(&self, cx: usize, cy: usize, r: usize) -> i64 {
        let gw = self.grid_w;
        let p = self.pad;
        let top = (cy + p - r - 1) * gw;
        let mid = (cy + p) * gw;
        let bot = (cy + p + r) * gw;
        let xc = cx + p;
        let xl = cx + p - r - 1;
        let xr = cx + p + r + 1;
        self.tri[bot + xc] - self.tri[mid + xl] - self.tri[mid + xr]
            + self.tri[top + xc]
            + self.dul[mid + xl]
            + self.dur[mid + xr]
    }
}

pub fn build_rsat(img: &GrayImage, kind: WeightKind, max_radius: usize) -> Rsat {
    assert!(max_radius >= 1, "max_radius must be at least 1");
    let (w, h) = (img.width(), img.height());
    assert_budget(w, h, max_radius);
    let pad = max_radius;
    let gw = w + 2 * pad;
    let gh = h + 2 * pad;
    let mut tri = vec![0i64; gw * gh];
    let mut dul = vec![0i64; gw * gh];
    let mut dur = vec![0i64; gw * gh];
    let value = |gx: usize, gy: usize| -> i64 {
        if gx < pad || gy < pad || gx >= pad + w || gy >= pad + h {
            0
        } else {
            let (x, y) = (gx - pad, gy - pad);
            kind.weight(x, y, img.get(x, y))
        }
    };
    for gy in 0..gh {
        let row = gy * gw;
        for gx in 0..gw {
            let v = value(gx, gy);
            // rays leaving the grid only cross pixels outside the image
            let ul = if gy > 0 && gx > 0 {
                dul[row - gw + gx - 1]
            } else {
                0
            };
            let ur = if gy > 0 && gx + 1 < gw {
                dur[row - gw + gx + 1]
            } else {
                0
            };
            let above = if gy > 0 { tri[row - gw + gx] } else { 0 };
            let a = v + ul;
            let b = v + ur;
            dul[row + gx] = a;
            dur[row + gx] = b;
            tri[row + gx] = above + a + b - v;
        }
    }
    Rsat {
        width: w,
        height: h,
        kind,
        pad,
        grid_w: gw,
        tri,
        dul,
        dur,
    }
}

/// Sum over the closed ℓ1 ball `{|i−cx| + |j−cy| ≤ r}`.
pub fn diamond_region_sum(rsat: &Rsat, cx: usize, cy: usize, r: usize) -> Result<i64> {
    if r > rsat.pad || cx < r || cy < r || cx + r >= rsat.width || cy + r >= rsat.height {
        return Err(Error::OutOfBounds(format!(
            "diamond r={r} at ({cx},{cy}) in {}x{} (max radius {})",
            rsat.width, rsat.height, rsat.pad
        )));
    }
    Ok(rsat.diamond_sum_unchecked(cx, cy, r))
}

/// Number of pixels in a closed ℓ1 ball of radius `r`.
#[inline]
pub fn diamond_pixel_count(r: usize) -> usize {
    2 * r * r + 2 * r + 1
}

/// The eight tables derived from one image.
#[derive(Clone, Debug)]
pub struct IntegralTables {
    pub sat_plain: Sat,
    pub sat_x: Sat,
    pub sat_y: Sat,
    pub sat_sq: Sat,
    pub rsat_plain: Rsat,
    pub rsat_x: Rsat,
    pub rsat_y: Rsat,
    pub rsat_sq: Rsat,
    width: usize,
    height: usize,
}

impl IntegralTables {
    pub fn new(img: &GrayImage, max_radius: usize) -> Self {
        let max_radius = max_radius.max(1);
        let ((sat_plain, sat_x), (sat_y, sat_sq)) = rayon::join(
            || {
                rayon::join(
                    || build_sat(img, WeightKind::Plain),
                    || build_sat(img, WeightKind::XWeighted),
                )
            },
            || {
                rayon::join(
                    || build_sat(img, WeightKind::YWeighted),
                    || build_sat(img, WeightKind::Squared),
                )
            },
        );
        let ((rsat_plain, rsat_x), (rsat_y, rsat_sq)) = rayon::join(
            || {
                rayon::join(
                    || build_rsat(img, WeightKind::Plain, max_radius),
                    || build_rsat(img, WeightKind::XWeighted, max_radius),
                )
            },
            || {
                rayon::join(
                    || build_rsat(img, WeightKind::YWeighted, max_radius),
                    || build_rsat(img, WeightKind::Squared, max_radius),
                )
            },
        );
        Self {
            sat_plain,
            sat_x,
            sat_y,
            sat_sq,
            rsat_plain,
            rsat_x,
            rsat_y,
            rsat_sq,
            width: img.width(),
            height: img.height(),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn max_radius(&self) -> usize {
        self.rsat_plain.pad
    }

    pub fn sat(&self, kind: WeightKind) -> &Sat {
        match kind {
            WeightKind::Plain => &self.sat_plain,
            WeightKind::XWeighted => &self.sat_x,
            WeightKind::YWeighted => &self.sat_y,
            WeightKind::Squared => &self.sat_sq,
        }
    }

    pub fn rsat(&self, kind: WeightKind) -> &Rsat {
        match kind {
            WeightKind::Plain => &self.rsat_plain,
            WeightKind::XWeighted => &self.rsat_x,
            WeightKind::YWeighted => &self.rsat_y,
            WeightKind::Squared => &self.rsat_sq,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.random())
    }

    fn triangle_oracle(img: &GrayImage, kind: WeightKind, x: isize, y: isize) -> i64 {
        let mut s = 0;
        for j in 0..img.height() {
            for i in 0..img.width() {
                if (j as isize) <= y - (i as isize - x).abs() {
                    s += kind.weight(i, j, img.get(i, j));
                }
            }
        }
        s
    }

    #[test]
    fn sat_small_example() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let sat = build_sat(&img, WeightKind::Plain);
        assert_eq!(
            [
                sat.cell(0, 0),
                sat.cell(1, 0),
                sat.cell(0, 1),
                sat.cell(1, 1)
            ],
            [1, 3, 4, 10]
        );
        assert_eq!(sat.cell(-1, 1), 0);
    }

    #[test]
    fn zero_image_gives_zero_tables() {
        let img = GrayImage::filled(9, 6, 0);
        for kind in WeightKind::ALL {
            assert!(build_sat(&img, kind).cells.iter().all(|&c| c == 0));
            let r = build_rsat(&img, kind, 3);
            assert!(r.tri.iter().chain(&r.dul).chain(&r.dur).all(|&c| c == 0));
        }
    }

    #[test]
    fn sat_x_weighted_matches_oracle() {
        let img = random_image(48, 32, 5);
        let sat = build_sat(&img, WeightKind::XWeighted);
        for y in 0..32 {
            for x in 0..48 {
                let mut s = 0;
                for j in 0..=y {
                    for i in 0..=x {
                        s += (i as i64 + 1) * img.get(i, j) as i64;
                    }
                }
                assert_eq!(sat.cell(x as isize, y as isize), s);
            }
        }
    }

    #[test]
    fn rsat_small_example() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let r = build_rsat(&img, WeightKind::Plain, 1);
        assert_eq!(r.cell(0, 1), 6);
    }

    #[test]
    fn rsat_squared_matches_triangle_oracle_everywhere() {
        let img = random_image(37, 29, 6);
        let r = build_rsat(&img, WeightKind::Squared, 4);
        let (x0, x1) = r.x_range();
        let (y0, y1) = r.y_range();
        for y in y0..=y1 {
            for x in x0..=x1 {
                assert_eq!(
                    r.cell(x, y),
                    triangle_oracle(&img, WeightKind::Squared, x, y),
                    "({x},{y})"
                );
            }
        }
    }

    #[test]
    fn square_sums_on_ones() {
        let img = GrayImage::filled(10, 10, 1);
        let sat = build_sat(&img, WeightKind::Plain);
        assert_eq!(square_region_sum(&sat, 4, 4, 1).unwrap(), 4);
        assert_eq!(square_region_sum(&sat, 4, 4, 3).unwrap(), 36);
        assert!(square_region_sum(&sat, 1, 4, 3).is_err());
        assert!(square_region_sum(&sat, 6, 4, 4).is_err());
        assert!(square_region_sum(&sat, 5, 5, 0).is_err());
    }

    #[test]
    fn diamond_sums_on_ones() {
        let img = GrayImage::filled(10, 10, 1);
        let r = build_rsat(&img, WeightKind::Plain, 4);
        assert_eq!(diamond_region_sum(&r, 5, 5, 1).unwrap(), 5);
        assert_eq!(diamond_region_sum(&r, 5, 5, 2).unwrap(), 13);
        assert_eq!(diamond_region_sum(&r, 4, 4, 4).unwrap(), 41);
        assert_eq!(diamond_region_sum(&r, 0, 0, 0).unwrap(), 1);
        assert!(diamond_region_sum(&r, 1, 5, 2).is_err());
        assert!(diamond_region_sum(&r, 5, 5, 5).is_err());
    }

    #[test]
    fn diamond_count_matches_enumeration() {
        assert_eq!(diamond_pixel_count(0), 1);
        assert_eq!(diamond_pixel_count(1), 5);
        let r = 10i64;
        let mut n = 0;
        for j in -r..=r {
            for i in -r..=r {
                if i.abs() + j.abs() <= r {
                    n += 1;
                }
            }
        }
        assert_eq!(n, 221);
        assert_eq!(diamond_pixel_count(10), 221);
    }

    #[test]
    fn square_additivity_of_quadrants() {
        let img = random_image(40, 40, 12);
        let sat = build_sat(&img, WeightKind::Plain);
        let (cx, cy, n) = (19usize, 20usize, 6usize);
        let h = n / 2;
        let whole = square_region_sum(&sat, cx, cy, n).unwrap();
        let quads = square_region_sum(&sat, cx - h, cy - h, h).unwrap()
            + square_region_sum(&sat, cx + h, cy - h, h).unwrap()
            + square_region_sum(&sat, cx - h, cy + h, h).unwrap()
            + square_region_sum(&sat, cx + h, cy + h, h).unwrap();
        assert_eq!(whole, quads);
    }

    #[test]
    fn diamond_grows_by_its_boundary_ring() {
        let img = random_image(30, 30, 13);
        let rs = build_rsat(&img, WeightKind::Plain, 9);
        let (cx, cy) = (15isize, 14isize);
        for r in 1..=9isize {
            let inner = diamond_region_sum(&rs, cx as usize, cy as usize, r as usize - 1).unwrap();
            let outer = diamond_region_sum(&rs, cx as usize, cy as usize, r as usize).unwrap();
            let mut ring = 0;
            for j in -r..=r {
                for i in -r..=r {
                    if i.abs() + j.abs() == r {
                        ring += img.get((cx + i) as usize, (cy + j) as usize) as i64;
                    }
                }
            }
            assert_eq!(outer - inner, ring);
        }
    }

    #[test]
    fn whole_image_corner_equals_total() {
        let img = random_image(23, 17, 14);
        let sat = build_sat(&img, WeightKind::Plain);
        let total: i64 = img.data().iter().map(|&v| v as i64).sum();
        assert_eq!(sat.cell(22, 16), total);
    }
}
