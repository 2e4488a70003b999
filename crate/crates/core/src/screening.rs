//! Scale-ladder screening: rule out every patch whose quantized ring
//! features cannot belong to any rescaled copy of the template.
//!
//! For each ladder size `m` the template is rescaled to every integer size
//! `k ∈ [m, ⌈m·λ⌉]`, the central `m × m` crop of each copy is described by
//! its ring features, and those features are inserted into a guard-banded
//! [`FeatureSet`]. Every `m × m` patch of the image is then kept only if all
//! of its rings hit the set.

use std::collections::HashSet;
use std::f64::consts::SQRT_2;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    max_diamond_radius, ring_feature_unchecked, ring_features_for, ring_shapes, round_half_up,
    RingFeature, RingFeatureVector, RingShape,
};
use crate::image_io::{crop_center, resize_bilinear, std_dev, GrayImage};
use crate::integral::IntegralTables;

/// Uniform quantizer `Q(f) = ⌊f/q + ½⌋`.
#[inline]
pub fn quantize(f: f64, q: f64) -> i32 {
    (f / q + 0.5).floor() as i32
}

/// Per-channel quantization steps in intensity units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub q_mean: f64,
    pub q_std: f64,
    pub q_grad: f64,
}

impl Quantizer {
    pub fn new(q_mean: f64, q_std: f64, q_grad: f64) -> Result<Self> {
        let q = Self {
            q_mean,
            q_std,
            q_grad,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn uniform(q: f64) -> Result<Self> {
        Self::new(q, q, q)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.steps_named() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn steps_named(&self) -> [(&'static str, f64); 3] {
        [
            ("q_mean", self.q_mean),
            ("q_std", self.q_std),
            ("q_grad", self.q_grad),
        ]
    }

    #[inline]
    pub fn steps(&self) -> [f64; 3] {
        [self.q_mean, self.q_std, self.q_grad]
    }

    #[inline]
    pub fn key(&self, ring: &RingFeature) -> RingKey {
        let c = ring.channels();
        let q = self.steps();
        [
            quantize(c[0], q[0]),
            quantize(c[1], q[1]),
            quantize(c[2], q[2]),
        ]
    }

    /// Scale every step by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            q_mean: self.q_mean * factor,
            q_std: self.q_std * factor,
            q_grad: self.q_grad * factor,
        }
    }
}

impl Default for Quantizer {
    fn default() -> Self {
        Self {
            q_mean: 8.0,
            q_std: 8.0,
            q_grad: 8.0,
        }
    }
}

/// Quantized (mean, std, gradient magnitude) of one ring.
pub type RingKey = [i32; 3];

/// Quantized ring keys concatenated in ring order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureKey(pub Vec<RingKey>);

impl FeatureKey {
    pub fn arity(&self) -> usize {
        3 * self.0.len()
    }
}

/// Guard-banded membership sets, one per ring.
#[derive(Clone, Debug)]
pub struct FeatureSet {
    quantizer: Quantizer,
    rings: Vec<HashSet<RingKey>>,
    instances: usize,
}

impl FeatureSet {
    pub fn new(ring_count: usize, quantizer: Quantizer) -> Self {
        Self {
            quantizer,
            rings: vec![HashSet::new(); ring_count],
            instances: 0,
        }
    }

    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    /// Number of feature vectors inserted so far.
    pub fn instances(&self) -> usize {
        self.instances
    }

    pub fn ring_len(&self, ring: usize) -> usize {
        self.rings[ring].len()
    }

    pub fn key(&self, fv: &RingFeatureVector) -> FeatureKey {
        FeatureKey(fv.rings.iter().map(|r| self.quantizer.key(r)).collect())
    }

    /// Mark, per ring, the cross product of `{Q(f−q/2), Q(f), Q(f+q/2)}`
    /// over the three channels.
    pub fn insert_guard_banded(&mut self, fv: &RingFeatureVector) -> Result<()> {
        if fv.len() != self.rings.len() {
            return Err(Error::InvalidConfig(format!(
                "feature vector has {} rings, set expects {}",
                fv.len(),
                self.rings.len()
            )));
        }
        let q = self.quantizer.steps();
        for (set, ring) in self.rings.iter_mut().zip(&fv.rings) {
            let c = ring.channels();
            let cells: [Vec<i32>; 3] = std::array::from_fn(|ch| {
                let mut v = vec![
                    quantize(c[ch] - q[ch] / 2.0, q[ch]),
                    quantize(c[ch], q[ch]),
                    quantize(c[ch] + q[ch] / 2.0, q[ch]),
                ];
                v.dedup();
                v
            });
            for &a in &cells[0] {
                for &b in &cells[1] {
                    for &d in &cells[2] {
                        set.insert([a, b, d]);
                    }
                }
            }
        }
        self.instances += 1;
        Ok(())
    }

    #[inline]
    pub fn contains_ring(&self, ring: usize, feature: &RingFeature) -> bool {
        self.rings[ring].contains(&self.quantizer.key(feature))
    }

    #[inline]
    pub fn contains_key(&self, ring: usize, key: &RingKey) -> bool {
        self.rings[ring].contains(key)
    }

    /// True iff every ring's key is present in that ring's set.
    pub fn ring_match(&self, fv: &RingFeatureVector) -> bool {
        fv.len() == self.rings.len()
            && fv
                .rings
                .iter()
                .enumerate()
                .all(|(i, r)| self.contains_ring(i, r))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub ring_count: usize,
    pub quantizer: Quantizer,
    pub stride: usize,
    /// Templates whose intensity standard deviation is below this are
    /// rejected as too flat to screen.
    pub min_template_std: f64,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 2.0,
            lambda: SQRT_2,
            ring_count: 3,
            quantizer: Quantizer::default(),
            stride: 1,
            min_template_std: 1.0,
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= self.beta && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scale range must satisfy 0 < alpha <= beta, got [{}, {}]",
                self.alpha, self.beta
            )));
        }
        if !(self.lambda > 1.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must exceed 1, got {}",
                self.lambda
            )));
        }
        if self.ring_count == 0 {
            return Err(Error::InvalidConfig("ring_count must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if self.min_template_std.is_nan() || self.min_template_std < 0.0 {
            return Err(Error::InvalidConfig("min_template_std must be >= 0".into()));
        }
        self.quantizer.validate()
    }
}

/// Smallest patch size a feature set can be built for.
pub const MIN_PATCH_SIZE: usize = 8;

/// Patch sizes `round(β·n·λ^−t)` for `t = 0, 1, …` while `m ≥ α·n`, with `n`
/// itself inserted when the range contains scale 1. Sorted descending.
pub fn ladder(n: usize, cfg: &ScreeningConfig) -> Vec<usize> {
    let floor = cfg.alpha * n as f64;
    let mut sizes = Vec::new();
    let mut t = 0;
    loop {
        let m = round_half_up(cfg.beta * n as f64 * cfg.lambda.powi(-t));
        if (m as f64) < floor || m == 0 {
            break;
        }
        sizes.push(m);
        t += 1;
    }
    if cfg.alpha <= 1.0 && 1.0 <= cfg.beta {
        sizes.push(n);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes.dedup();
    sizes
}

/// Offset from a patch centre to its footprint's first row/column.
#[inline]
pub fn footprint_offset(m: usize) -> usize {
    (m - 1) / 2
}

/// Valid centre range along one axis for an `m`-sized footprint.
#[inline]
pub fn center_range(extent: usize, m: usize) -> Option<(usize, usize)> {
    if m == 0 || m > extent {
        return None;
    }
    let lo = footprint_offset(m);
    Some((lo, extent - 1 - m / 2))
}

/// Ring features of the central `m × m` area of every rescaled template
/// `k ∈ [m, ⌈m·λ⌉]`, guard-band inserted.
pub fn build_feature_set(
    template: &GrayImage,
    m: usize,
    cfg: &ScreeningConfig,
) -> Result<FeatureSet> {
    cfg.validate()?;
    if m < MIN_PATCH_SIZE {
        return Err(Error::InvalidConfig(format!(
            "patch size {m} below minimum {MIN_PATCH_SIZE}"
        )));
    }
    let shapes = ring_shapes(m, cfg.ring_count);
    if shapes.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "patch size {m} has no usable ring"
        )));
    }
    let radius = max_diamond_radius(m, cfg.ring_count);
    let k_max = (m as f64 * cfg.lambda).ceil() as usize;
    let center = footprint_offset(m);
    let mut set = FeatureSet::new(shapes.len(), cfg.quantizer);
    for k in m..=k_max.max(m) {
        let scaled = resize_bilinear(template, k, k);
        let crop = crop_center(&scaled, m, m)?;
        let tables = IntegralTables::new(&crop, radius);
        let fv = ring_features_for(&tables, center, center, &shapes)?;
        set.insert_guard_banded(&fv)?;
    }
    Ok(set)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub cx: usize,
    pub cy: usize,
    pub m: usize,
}

impl Candidate {
    /// Inclusive footprint bounds `(x0, y0, x1, y1)`.
    #[inline]
    pub fn footprint(&self) -> (usize, usize, usize, usize) {
        let o = footprint_offset(self.m);
        let x0 = self.cx - o;
        let y0 = self.cy - o;
        (x0, y0, x0 + self.m - 1, y0 + self.m - 1)
    }
}

/// Screening outcome for one ladder size.
#[derive(Clone, Debug)]
pub struct ScaleLevel {
    pub m: usize,
    /// Kept candidates in row-major order.
    pub candidates: Vec<Candidate>,
    /// Kept centres over the image grid.
    pub mask: Vec<bool>,
    pub tested: usize,
    /// Centres kept because none of their rings fit (always zero when the
    /// stars are inscribed in the footprint).
    pub unevaluated: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneStats {
    pub patches_tested: usize,
    pub patches_kept: usize,
    pub patch_pruning: f64,
    pub region_kept_fraction: f64,
    pub region_pruning: f64,
    pub screen_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct ScreeningResult {
    pub width: usize,
    pub height: usize,
    pub levels: Vec<ScaleLevel>,
    /// Union of kept footprints over image pixels.
    pub region_mask: Vec<bool>,
    pub stats: PruneStats,
}

impl ScreeningResult {
    /// Assemble a result from per-level candidates, deriving the masks and
    /// statistics.
    pub fn from_levels(
        width: usize,
        height: usize,
        mut levels: Vec<ScaleLevel>,
        elapsed_s: f64,
    ) -> Self {
        for level in &mut levels {
            if level.mask.len() != width * height {
                let mut mask = vec![false; width * height];
                for c in &level.candidates {
                    mask[c.cy * width + c.cx] = true;
                }
                level.mask = mask;
            }
        }
        let region_mask = footprint_union(
            width,
            height,
            levels.iter().flat_map(|l| l.candidates.iter().copied()),
        );
        let mut result = Self {
            width,
            height,
            levels,
            region_mask,
            stats: PruneStats {
                patches_tested: 0,
                patches_kept: 0,
                patch_pruning: 1.0,
                region_kept_fraction: 0.0,
                region_pruning: 1.0,
                screen_time_s: elapsed_s,
            },
        };
        result.stats = prune_stats(&result);
        result.stats.screen_time_s = elapsed_s;
        result
    }

    /// Every stride-spaced centre of every size kept, as a full search sees
    /// it.
    pub fn exhaustive(width: usize, height: usize, sizes: &[usize], stride: usize) -> Self {
        let stride = stride.max(1);
        let levels = sizes
            .iter()
            .filter_map(|&m| {
                let (x0, x1) = center_range(width, m)?;
                let (y0, y1) = center_range(height, m)?;
                let candidates: Vec<_> = (y0..=y1)
                    .step_by(stride)
                    .flat_map(|cy| {
                        (x0..=x1)
                            .step_by(stride)
                            .map(move |cx| Candidate { cx, cy, m })
                    })
                    .collect();
                Some(ScaleLevel {
                    m,
                    tested: candidates.len(),
                    candidates,
                    mask: Vec::new(),
                    unevaluated: 0,
                })
            })
            .collect();
        Self::from_levels(width, height, levels, 0.0)
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.levels.iter().flat_map(|l| l.candidates.iter())
    }

    pub fn candidate_count(&self) -> usize {
        self.levels.iter().map(|l| l.candidates.len()).sum()
    }

    pub fn ladder(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.m).collect()
    }

    /// Region mask as an image: 255 kept, 0 pruned.
    pub fn region_mask_image(&self) -> GrayImage {
        mask_image(self.width, self.height, &self.region_mask)
    }

    pub fn level_mask_image(&self, level: usize) -> GrayImage {
        mask_image(self.width, self.height, &self.levels[level].mask)
    }
}

fn mask_image(width: usize, height: usize, mask: &[bool]) -> GrayImage {
    let data = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    GrayImage::new(width, height, data).expect("mask matches image dimensions")
}

/// Union of candidate footprints, rasterized with a 2-D difference array.
pub fn footprint_union(
    width: usize,
    height: usize,
    cands: impl Iterator<Item = Candidate>,
) -> Vec<bool> {
    let stride = width + 1;
    let mut diff = vec![0i32; stride * (height + 1)];
    for c in cands {
        let (x0, y0, x1, y1) = c.footprint();
        let (x1, y1) = (x1.min(width - 1) + 1, y1.min(height - 1) + 1);
        diff[y0 * stride + x0] += 1;
        diff[y0 * stride + x1] -= 1;
        diff[y1 * stride + x0] -= 1;
        diff[y1 * stride + x1] += 1;
    }
    let mut out = vec![false; width * height];
    let mut above = vec![0i32; width];
    for y in 0..height {
        let mut run = 0i32;
        for x in 0..width {
            run += diff[y * stride + x];
            above[x] += run;
            out[y * width + x] = above[x] > 0;
        }
    }
    out
}

/// Patch pruning `1 − kept/tested` over all ladder sizes and region pruning
/// `1 − |∪ kept footprints| / (width·height)`.
pub fn prune_stats(result: &ScreeningResult) -> PruneStats {
    let tested: usize = result.levels.iter().map(|l| l.tested).sum();
    let kept: usize = result.candidate_count();
    let covered = result.region_mask.iter().filter(|&&b| b).count();
    let total = (result.width * result.height) as f64;
    let region_kept_fraction = covered as f64 / total;
    PruneStats {
        patches_tested: tested,
        patches_kept: kept,
        patch_pruning: if tested == 0 {
            1.0
        } else {
            1.0 - kept as f64 / tested as f64
        },
        region_kept_fraction,
        region_pruning: 1.0 - region_kept_fraction,
        screen_time_s: result.stats.screen_time_s,
    }
}

fn scan_level(
    tables: &IntegralTables,
    set: &FeatureSet,
    shapes: &[RingShape],
    m: usize,
    stride: usize,
) -> ScaleLevel {
    let (w, h) = (tables.width(), tables.height());
    let Some(((x0, x1), (y0, y1))) = center_range(w, m).zip(center_range(h, m)) else {
        return ScaleLevel {
            m,
            candidates: Vec::new(),
            mask: vec![false; w * h],
            tested: 0,
            unevaluated: 0,
        };
    };
    let rows: Vec<usize> = (y0..=y1).step_by(stride).collect();
    let per_row: Vec<(Vec<Candidate>, usize, usize)> = rows
        .par_iter()
        .map(|&cy| {
            let mut kept = Vec::new();
            let mut tested = 0;
            let mut unevaluated = 0;
            for cx in (x0..=x1).step_by(stride) {
                tested += 1;
                let mut evaluated = false;
                let mut pass = true;
                for (i, shape) in shapes.iter().enumerate() {
                    if !shape.fits(w, h, cx, cy) {
                        continue;
                    }
                    evaluated = true;
                    let f = ring_feature_unchecked(tables, cx, cy, shape);
                    if !set.contains_ring(i, &f) {
                        pass = false;
                        break;
                    }
                }
                if !evaluated {
                    unevaluated += 1;
                }
                if pass {
                    kept.push(Candidate { cx, cy, m });
                }
            }
            (kept, tested, unevaluated)
        })
        .collect();
    let mut candidates = Vec::new();
    let mut tested = 0;
    let mut unevaluated = 0;
    for (k, t, u) in per_row {
        candidates.extend(k);
        tested += t;
        unevaluated += u;
    }
    let mut mask = vec![false; w * h];
    for c in &candidates {
        mask[c.cy * w + c.cx] = true;
    }
    ScaleLevel {
        m,
        candidates,
        mask,
        tested,
        unevaluated,
    }
}

/// Screen `image` for patches that may match `template` at any rotation and
/// any scale in `[α, β]`.
pub fn screen(
    image: &GrayImage,
    template: &GrayImage,
    cfg: &ScreeningConfig,
) -> Result<ScreeningResult> {
    let start = Instant::now();
    cfg.validate()?;
    let s = std_dev(template);
    if s < cfg.min_template_std {
        return Err(Error::TemplateTooFlat {
            std: s,
            threshold: cfg.min_template_std,
        });
    }
    let n = template.width();
    let sizes: Vec<usize> = ladder(n, cfg)
        .into_iter()
        .filter(|&m| m >= MIN_PATCH_SIZE && m <= image.width() && m <= image.height())
        .collect();
    if sizes.is_empty() {
        return Err(Error::OutOfBounds(format!(
            "image {}x{} cannot hold any ladder patch for template side {n}",
            image.width(),
            image.height()
        )));
    }
    let radius = sizes
        .iter()
        .map(|&m| max_diamond_radius(m, cfg.ring_count))
        .max()
        .unwrap_or(1);
    let tables = IntegralTables::new(image, radius);
    let mut levels = Vec::with_capacity(sizes.len());
    for &m in &sizes {
        let set = build_feature_set(template, m, cfg)?;
        let shapes = ring_shapes(m, cfg.ring_count);
        levels.push(scan_level(&tables, &set, &shapes, m, cfg.stride));
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(ScreeningResult::from_levels(
        image.width(),
        image.height(),
        levels,
        elapsed,
    ))
}
