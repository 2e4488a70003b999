//! Ground-truthed synthetic matching cases and the pruning benchmark.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{
    load_pgm, quantize_intensity, resize_bilinear, sin_cos_deg, std_dev, GrayImage,
};
use crate::screening::{screen, ScreeningConfig, ScreeningResult};
use crate::second_stage::match_candidates;

/// Attempts `make_case` makes before giving up.
pub const MAX_RETRIES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Centre of the source square in reference coordinates.
    pub center: (f64, f64),
    /// Side of the source square before rescaling.
    pub side: usize,
    pub angle: f64,
    /// `side / out_side`.
    pub scale: f64,
    /// Reference pixels whose centres lie inside the rotated source square.
    pub footprint: Vec<(usize, usize)>,
}

/// Pixels whose centres fall inside the square of `side` centred at `center`
/// and rotated by `angle`, clipped to the image.
pub fn rotated_square_pixels(
    width: usize,
    height: usize,
    center: (f64, f64),
    side: usize,
    angle: f64,
) -> Vec<(usize, usize)> {
    let (s, c) = sin_cos_deg(angle);
    let half = side as f64 / 2.0;
    let reach = half * (c.abs() + s.abs()) + 1.0;
    let x_lo = (center.0 - reach).floor().max(0.0) as usize;
    let y_lo = (center.1 - reach).floor().max(0.0) as usize;
    let x_hi = ((center.0 + reach).ceil() as usize).min(width.saturating_sub(1));
    let y_hi = ((center.1 + reach).ceil() as usize).min(height.saturating_sub(1));
    let mut out = Vec::new();
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let (dx, dy) = (x as f64 - center.0, y as f64 - center.1);
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            if u.abs() <= half + 1e-9 && v.abs() <= half + 1e-9 {
                out.push((x, y));
            }
        }
    }
    out
}

/// Sample `side × side` pixels of `image` on a grid centred at `center` and
/// rotated by `angle`, so that rotating the result by `angle` restores the
/// reference orientation.
pub fn extract_rotated(
    image: &GrayImage,
    center: (f64, f64),
    side: usize,
    angle: f64,
) -> GrayImage {
    let (s, c) = sin_cos_deg(angle);
    let uc = (side as f64 - 1.0) / 2.0;
    GrayImage::from_fn(side, side, |u, v| {
        let (du, dv) = (u as f64 - uc, v as f64 - uc);
        let x = center.0 + c * du - s * dv;
        let y = center.1 + s * du + c * dv;
        quantize_intensity(image.sample_bilinear(x, y))
    })
}

/// Draw a template from `image` at a random location, rotation and scale.
pub fn make_case(
    image: &GrayImage,
    seed: u64,
    scale_range: (f64, f64),
    std_threshold: f64,
    out_side: usize,
) -> Result<(GrayImage, GroundTruth)> {
    let (lo, hi) = scale_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bad scale range [{lo}, {hi}]"
        )));
    }
    if std_threshold.is_nan() || std_threshold < 0.0 || out_side == 0 {
        return Err(Error::InvalidConfig(
            "std threshold must be >= 0 and out side >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RETRIES {
        let scale = if lo == hi {
            lo
        } else {
            rng.random_range(lo.ln()..=hi.ln()).exp()
        };
        let angle: f64 = rng.random_range(0.0..360.0);
        let side = ((scale * out_side as f64).round() as usize).max(1);
        let (s, c) = sin_cos_deg(angle);
        let extent = side as f64 / 2.0 * (c.abs() + s.abs());
        let off = (side as f64 - 1.0) / 2.0;
        // integer top-left x0 so that x0 + off ± extent stays inside [0, W-1]
        let range = |len: usize| -> Option<(i64, i64)> {
            let a = (extent - off).ceil() as i64;
            let b = (len as f64 - 1.0 - extent - off).floor() as i64;
            (a <= b).then_some((a, b))
        };
        let (Some((ax, bx)), Some((ay, by))) = (range(image.width()), range(image.height())) else {
            let _ = rng.random::<u64>();
            continue;
        };
        let x0 = rng.random_range(ax..=bx);
        let y0 = rng.random_range(ay..=by);
        let center = (x0 as f64 + off, y0 as f64 + off);
        let source = extract_rotated(image, center, side, angle);
        let template = resize_bilinear(&source, out_side, out_side);
        if std_dev(&template) < std_threshold {
            continue;
        }
        let footprint = rotated_square_pixels(image.width(), image.height(), center, side, angle);
        return Ok((
            template,
            GroundTruth {
                center,
                side,
                angle,
                scale: side as f64 / out_side as f64,
                footprint,
            },
        ));
    }
    Err(Error::RetriesExhausted(MAX_RETRIES))
}

/// Fraction of the truth footprint covered by the kept region.
pub fn overlap_preserved(result: &ScreeningResult, truth: &GroundTruth) -> f64 {
    overlap_with_mask(&result.region_mask, result.width, &truth.footprint)
}

pub fn overlap_with_mask(mask: &[bool], width: usize, footprint: &[(usize, usize)]) -> f64 {
    if footprint.is_empty() {
        return 0.0;
    }
    let hit = footprint
        .iter()
        .filter(|&&(x, y)| mask[y * width + x])
        .count();
    hit as f64 / footprint.len() as f64
}

/// Overlap fraction a case needs to count as a success.
pub const SUCCESS_OVERLAP: f64 = 0.90;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub image_id: String,
    pub case_index: usize,
    pub template_size: usize,
    pub true_center: (f64, f64),
    pub true_angle: f64,
    pub true_scale: f64,
    pub overlap_preserved: f64,
    pub success: bool,
    pub patch_pruning: f64,
    pub region_pruning: f64,
    pub screen_time: f64,
    pub match_time: Option<f64>,
    pub match_error_px: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchAggregates {
    pub cases: usize,
    pub successes: usize,
    pub success_ratio: f64,
    pub mean_overlap: f64,
    pub mean_patch_pruning: f64,
    pub mean_region_pruning: f64,
    pub mean_screen_time: f64,
    pub mean_match_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub cases: Vec<BenchCase>,
    pub aggregates: BenchAggregates,
    pub skipped: Vec<SkippedFile>,
}

const TIMING_KEYS: [&str; 4] = [
    "screen_time",
    "match_time",
    "mean_screen_time",
    "mean_match_time",
];

fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            for k in TIMING_KEYS {
                map.remove(k);
            }
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

impl BenchReport {
    pub fn from_cases(cases: Vec<BenchCase>, skipped: Vec<SkippedFile>) -> Self {
        let n = cases.len();
        let mean = |f: &dyn Fn(&BenchCase) -> f64| {
            if n == 0 {
                0.0
            } else {
                cases.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let successes = cases.iter().filter(|c| c.success).count();
        let timed: Vec<f64> = cases.iter().filter_map(|c| c.match_time).collect();
        let aggregates = BenchAggregates {
            cases: n,
            successes,
            success_ratio: if n == 0 {
                0.0
            } else {
                successes as f64 / n as f64
            },
            mean_overlap: mean(&|c| c.overlap_preserved),
            mean_patch_pruning: mean(&|c| c.patch_pruning),
            mean_region_pruning: mean(&|c| c.region_pruning),
            mean_screen_time: mean(&|c| c.screen_time),
            mean_match_time: (!timed.is_empty())
                .then(|| timed.iter().sum::<f64>() / timed.len() as f64),
        };
        Self {
            cases,
            aggregates,
            skipped,
        }
    }

    /// Pretty JSON; without timing the output depends only on the inputs.
    pub fn to_json(&self, include_timing: bool) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if !include_timing {
            strip_timing(&mut v);
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn summary_line(&self) -> String {
        let a = &self.aggregates;
        let mut line = format!(
            "cases {} success {:.2}% overlap {:.2}% patch pruning {:.2}% region pruning {:.2}% screen {:.3}s",
            a.cases,
            100.0 * a.success_ratio,
            100.0 * a.mean_overlap,
            100.0 * a.mean_patch_pruning,
            100.0 * a.mean_region_pruning,
            a.mean_screen_time
        );
        if let Some(t) = a.mean_match_time {
            line.push_str(&format!(" match {t:.3}s"));
        }
        line
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub cases_per_image: usize,
    pub seed: u64,
    pub template_side: usize,
    pub scale_range: (f64, f64),
    pub std_threshold: f64,
    /// Run the second stage with this angle step when set.
    pub angle_step: Option<f64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            cases_per_image: 2,
            seed: 0,
            template_side: 32,
            scale_range: (0.5, 2.0),
            std_threshold: 20.0,
            angle_step: None,
        }
    }
}

/// Per-case seed; a pure function of the run seed and case position.
pub fn case_seed(seed: u64, image_index: usize, case_index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((image_index as u64) << 20)
        .wrapping_add(case_index as u64)
}

fn run_case(
    image_id: &str,
    image: &GrayImage,
    seed: u64,
    case_index: usize,
    cfg: &ScreeningConfig,
    opts: &BenchOptions,
) -> Result<BenchCase> {
    let (template, truth) = make_case(
        image,
        seed,
        opts.scale_range,
        opts.std_threshold,
        opts.template_side,
    )?;
    let screened = screen(image, &template, cfg)?;
    let overlap = overlap_preserved(&screened, &truth);
    let (match_time, match_error_px) = match opts.angle_step {
        Some(step) => {
            let start = Instant::now();
            let found = match_candidates(image, &template, &screened, step);
            let t = start.elapsed().as_secs_f64();
            let err = found
                .ok()
                .map(|r| (r.cx as f64 - truth.center.0).hypot(r.cy as f64 - truth.center.1));
            (Some(t), err)
        }
        None => (None, None),
    };
    Ok(BenchCase {
        image_id: image_id.to_string(),
        case_index,
        template_size: opts.template_side,
        true_center: truth.center,
        true_angle: truth.angle,
        true_scale: truth.scale,
        overlap_preserved: overlap,
        success: overlap >= SUCCESS_OVERLAP,
        patch_pruning: screened.stats.patch_pruning,
        region_pruning: screened.stats.region_pruning,
        screen_time: screened.stats.screen_time_s,
        match_time,
        match_error_px,
    })
}

/// Benchmark over in-memory images, ordered by (image, case).
pub fn run_benchmark_images(
    images: &[(String, GrayImage)],
    cfg: &ScreeningConfig,
    opts: &BenchOptions,
) -> Result<BenchReport> {
    run_inner(images, Vec::new(), cfg, opts)
}

fn run_inner(
    images: &[(String, GrayImage)],
    mut skipped: Vec<SkippedFile>,
    cfg: &ScreeningConfig,
    opts: &BenchOptions,
) -> Result<BenchReport> {
    cfg.validate()?;
    let mut cases = Vec::new();
    for (ii, (id, img)) in images.iter().enumerate() {
        for ci in 0..opts.cases_per_image {
            match run_case(id, img, case_seed(opts.seed, ii, ci), ci, cfg, opts) {
                Ok(c) => cases.push(c),
                Err(
                    e @ (Error::RetriesExhausted(_)
                    | Error::TemplateTooFlat { .. }
                    | Error::OutOfBounds(_)),
                ) => skipped.push(SkippedFile {
                    path: format!("{id}#{ci}"),
                    reason: e.to_string(),
                }),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(BenchReport::from_cases(cases, skipped))
}

/// PGM files of `dir` in name order.
pub fn list_pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "pnm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Benchmark every PGM in `dir`. Unreadable files are listed in
/// `skipped` rather than aborting the run.
pub fn run_benchmark(
    dir: &Path,
    cfg: &ScreeningConfig,
    opts: &BenchOptions,
) -> Result<BenchReport> {
    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for path in list_pgm_files(dir)? {
        let id = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match load_pgm(&path) {
            Ok(img) => images.push((id, img)),
            Err(e) => skipped.push(SkippedFile {
                path: id,
                reason: e.to_string(),
            }),
        }
    }
    run_inner(&images, skipped, cfg, opts)
}

fn value_noise(width: usize, height: usize, cell: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = (width as f64 / cell).ceil() as usize + 2;
    let gh = (height as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let fy = y as f64 / cell;
        let (iy, ty) = (fy as usize, smooth(fy.fract()));
        for x in 0..width {
            let fx = x as f64 / cell;
            let (ix, tx) = (fx as usize, smooth(fx.fract()));
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
            let bot = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
            out[y * width + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Photo-like synthetic scene: a shaded background overlaid with occluding
/// ellipses and rectangles, each with its own shading and, for some, a fine
/// texture; finished with light noise and a 3×3 blur.
pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = value_noise(width, height, 160.0, &mut rng);
    let (bx, by) = (rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15));
    let level0: f64 = rng.random_range(60.0..190.0);
    let mut acc: Vec<f64> = (0..width * height)
        .map(|i| level0 + 40.0 * base[i] + bx * (i % width) as f64 + by * (i / width) as f64)
        .collect();
    let shapes = 12 + (width * height) / 12_000;
    for _ in 0..shapes {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let rx: f64 = rng.random_range(8.0..110.0);
        let ry: f64 = rng.random_range(8.0..110.0);
        let level: f64 = rng.random_range(10.0..245.0);
        let (gx, gy): (f64, f64) = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
        let ellipse = rng.random_bool(0.5);
        let texture = rng
            .random_bool(0.35)
            .then(|| (rng.random_range(3.0..10.0), rng.random_range(8.0..30.0)));
        let (s, c) = rng.random_range(0.0f64..std::f64::consts::PI).sin_cos();
        let reach = rx.max(ry);
        let x0 = (cx - reach).max(0.0) as usize;
        let x1 = ((cx + reach) as usize).min(width - 1);
        let y0 = (cy - reach).max(0.0) as usize;
        let y1 = ((cy + reach) as usize).min(height - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let tex = texture.map(|(cell, amp)| {
            let (tw, th) = (x1 - x0 + 1, y1 - y0 + 1);
            (value_noise(tw, th, cell, &mut rng), amp, tw)
        });
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                let inside = if ellipse {
                    u * u + v * v <= 1.0
                } else {
                    u.abs() <= 1.0 && v.abs() <= 1.0
                };
                if inside {
                    let mut val = level + gx * dx + gy * dy;
                    if let Some((t, amp, tw)) = &tex {
                        val += amp * t[(y - y0) * tw + (x - x0)];
                    }
                    acc[y * width + x] = val;
                }
            }
        }
    }
    for v in acc.iter_mut() {
        *v += rng.random_range(-3.0..3.0);
    }
    let mut out = GrayImage::filled(width, height, 0);
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            let mut n = 0.0;
            for yy in y.saturating_sub(1)..=(y + 1).min(height - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                    sum += acc[yy * width + xx];
                    n += 1.0;
                }
            }
            out.set(x, y, quantize_intensity(sum / n));
        }
    }
    out
}
