//! Rotated normalized cross-correlation over screened candidates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{crop, resize_bilinear, rotate_with_mask, GrayImage};
use crate::screening::{footprint_offset, screen, Candidate, ScreeningConfig, ScreeningResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub cx: usize,
    pub cy: usize,
    pub m: usize,
    /// Patch size over template side.
    pub scale: f64,
    pub angle: f64,
    pub score: f64,
}

/// Zero-mean NCC of two equally sized images; 0 when either is constant.
pub fn ncc(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::InvalidImage(format!(
            "size mismatch {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(ncc_slices(a.data(), b.data()))
}

/// NCC between `probe` and the equally sized image window centred at
/// `(cx, cy)`.
pub fn ncc_score(image: &GrayImage, probe: &GrayImage, cx: usize, cy: usize) -> Result<f64> {
    if probe.width() == 0 || probe.height() == 0 {
        return Err(Error::InvalidImage("empty probe".into()));
    }
    let (ox, oy) = (
        footprint_offset(probe.width()),
        footprint_offset(probe.height()),
    );
    if cx < ox || cy < oy {
        return Err(Error::OutOfBounds(format!(
            "window at ({cx}, {cy}) leaves the image"
        )));
    }
    let window = crop(image, cx - ox, cy - oy, probe.width(), probe.height())?;
    ncc(&window, probe)
}

fn ncc_slices(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Template scaled to `m × m` and rotated by `angle`, restricted to the
/// pixels that came from inside the template and stored zero-mean.
#[derive(Clone, Debug)]
pub struct Probe {
    pub m: usize,
    pub angle: f64,
    offsets: Vec<(usize, usize)>,
    values: Vec<f64>,
    norm: f64,
}

impl Probe {
    pub fn new(template: &GrayImage, m: usize, angle: f64) -> Self {
        let scaled = resize_bilinear(template, m, m);
        let (rot, mask) = rotate_with_mask(&scaled, angle, 0);
        let mut offsets = Vec::new();
        let mut raw = Vec::new();
        for y in 0..m {
            for x in 0..m {
                if mask[y * m + x] {
                    offsets.push((x, y));
                    raw.push(rot.get(x, y) as f64);
                }
            }
        }
        let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
        let values: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            m,
            angle,
            offsets,
            values,
            norm,
        }
    }

    pub fn support(&self) -> usize {
        self.offsets.len()
    }

    /// NCC against the patch whose footprint starts at `(x0, y0)`.
    pub fn score_at(&self, image: &GrayImage, x0: usize, y0: usize) -> f64 {
        if self.norm <= 0.0 || self.offsets.is_empty() {
            return 0.0;
        }
        let w = image.width();
        let data = image.data();
        let (mut sp, mut spp, mut spv) = (0.0, 0.0, 0.0);
        for (&(dx, dy), &v) in self.offsets.iter().zip(&self.values) {
            let p = data[(y0 + dy) * w + x0 + dx] as f64;
            sp += p;
            spp += p * p;
            spv += p * v;
        }
        let var = spp - sp * sp / self.offsets.len() as f64;
        if var <= 1e-9 {
            0.0
        } else {
            spv / (var.sqrt() * self.norm)
        }
    }
}

/// Hypothesis angles `0, step, 2·step, …, 360 − step`.
pub fn angle_grid(step: f64) -> Result<Vec<f64>> {
    let count = (360.0 / step).round();
    if !(step > 0.0 && step <= 360.0) || (count * step - 360.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "angle step must divide 360, got {step}"
        )));
    }
    let count = count as usize;
    Ok((0..count).map(|i| i as f64 * step).collect())
}

#[derive(Clone, Copy)]
struct Scored {
    score: f64,
    key: (usize, usize, usize, usize),
    angle: f64,
}

fn better(a: Scored, b: Scored) -> Scored {
    if a.score > b.score || (a.score == b.score && a.key <= b.key) {
        a
    } else {
        b
    }
}

/// Best rotated-NCC match among the kept candidates of `screened`.
pub fn match_candidates(
    image: &GrayImage,
    template: &GrayImage,
    screened: &ScreeningResult,
    angle_step: f64,
) -> Result<MatchResult> {
    let cands: Vec<Candidate> = screened.candidates().copied().collect();
    match_candidate_list(image, template, &cands, angle_step)
}

/// Best rotated-NCC match among `candidates`. Ties resolve to the smallest
/// (size, angle, row, column).
pub fn match_candidate_list(
    image: &GrayImage,
    template: &GrayImage,
    candidates: &[Candidate],
    angle_step: f64,
) -> Result<MatchResult> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let angles = angle_grid(angle_step)?;
    let mut sizes: Vec<usize> = candidates.iter().map(|c| c.m).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let probes: Vec<(usize, Vec<Probe>)> = sizes
        .par_iter()
        .map(|&m| {
            (
                m,
                angles.iter().map(|&a| Probe::new(template, m, a)).collect(),
            )
        })
        .collect();
    let best = candidates
        .par_iter()
        .filter_map(|c| {
            let set = &probes.iter().find(|(m, _)| *m == c.m)?.1;
            let o = footprint_offset(c.m);
            if c.cx < o
                || c.cy < o
                || c.cx - o + c.m > image.width()
                || c.cy - o + c.m > image.height()
            {
                return None;
            }
            let (x0, y0) = (c.cx - o, c.cy - o);
            set.iter()
                .enumerate()
                .map(|(ai, p)| Scored {
                    score: p.score_at(image, x0, y0),
                    key: (c.m, ai, c.cy, c.cx),
                    angle: p.angle,
                })
                .reduce(better)
        })
        .reduce_with(better)
        .ok_or(Error::NoCandidates)?;
    let (m, _, cy, cx) = best.key;
    Ok(MatchResult {
        cx,
        cy,
        m,
        scale: m as f64 / template.width() as f64,
        angle: best.angle,
        score: best.score,
    })
}

/// Rotated NCC over every position of every size in `sizes`.
pub fn full_search(
    image: &GrayImage,
    template: &GrayImage,
    sizes: &[usize],
    angle_step: f64,
) -> Result<MatchResult> {
    let all = ScreeningResult::exhaustive(image.width(), image.height(), sizes, 1);
    match_candidates(image, template, &all, angle_step)
}

/// Screen, then run the rotated NCC over the survivors.
pub fn two_stage(
    image: &GrayImage,
    template: &GrayImage,
    cfg: &ScreeningConfig,
    angle_step: f64,
) -> Result<(ScreeningResult, MatchResult)> {
    let screened = screen(image, template, cfg)?;
    let best = match_candidates(image, template, &screened, angle_step)?;
    Ok((screened, best))
}
