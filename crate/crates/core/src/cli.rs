//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image_io::{encode_pgm, load_pgm, GrayImage};
use crate::screening::{
    center_range, ladder, screen, Candidate, Quantizer, ScaleLevel, ScreeningConfig,
    ScreeningResult, MIN_PATCH_SIZE,
};
use crate::second_stage::{match_candidates, MatchResult};
use crate::synth_bench::{make_case, run_benchmark, synthetic_scene, BenchOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_FLAT_TEMPLATE: i32 = 3;
pub const EXIT_NO_CANDIDATES: i32 = 4;
pub const EXIT_RETRIES: i32 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "starscreen",
    version,
    about = "Rotation- and scale-tolerant template pre-screening"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Screen an image against a template and write the kept-region mask.
    Screen(ScreenCmd),
    /// Find the best rotated NCC match among screened candidates.
    Match(MatchCmd),
    /// Draw a random rotated and scaled template from an image.
    Synth(SynthCmd),
    /// Run the pruning benchmark over a directory of PGM images.
    Bench(BenchCmd),
    /// Write synthetic test scenes as PGM files.
    GenScenes(GenScenesCmd),
}

#[derive(Args, Debug, Clone)]
struct ScreenFlags {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    lambda: f64,
    #[arg(long, default_value_t = 3)]
    rings: usize,
    #[arg(long, default_value_t = 8.0)]
    q_mean: f64,
    #[arg(long, default_value_t = 8.0)]
    q_std: f64,
    #[arg(long, default_value_t = 8.0)]
    q_grad: f64,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Reject templates whose intensity std is below this.
    #[arg(long, default_value_t = 1.0)]
    min_template_std: f64,
}

impl ScreenFlags {
    fn config(&self) -> Result<ScreeningConfig> {
        let cfg = ScreeningConfig {
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            ring_count: self.rings,
            quantizer: Quantizer {
                q_mean: self.q_mean,
                q_std: self.q_std,
                q_grad: self.q_grad,
            },
            stride: self.stride,
            min_template_std: self.min_template_std,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct ScreenCmd {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    template: PathBuf,
    /// Merged kept-region mask (255 kept, 0 pruned).
    #[arg(long)]
    out_mask: Option<PathBuf>,
    /// Directory for per-size centre masks.
    #[arg(long)]
    out_scale_masks: Option<PathBuf>,
    #[arg(long)]
    out_stats: Option<PathBuf>,
    /// Leave wall time out of the stats.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    flags: ScreenFlags,
}

#[derive(Args, Debug)]
struct MatchCmd {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    template: PathBuf,
    /// Kept-region mask from an earlier screen; skips screening.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    angle_step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: ScreenFlags,
}

#[derive(Args, Debug)]
struct SynthCmd {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_template: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
    #[arg(long, default_value_t = 32)]
    side: usize,
    #[arg(long, default_value_t = 0.5)]
    scale_min: f64,
    #[arg(long, default_value_t = 2.0)]
    scale_max: f64,
    #[arg(long, default_value_t = 20.0)]
    std_threshold: f64,
}

#[derive(Args, Debug)]
struct BenchCmd {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 2)]
    cases_per_image: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    side: usize,
    #[arg(long, default_value_t = 20.0)]
    std_threshold: f64,
    /// Also run the second stage and record match time and error.
    #[arg(long = "match")]
    run_match: bool,
    #[arg(long, default_value_t = 10.0)]
    angle_step: f64,
    #[arg(long)]
    out_report: Option<PathBuf>,
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    flags: ScreenFlags,
}

#[derive(Args, Debug)]
struct GenScenesCmd {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::UnsupportedFormat(_)
        | Error::MalformedHeader(_)
        | Error::MaxvalTooLarge(_)
        | Error::Json(_) => EXIT_IO,
        Error::TemplateTooFlat { .. } => EXIT_FLAT_TEMPLATE,
        Error::NoCandidates => EXIT_NO_CANDIDATES,
        Error::RetriesExhausted(_) => EXIT_RETRIES,
        Error::InvalidImage(_) | Error::OutOfBounds(_) | Error::InvalidConfig(_) => EXIT_USAGE,
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[derive(Serialize)]
struct LevelStats {
    m: usize,
    tested: usize,
    kept: usize,
}

#[derive(Serialize)]
struct ScreenStats {
    width: usize,
    height: usize,
    template_side: usize,
    ladder: Vec<usize>,
    patches_tested: usize,
    patches_kept: usize,
    patch_pruning: f64,
    region_pruning: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    screen_time: Option<f64>,
    levels: Vec<LevelStats>,
}

fn screen_stats(res: &ScreeningResult, template_side: usize, timing: bool) -> ScreenStats {
    ScreenStats {
        width: res.width,
        height: res.height,
        template_side,
        ladder: res.ladder(),
        patches_tested: res.stats.patches_tested,
        patches_kept: res.stats.patches_kept,
        patch_pruning: res.stats.patch_pruning,
        region_pruning: res.stats.region_pruning,
        screen_time: timing.then_some(res.stats.screen_time_s),
        levels: res
            .levels
            .iter()
            .map(|l| LevelStats {
                m: l.m,
                tested: l.tested,
                kept: l.candidates.len(),
            })
            .collect(),
    }
}

fn cmd_screen(cmd: &ScreenCmd) -> Result<()> {
    let cfg = cmd.flags.config()?;
    let image = load_pgm(&cmd.image)?;
    let template = load_pgm(&cmd.template)?;
    let res = screen(&image, &template, &cfg)?;
    if let Some(p) = &cmd.out_mask {
        write_atomic(p, &encode_pgm(&res.region_mask_image()))?;
    }
    if let Some(dir) = &cmd.out_scale_masks {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, level) in res.levels.iter().enumerate() {
            let p = dir.join(format!("mask_m{}.pgm", level.m));
            write_atomic(&p, &encode_pgm(&res.level_mask_image(i)))?;
        }
    }
    let stats = screen_stats(&res, template.width(), !cmd.no_timing);
    if let Some(p) = &cmd.out_stats {
        write_json(p, &stats)?;
    }
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

/// Candidates of every ladder size whose centre pixel is set in `mask`.
fn candidates_from_mask(
    mask: &GrayImage,
    template_side: usize,
    cfg: &ScreeningConfig,
) -> ScreeningResult {
    let (w, h) = (mask.width(), mask.height());
    let levels = ladder(template_side, cfg)
        .into_iter()
        .filter(|&m| m >= MIN_PATCH_SIZE)
        .filter_map(|m| {
            let (x0, x1) = center_range(w, m)?;
            let (y0, y1) = center_range(h, m)?;
            let candidates: Vec<Candidate> = (y0..=y1)
                .step_by(cfg.stride)
                .flat_map(|cy| {
                    (x0..=x1)
                        .step_by(cfg.stride)
                        .map(move |cx| Candidate { cx, cy, m })
                })
                .filter(|c| mask.get(c.cx, c.cy) > 0)
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
    ScreeningResult::from_levels(w, h, levels, 0.0)
}

#[derive(Serialize)]
struct MatchOutput {
    #[serde(flatten)]
    result: MatchResult,
    candidates: usize,
}

fn cmd_match(cmd: &MatchCmd) -> Result<()> {
    let cfg = cmd.flags.config()?;
    let image = load_pgm(&cmd.image)?;
    let template = load_pgm(&cmd.template)?;
    let screened = match &cmd.mask {
        Some(p) => {
            let mask = load_pgm(p)?;
            if mask.width() != image.width() || mask.height() != image.height() {
                return Err(Error::InvalidImage(format!(
                    "mask is {}x{}, image is {}x{}",
                    mask.width(),
                    mask.height(),
                    image.width(),
                    image.height()
                )));
            }
            candidates_from_mask(&mask, template.width(), &cfg)
        }
        None => screen(&image, &template, &cfg)?,
    };
    let result = match_candidates(&image, &template, &screened, cmd.angle_step)?;
    let out = MatchOutput {
        result,
        candidates: screened.candidate_count(),
    };
    if let Some(p) = &cmd.out {
        write_json(p, &out)?;
    }
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}

fn cmd_synth(cmd: &SynthCmd) -> Result<()> {
    let image = load_pgm(&cmd.image)?;
    let (template, truth) = make_case(
        &image,
        cmd.seed,
        (cmd.scale_min, cmd.scale_max),
        cmd.std_threshold,
        cmd.side,
    )?;
    write_atomic(&cmd.out_template, &encode_pgm(&template))?;
    write_json(&cmd.out_truth, &truth)?;
    println!(
        "center ({:.1}, {:.1}) side {} angle {:.2} scale {:.4}",
        truth.center.0, truth.center.1, truth.side, truth.angle, truth.scale
    );
    Ok(())
}

fn cmd_bench(cmd: &BenchCmd) -> Result<()> {
    let cfg = cmd.flags.config()?;
    let opts = BenchOptions {
        cases_per_image: cmd.cases_per_image,
        seed: cmd.seed,
        template_side: cmd.side,
        scale_range: (cfg.alpha, cfg.beta),
        std_threshold: cmd.std_threshold,
        angle_step: cmd.run_match.then_some(cmd.angle_step),
    };
    let report = run_benchmark(&cmd.dataset, &cfg, &opts)?;
    for s in &report.skipped {
        eprintln!("skipped {}: {}", s.path, s.reason);
    }
    if let Some(p) = &cmd.out_report {
        let mut json = report.to_json(!cmd.no_timing)?;
        json.push('\n');
        write_atomic(p, json.as_bytes())?;
    }
    println!("{}", report.summary_line());
    Ok(())
}

fn cmd_gen_scenes(cmd: &GenScenesCmd) -> Result<()> {
    if cmd.width < MIN_PATCH_SIZE || cmd.height < MIN_PATCH_SIZE {
        return Err(Error::InvalidConfig(format!(
            "scenes must be at least {MIN_PATCH_SIZE}x{MIN_PATCH_SIZE}"
        )));
    }
    std::fs::create_dir_all(&cmd.out_dir).map_err(|e| Error::io(&cmd.out_dir, e))?;
    for i in 0..cmd.count {
        let img = synthetic_scene(cmd.width, cmd.height, cmd.seed.wrapping_add(i as u64));
        let p = cmd.out_dir.join(format!("scene_{i:03}.pgm"));
        write_atomic(&p, &encode_pgm(&img))?;
    }
    println!("wrote {} scenes to {}", cmd.count, cmd.out_dir.display());
    Ok(())
}

/// Parse `args` (including the program name), run the command and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Screen(c) => cmd_screen(c),
        Command::Match(c) => cmd_match(c),
        Command::Synth(c) => cmd_synth(c),
        Command::Bench(c) => cmd_bench(c),
        Command::GenScenes(c) => cmd_gen_scenes(c),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
