//! Rotation- and scale-tolerant template pre-screening with octagonal-star
//! ring features computed from square and tilted summed area tables.

pub mod cli;
pub mod error;
pub mod features;
pub mod image_io;
pub mod integral;
pub mod screening;
pub mod second_stage;
pub mod synth_bench;

pub use error::{Error, Result};
pub use features::{RingFeature, RingFeatureVector, StarFeatures};
pub use image_io::GrayImage;
pub use integral::{IntegralTables, WeightKind};
pub use screening::{
    ladder, screen, Candidate, FeatureSet, PruneStats, Quantizer, ScreeningConfig, ScreeningResult,
};
pub use second_stage::{match_candidates, ncc_score, MatchResult};
pub use synth_bench::{make_case, overlap_preserved, run_benchmark, BenchReport, GroundTruth};
