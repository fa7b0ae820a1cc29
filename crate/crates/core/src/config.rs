//! Pipeline configuration: one struct carrying every stage's knobs, loadable
//! from a `key=value` manifest file. Precedence is CLI flags over file
//! values over built-in defaults; the file loader and the flag handlers both
//! funnel through [`PipelineConfig::set`].

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fusion::{RateWeights, ViewWeights};
use crate::metrics::MatchStrategy;
use crate::proposal::{GeneratorConfig, NmsMethod};
use crate::types::{RateTag, ViewId};

/// Every tunable of the pipeline, with defaults matching the published
/// post-processing constants (fusion weights 0.6/0.2/0.2 and 0.5/0.25/0.25,
/// 10-30s durations, 2s merge tolerance, 1s matching tolerance, soft-NMS at
/// threshold 0.1).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub generator: GeneratorConfig,
    pub view_weights: ViewWeights,
    pub rate_weights: RateWeights,
    /// Which trace drives candidate generation.
    pub proposal_view: ViewId,
    pub proposal_rate: RateTag,
    pub min_duration: f64,
    pub max_duration: f64,
    /// Same-class pairs closer than this (strictly) merge into one instance.
    pub merge_tol: f64,
    /// Boundary tolerance of evaluation and calibration, in seconds.
    pub match_tol: f64,
    /// Keep only the top instance when a same-class pair cannot merge.
    pub strict_single: bool,
    pub match_strategy: MatchStrategy,
    /// Threshold table to use; when absent the pipeline calibrates one from
    /// its own correct results against the ground truth.
    pub thresholds_path: Option<PathBuf>,
    /// Threshold assigned to classes with no correct validation result.
    pub threshold_fallback: f64,
    /// Worker threads for per-video stages; 0 = one per logical CPU.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            generator: GeneratorConfig::default(),
            view_weights: ViewWeights::default(),
            rate_weights: RateWeights::default(),
            proposal_view: ViewId::Dashboard,
            proposal_rate: RateTag::R128,
            min_duration: 10.0,
            max_duration: 30.0,
            merge_tol: 2.0,
            match_tol: 1.0,
            strict_single: false,
            match_strategy: MatchStrategy::Greedy,
            thresholds_path: None,
            threshold_fallback: 0.0,
            workers: 0,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::invariant(format!("config key '{key}': invalid number '{value}'")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::invariant(format!("config key '{key}': invalid integer '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invariant(format!(
            "config key '{key}': invalid boolean '{value}'"
        ))),
    }
}

fn parse_triple(key: &str, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::invariant(format!(
            "config key '{key}': expected three comma-separated numbers, got '{value}'"
        )));
    }
    Ok([
        parse_f64(key, parts[0])?,
        parse_f64(key, parts[1])?,
        parse_f64(key, parts[2])?,
    ])
}

impl PipelineConfig {
    /// Applies one `key=value` setting. Used by both the file loader and the
    /// CLI override flags so precedence is purely call order.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "windows" => {
                let mut lengths = Vec::new();
                for part in value.split(',') {
                    lengths.push(parse_f64(key, part.trim())?);
                }
                self.generator.window_lengths = lengths;
            }
            "stride" => self.generator.window_stride = parse_f64(key, value)?,
            "actionness_floor" => self.generator.actionness_floor = parse_f64(key, value)?,
            "nms_method" => self.generator.nms_method = NmsMethod::parse(value)?,
            "nms_threshold" => self.generator.nms_threshold = parse_f64(key, value)?,
            "nms_sigma" => self.generator.nms_sigma = parse_f64(key, value)?,
            "max_proposals" => self.generator.max_proposals = parse_usize(key, value)?,
            "view_weights" => {
                let [d, r, s] = parse_triple(key, value)?;
                self.view_weights = ViewWeights::new(d, r, s)?;
            }
            "rate_weights" => {
                let [a, b, c] = parse_triple(key, value)?;
                self.rate_weights = RateWeights::new(a, b, c)?;
            }
            "proposal_view" => self.proposal_view = ViewId::parse(value)?,
            "proposal_rate" => self.proposal_rate = RateTag::parse(value)?,
            "min_duration" => self.min_duration = parse_f64(key, value)?,
            "max_duration" => self.max_duration = parse_f64(key, value)?,
            "merge_tol" => self.merge_tol = parse_f64(key, value)?,
            "match_tol" => self.match_tol = parse_f64(key, value)?,
            "strict_single" => self.strict_single = parse_bool(key, value)?,
            "match_strategy" => self.match_strategy = MatchStrategy::parse(value)?,
            "thresholds" => self.thresholds_path = Some(PathBuf::from(value)),
            "threshold_fallback" => self.threshold_fallback = parse_f64(key, value)?,
            "workers" => self.workers = parse_usize(key, value)?,
            other => {
                return Err(Error::invariant(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Loads settings from a `key = value` file on top of the current values.
    /// Blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p = path.display().to_string();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(&p, idx + 1, format!("expected 'key = value', got '{line}'"))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(&p, idx + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if !(self.min_duration.is_finite() && self.min_duration > 0.0) {
            return Err(Error::invariant(format!(
                "min_duration must be > 0, got {}",
                self.min_duration
            )));
        }
        if self.max_duration < self.min_duration {
            return Err(Error::invariant(format!(
                "max_duration {} must be >= min_duration {}",
                self.max_duration, self.min_duration
            )));
        }
        if !(self.merge_tol.is_finite() && self.merge_tol >= 0.0) {
            return Err(Error::invariant(format!(
                "merge_tol must be >= 0, got {}",
                self.merge_tol
            )));
        }
        if !(self.match_tol.is_finite() && self.match_tol >= 0.0) {
            return Err(Error::invariant(format!(
                "match_tol must be >= 0, got {}",
                self.match_tol
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold_fallback) {
            return Err(Error::invariant(format!(
                "threshold_fallback must be in [0,1], got {}",
                self.threshold_fallback
            )));
        }
        Ok(())
    }
}
