//! Candidate interval generation from a 1-D actionness sequence and
//! non-maximum suppression over temporal proposals.
//!
//! The generator slides multi-scale windows over the actionness trace and
//! scores each window by its mean actionness. NMS supports hard suppression
//! and the linear / Gaussian soft variants.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::io::ScoreTrace;
use crate::types::{tiou, Proposal, TimeInterval};

/// Rescored proposals below this floor are discarded by soft NMS.
const DISCARD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmsMethod {
    Hard,
    SoftLinear,
    SoftGaussian,
}

impl NmsMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(NmsMethod::Hard),
            "soft_linear" => Ok(NmsMethod::SoftLinear),
            "soft_gaussian" => Ok(NmsMethod::SoftGaussian),
            other => Err(Error::invariant(format!(
                "unknown nms method '{other}' (expected hard, soft_linear or soft_gaussian)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NmsMethod::Hard => "hard",
            NmsMethod::SoftLinear => "soft_linear",
            NmsMethod::SoftGaussian => "soft_gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Multi-scale window lengths in seconds.
    pub window_lengths: Vec<f64>,
    /// Seconds between consecutive window starts.
    pub window_stride: f64,
    /// Windows whose mean actionness falls below this never become candidates.
    pub actionness_floor: f64,
    pub nms_method: NmsMethod,
    /// Overlap threshold of the suppression/decay rule.
    pub nms_threshold: f64,
    /// Gaussian decay width for `SoftGaussian`.
    pub nms_sigma: f64,
    pub max_proposals: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            window_lengths: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            window_stride: 2.0,
            actionness_floor: 0.3,
            nms_method: NmsMethod::SoftGaussian,
            nms_threshold: 0.1,
            nms_sigma: 0.5,
            max_proposals: 150,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_lengths.is_empty() {
            return Err(Error::invariant("window_lengths must be non-empty"));
        }
        for &len in &self.window_lengths {
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::invariant(format!("window length must be > 0, got {len}")));
            }
        }
        if !(self.window_stride.is_finite() && self.window_stride > 0.0) {
            return Err(Error::invariant(format!(
                "window_stride must be > 0, got {}",
                self.window_stride
            )));
        }
        if !(0.0..=1.0).contains(&self.nms_threshold) {
            return Err(Error::invariant(format!(
                "nms_threshold must be in [0,1], got {}",
                self.nms_threshold
            )));
        }
        if !(self.nms_sigma.is_finite() && self.nms_sigma > 0.0) {
            return Err(Error::invariant(format!(
                "nms_sigma must be > 0, got {}",
                self.nms_sigma
            )));
        }
        if self.max_proposals == 0 {
            return Err(Error::invariant("max_proposals must be >= 1"));
        }
        Ok(())
    }
}

/// Descending score, ties broken by earlier start time, then shorter length.
pub fn proposal_order(a: &Proposal, b: &Proposal) -> Ordering {
    b.p_score
        .partial_cmp(&a.p_score)
        .unwrap_or(Ordering::Equal)
        .then(
            a.interval
                .start()
                .partial_cmp(&b.interval.start())
                .unwrap_or(Ordering::Equal),
        )
        .then(
            a.interval
                .duration()
                .partial_cmp(&b.interval.duration())
                .unwrap_or(Ordering::Equal),
        )
}

/// Time-weighted mean actionness of `trace` over `[start, end)`.
fn mean_actionness(trace: &ScoreTrace, start: f64, end: f64) -> f64 {
    let step = trace.step;
    let first = (start / step).floor().max(0.0) as usize;
    let last = ((end / step).ceil() as usize).min(trace.len());
    let mut acc = 0.0;
    for i in first..last {
        let s0 = i as f64 * step;
        let s1 = s0 + step;
        let overlap = (end.min(s1) - start.max(s0)).max(0.0);
        acc += trace.actionness[i] * overlap;
    }
    acc / (end - start)
}

/// Slides each configured window length over the trace and keeps windows
/// whose mean actionness reaches the floor. Candidates are clipped to the
/// trace span, deduplicated, and returned sorted by score descending.
pub fn generate_candidates(trace: &ScoreTrace, cfg: &GeneratorConfig) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    if trace.is_empty() {
        return Err(Error::invariant("cannot generate candidates from an empty trace"));
    }
    let duration = trace.duration();
    let mut candidates: Vec<Proposal> = Vec::new();
    for &len in &cfg.window_lengths {
        let mut k = 0usize;
        loop {
            let start = k as f64 * cfg.window_stride;
            if start >= duration {
                break;
            }
            let end = (start + len).min(duration);
            k += 1;
            if end - start <= 1e-9 {
                continue;
            }
            let score = mean_actionness(trace, start, end);
            if score >= cfg.actionness_floor {
                let interval = TimeInterval::new(start, end)?;
                candidates.push(Proposal::new(interval, score.min(1.0))?);
            }
        }
    }
    // clipping can produce duplicate intervals from different window scales
    candidates.sort_by(|a, b| {
        a.interval
            .start()
            .partial_cmp(&b.interval.start())
            .unwrap()
            .then(a.interval.end().partial_cmp(&b.interval.end()).unwrap())
    });
    candidates.dedup_by(|a, b| a.interval == b.interval);
    candidates.sort_by(proposal_order);
    Ok(candidates)
}

/// Greedy NMS with score decay. The highest-scored proposal is selected and
/// every remaining proposal's score is decayed as a function of its tIoU with
/// the selection; proposals whose score drops below 1e-4 are dropped. The
/// output is truncated to `max_proposals` and sorted by final score.
pub fn soft_nms(proposals: &[Proposal], cfg: &GeneratorConfig) -> Vec<Proposal> {
    let mut rest: Vec<Proposal> = proposals.to_vec();
    rest.sort_by(proposal_order);
    let mut selected: Vec<Proposal> = Vec::new();

    while !rest.is_empty() {
        // re-sort keeps the greedy argmax and its tie order explicit
        rest.sort_by(proposal_order);
        let top = rest.remove(0);
        rest.retain_mut(|p| {
            let t = tiou(&top.interval, &p.interval);
            let decayed = match cfg.nms_method {
                NmsMethod::Hard => {
                    if t > cfg.nms_threshold {
                        0.0
                    } else {
                        p.p_score
                    }
                }
                NmsMethod::SoftLinear => {
                    if t > cfg.nms_threshold {
                        p.p_score * (1.0 - t)
                    } else {
                        p.p_score
                    }
                }
                NmsMethod::SoftGaussian => p.p_score * (-t * t / cfg.nms_sigma).exp(),
            };
            p.p_score = decayed;
            decayed >= DISCARD_FLOOR
        });
        selected.push(top);
    }

    selected.sort_by(proposal_order);
    selected.truncate(cfg.max_proposals);
    selected
}
