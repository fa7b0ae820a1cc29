//! Model voting: weighted fusion of classification score vectors across the
//! three camera views and the three frame-sampling rates.

use crate::error::{Error, Result};
use crate::io::ScoreTrace;
use crate::types::{RateTag, ScoreVector, TimeInterval, ViewId, NUM_CLASSES};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Per-view fusion weights (dashboard, rear, right). Must sum to 1; weights
/// are validated rather than silently renormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewWeights {
    pub dashboard: f64,
    pub rear: f64,
    pub right: f64,
}

impl ViewWeights {
    pub fn new(dashboard: f64, rear: f64, right: f64) -> Result<Self> {
        validate_weights(&[dashboard, rear, right])?;
        Ok(ViewWeights {
            dashboard,
            rear,
            right,
        })
    }

    pub fn get(&self, view: ViewId) -> f64 {
        match view {
            ViewId::Dashboard => self.dashboard,
            ViewId::Rear => self.rear,
            ViewId::Right => self.right,
        }
    }
}

impl Default for ViewWeights {
    fn default() -> Self {
        ViewWeights {
            dashboard: 0.6,
            rear: 0.2,
            right: 0.2,
        }
    }
}

/// Per-rate fusion weights for the 128/64/32-frame models. Must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateWeights {
    pub r128: f64,
    pub r64: f64,
    pub r32: f64,
}

impl RateWeights {
    pub fn new(r128: f64, r64: f64, r32: f64) -> Result<Self> {
        validate_weights(&[r128, r64, r32])?;
        Ok(RateWeights { r128, r64, r32 })
    }

    pub fn get(&self, rate: RateTag) -> f64 {
        match rate {
            RateTag::R128 => self.r128,
            RateTag::R64 => self.r64,
            RateTag::R32 => self.r32,
        }
    }
}

impl Default for RateWeights {
    fn default() -> Self {
        RateWeights {
            r128: 0.5,
            r64: 0.25,
            r32: 0.25,
        }
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    for &w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::invariant(format!("fusion weight must be >= 0, got {w}")));
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::invariant(format!(
            "fusion weights must sum to 1 +/- 1e-9, got {sum}"
        )));
    }
    Ok(())
}

/// The 3x3 grid of per-model score vectors attached to one proposal,
/// indexed by (view, rate).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    cells: [[ScoreVector; 3]; 3],
}

impl ScoreGrid {
    pub fn new(cells: [[ScoreVector; 3]; 3]) -> Self {
        ScoreGrid { cells }
    }

    pub fn get(&self, view: ViewId, rate: RateTag) -> &ScoreVector {
        &self.cells[view.index()][rate.index()]
    }
}

fn weighted_sum(inputs: &[(f64, &ScoreVector)]) -> ScoreVector {
    let mut out = [0.0f64; NUM_CLASSES];
    for (w, v) in inputs {
        for (o, s) in out.iter_mut().zip(v.as_slice()) {
            *o += w * s;
        }
    }
    // convex combination of distributions; clamp fp drift only
    for o in &mut out {
        *o = o.clamp(0.0, 1.0);
    }
    ScoreVector::new(out).expect("convex combination of score vectors is a score vector")
}

/// Element-wise weighted sum of the three per-view vectors.
pub fn fuse_views(
    dashboard: &ScoreVector,
    rear: &ScoreVector,
    right: &ScoreVector,
    w: &ViewWeights,
) -> ScoreVector {
    weighted_sum(&[(w.dashboard, dashboard), (w.rear, rear), (w.right, right)])
}

/// Element-wise weighted sum of the three per-rate vectors.
pub fn fuse_rates(
    pred_128: &ScoreVector,
    pred_64: &ScoreVector,
    pred_32: &ScoreVector,
    w: &RateWeights,
) -> ScoreVector {
    weighted_sum(&[(w.r128, pred_128), (w.r64, pred_64), (w.r32, pred_32)])
}

/// Fuses the full 3x3 grid: per rate over views, then over rates. By
/// bilinearity this equals the flat nine-term double-weighted sum.
pub fn model_vote(grid: &ScoreGrid, vw: &ViewWeights, rw: &RateWeights) -> ScoreVector {
    let per_rate: Vec<ScoreVector> = RateTag::ALL
        .iter()
        .map(|&rate| {
            fuse_views(
                grid.get(ViewId::Dashboard, rate),
                grid.get(ViewId::Rear, rate),
                grid.get(ViewId::Right, rate),
                vw,
            )
        })
        .collect();
    fuse_rates(&per_rate[RateTag::R128.index()], &per_rate[RateTag::R64.index()], &per_rate[RateTag::R32.index()], rw)
}

/// Mean-pools the snippet score vectors of `trace` over `interval`,
/// weighting boundary snippets by their covered fraction. This is how a
/// per-proposal classification vector is read off a score trace.
pub fn pool_interval_scores(trace: &ScoreTrace, interval: &TimeInterval) -> Result<ScoreVector> {
    let step = trace.step;
    let start = interval.start();
    let end = interval.end();
    let first = (start / step).floor().max(0.0) as usize;
    let last = ((end / step).ceil() as usize).min(trace.len());
    let mut acc = [0.0f64; NUM_CLASSES];
    let mut weight = 0.0;
    for i in first..last {
        let s0 = i as f64 * step;
        let s1 = s0 + step;
        let overlap = (end.min(s1) - start.max(s0)).max(0.0);
        if overlap <= 0.0 {
            continue;
        }
        for (a, s) in acc.iter_mut().zip(trace.scores[i].as_slice()) {
            *a += overlap * s;
        }
        weight += overlap;
    }
    if weight <= 0.0 {
        return Err(Error::invariant(format!(
            "interval [{start}, {end}] does not overlap trace for video '{}'",
            trace.key.video_id
        )));
    }
    for a in &mut acc {
        *a /= weight;
    }
    ScoreVector::normalized(acc)
}

/// Builds the (view, rate) score grid for one proposal interval from the
/// nine traces of a video. Fails if any cell is missing.
pub fn attach_grid(traces: &[&ScoreTrace], video_id: &str, interval: &TimeInterval) -> Result<ScoreGrid> {
    let mut cells: [[Option<ScoreVector>; 3]; 3] = Default::default();
    for trace in traces {
        if trace.key.video_id != video_id {
            continue;
        }
        let v = trace.key.view.index();
        let r = trace.rate.index();
        if cells[v][r].is_some() {
            return Err(Error::invariant(format!(
                "duplicate score trace for video '{video_id}': view={}, rate={}",
                trace.key.view, trace.rate
            )));
        }
        cells[v][r] = Some(pool_interval_scores(trace, interval)?);
    }
    let mut grid = [[ScoreVector::uniform(); 3]; 3];
    for view in ViewId::ALL {
        for rate in RateTag::ALL {
            match cells[view.index()][rate.index()].take() {
                Some(v) => grid[view.index()][rate.index()] = v,
                None => {
                    return Err(Error::MissingTrace {
                        video_id: video_id.to_string(),
                        view: view.name().to_string(),
                        rate: rate.as_u32(),
                    })
                }
            }
        }
    }
    Ok(ScoreGrid::new(grid))
}
