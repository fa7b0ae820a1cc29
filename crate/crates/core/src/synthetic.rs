//! Deterministic scenario generator: ground-truth action schedules with
//! realistic durations and gaps, plus per-view/per-rate score traces that
//! serve as an end-to-end oracle for the whole pipeline.
//!
//! All randomness comes from one `u64` seed. Independent ChaCha8 streams are
//! derived per (purpose, video, view, rate) by folding the identifiers
//! through splitmix64, so per-video generation is order-independent and
//! reproducible across runs and worker counts.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::ScoreTrace;
use crate::types::{
    GroundTruthInstance, RateTag, ScoreVector, TimeInterval, VideoKey, ViewId, BACKGROUND_CLASS,
    NUM_CLASSES,
};

const STREAM_SCHEDULE: u64 = 1;
const STREAM_TRACE: u64 = 2;
const STREAM_PERTURB: u64 = 3;

/// Snippet length of generated traces, in seconds.
pub const SNIPPET_STEP: f64 = 1.0;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed);
    for &p in parts {
        state = splitmix64(state ^ p.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    ChaCha8Rng::seed_from_u64(state)
}

/// Generator knobs. Defaults: 4 videos of 8 actions each, noise-free traces,
/// dashboard fully reliable and the rear/right views slightly degraded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub n_videos: usize,
    pub n_actions_per_video: usize,
    /// Fraction of peak probability mass leaked to the other classes, plus
    /// the scale of multiplicative log-normal jitter. 0 = clean traces.
    pub noise_level: f64,
    /// Per-view attenuation of the action-class peak (dashboard, rear, right),
    /// each in (0, 1].
    pub view_reliability: [f64; 3],
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            n_videos: 4,
            n_actions_per_video: 8,
            noise_level: 0.0,
            view_reliability: [1.0, 0.8, 0.9],
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 {
            return Err(Error::invariant("scenario must contain at least one video"));
        }
        if self.n_actions_per_video == 0 || self.n_actions_per_video > NUM_CLASSES - 1 {
            return Err(Error::invariant(format!(
                "actions per video must be in 1..={} (each class occurs at most once), got {}",
                NUM_CLASSES - 1,
                self.n_actions_per_video
            )));
        }
        if !(self.noise_level.is_finite() && (0.0..1.0).contains(&self.noise_level)) {
            return Err(Error::invariant(format!(
                "noise level must be in [0, 1), got {}",
                self.noise_level
            )));
        }
        for (view, &r) in ViewId::ALL.iter().zip(&self.view_reliability) {
            if !(r.is_finite() && r > 0.0 && r <= 1.0) {
                return Err(Error::invariant(format!(
                    "view reliability for {view} must be in (0, 1], got {r}"
                )));
            }
        }
        Ok(())
    }

    fn reliability(&self, view: ViewId) -> f64 {
        self.view_reliability[view.index()]
    }
}

/// A fully generated test scenario: ground truth plus the nine score traces
/// of every video.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub params: ScenarioParams,
    /// The annotated truth that evaluation scores against.
    pub gts: Vec<GroundTruthInstance>,
    /// The intervals actually rendered into the traces. Equal to `gts` until
    /// boundaries are perturbed.
    pub rendered: Vec<GroundTruthInstance>,
    /// Nine traces per video, sorted by (video, view, rate).
    pub traces: Vec<ScoreTrace>,
}

pub fn video_id(index: usize) -> String {
    format!("video_{:03}", index + 1)
}

fn draw_gap(rng: &mut ChaCha8Rng) -> f64 {
    // even gaps of 8, 10 or 12 seconds: centered near the typical ~10s
    // inter-action interval while keeping action starts on the 2s grid
    (rng.gen_range(0..3u32) * 2 + 8) as f64
}

/// Builds one video's schedule: distinct classes from 1..=17 in random
/// order, starts on the even-second grid, durations in [10, 10.5) and gaps
/// around 10 seconds.
pub fn generate_schedule(seed: u64, video_index: usize, n_actions: usize) -> Result<Vec<GroundTruthInstance>> {
    let mut rng = derive_stream(seed, &[STREAM_SCHEDULE, video_index as u64]);
    let mut classes: Vec<usize> = (1..NUM_CLASSES).collect();
    classes.shuffle(&mut rng);
    classes.truncate(n_actions);

    let vid = video_id(video_index);
    let mut out = Vec::with_capacity(n_actions);
    let mut t = draw_gap(&mut rng);
    for class_id in classes {
        let duration = 10.0 + 0.5 * rng.gen::<f64>();
        let interval = TimeInterval::new(t, t + duration)?;
        out.push(GroundTruthInstance::new(vid.clone(), class_id, interval)?);
        // advance to the next even grid point past the action and a fresh gap
        let advance = duration + draw_gap(&mut rng);
        t += 2.0 * (advance / 2.0).ceil();
    }
    Ok(out)
}

fn trace_snippets(actions: &[GroundTruthInstance], tail: f64) -> usize {
    let last_end = actions.last().map(|a| a.interval.end()).unwrap_or(0.0);
    ((last_end + tail) / SNIPPET_STEP).ceil() as usize
}

/// Probability mass placed on `peak_class`, with the remainder spread
/// uniformly over the other classes.
fn peaked(peak_class: usize, peak_mass: f64) -> [f64; NUM_CLASSES] {
    let rest = (1.0 - peak_mass) / (NUM_CLASSES - 1) as f64;
    let mut w = [rest; NUM_CLASSES];
    w[peak_class] = peak_mass;
    w
}

fn build_trace(
    seed: u64,
    params: &ScenarioParams,
    video_index: usize,
    view: ViewId,
    rate: RateTag,
    actions: &[GroundTruthInstance],
    n_snippets: usize,
) -> Result<ScoreTrace> {
    let mut rng = derive_stream(
        seed,
        &[
            STREAM_TRACE,
            video_index as u64,
            view.index() as u64,
            rate.index() as u64,
        ],
    );
    let noise = params.noise_level;
    let bg = peaked(BACKGROUND_CLASS, 1.0 - noise);

    let mut scores = Vec::with_capacity(n_snippets);
    let mut actionness = Vec::with_capacity(n_snippets);
    for i in 0..n_snippets {
        let s0 = i as f64 * SNIPPET_STEP;
        let s1 = s0 + SNIPPET_STEP;
        // gaps exceed the snippet length, so at most one action overlaps
        let hit = actions.iter().find_map(|a| {
            let overlap = (a.interval.end().min(s1) - a.interval.start().max(s0)).max(0.0);
            (overlap > 0.0).then(|| (a.class_id, overlap / SNIPPET_STEP))
        });
        let mut w = match hit {
            Some((class_id, coverage)) => {
                let action = peaked(class_id, (1.0 - noise) * params.reliability(view));
                let mut mixed = [0.0; NUM_CLASSES];
                for c in 0..NUM_CLASSES {
                    mixed[c] = coverage * action[c] + (1.0 - coverage) * bg[c];
                }
                mixed
            }
            None => bg,
        };
        if noise > 0.0 {
            let mut sum = 0.0;
            for x in &mut w {
                let z: f64 = rng.sample(StandardNormal);
                *x *= (noise * z).exp();
                sum += *x;
            }
            for x in &mut w {
                *x /= sum;
            }
        }
        actionness.push(1.0 - w[BACKGROUND_CLASS]);
        scores.push(ScoreVector::new(w)?);
    }
    ScoreTrace::new(
        VideoKey::new(video_id(video_index), view)?,
        rate,
        SNIPPET_STEP,
        scores,
        actionness,
    )
}

fn render_traces(
    seed: u64,
    params: &ScenarioParams,
    per_video: &[Vec<GroundTruthInstance>],
) -> Result<Vec<ScoreTrace>> {
    let results: Vec<Result<Vec<ScoreTrace>>> = per_video
        .par_iter()
        .enumerate()
        .map(|(v, actions)| {
            let n = trace_snippets(actions, 10.0);
            let mut traces = Vec::with_capacity(9);
            for view in ViewId::ALL {
                for rate in RateTag::ALL {
                    traces.push(build_trace(seed, params, v, view, rate, actions, n)?);
                }
            }
            Ok(traces)
        })
        .collect();
    let mut traces = Vec::new();
    for r in results {
        traces.extend(r?);
    }
    Ok(traces)
}

fn group_by_video(gts: &[GroundTruthInstance], n_videos: usize) -> Vec<Vec<GroundTruthInstance>> {
    (0..n_videos)
        .map(|v| {
            let vid = video_id(v);
            gts.iter().filter(|g| g.video_id == vid).cloned().collect()
        })
        .collect()
}

/// Generates a scenario reproducible from `seed` alone.
pub fn generate_scenario(seed: u64, params: ScenarioParams) -> Result<Scenario> {
    params.validate()?;
    let mut gts = Vec::new();
    let mut per_video = Vec::with_capacity(params.n_videos);
    for v in 0..params.n_videos {
        let actions = generate_schedule(seed, v, params.n_actions_per_video)?;
        gts.extend(actions.iter().cloned());
        per_video.push(actions);
    }
    let traces = render_traces(seed, &params, &per_video)?;
    Ok(Scenario {
        seed,
        params,
        rendered: gts.clone(),
        gts,
        traces,
    })
}

/// Shifts every rendered action boundary by an independent uniform offset in
/// [-jitter, +jitter], clipped so actions stay ordered, non-overlapping and
/// inside the trace, then re-renders the traces. The ground truth is left
/// untouched, so evaluation now measures robustness to boundary error.
pub fn perturb_boundaries(scenario: &Scenario, jitter: f64) -> Result<Scenario> {
    if !(jitter.is_finite() && jitter >= 0.0) {
        return Err(Error::invariant(format!(
            "boundary jitter must be >= 0, got {jitter}"
        )));
    }
    let params = scenario.params;
    let mut per_video = group_by_video(&scenario.rendered, params.n_videos);
    for (v, actions) in per_video.iter_mut().enumerate() {
        let mut rng = derive_stream(scenario.seed, &[STREAM_PERTURB, v as u64]);
        let limit = trace_snippets(actions, 10.0) as f64 * SNIPPET_STEP;
        let mut prev_end = 0.0;
        for a in actions.iter_mut() {
            let ds = rng.gen_range(-jitter..=jitter);
            let de = rng.gen_range(-jitter..=jitter);
            let lo = prev_end + 0.5;
            let start = (a.interval.start() + ds).max(lo).min((limit - 2.0).max(lo));
            let end = (a.interval.end() + de).min(limit - 0.5).max(start + 1.0);
            a.interval = TimeInterval::new(start, end)?;
            prev_end = end;
        }
    }
    let traces = render_traces(scenario.seed, &params, &per_video)?;
    Ok(Scenario {
        seed: scenario.seed,
        params,
        gts: scenario.gts.clone(),
        rendered: per_video.into_iter().flatten().collect(),
        traces,
    })
}

impl Scenario {
    /// Writes the scenario to the standard on-disk formats.
    pub fn write_files(
        &self,
        traces_path: impl AsRef<std::path::Path>,
        gt_path: impl AsRef<std::path::Path>,
    ) -> Result<()> {
        crate::io::write_score_traces(traces_path, &self.traces)?;
        crate::io::write_ground_truth(gt_path, &self.gts)
    }
}
