//! File-driven pipeline stages. Each `run_*` function reads its inputs from
//! disk and writes its outputs to disk; `run_pipeline` chains them through
//! intermediate files in an output directory, so a pipeline run is
//! byte-identical to invoking the stage subcommands by hand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::calibration::{calibrate, ClassThresholds};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fusion::{attach_grid, model_vote};
use crate::io::{
    self, Prediction, ScoreTrace, SubmissionRow,
};
use crate::metrics::{evaluate, EvalReport};
use crate::postprocess::{classification_gate, duration_filter, resolve_label, select_final};
use crate::proposal::{generate_candidates, soft_nms};
use crate::synthetic::{generate_scenario, perturb_boundaries, ScenarioParams};
use crate::types::{boundary_match, ClassifiedProposal, GroundTruthInstance, Proposal};

/// Inputs of the `synth` stage.
#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub seed: u64,
    pub params: ScenarioParams,
    /// Shift rendered boundaries by up to this many seconds after generation.
    pub jitter: f64,
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = the global pool).
/// Stage outputs are order-preserving reductions, so results do not depend
/// on the worker count.
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invariant(format!("failed to build worker pool: {e}")))?;
        pool.install(f)
    }
}

pub fn run_synth(opts: &SynthOptions, traces_out: &Path, gt_out: &Path) -> Result<()> {
    let mut scenario = generate_scenario(opts.seed, opts.params)?;
    if opts.jitter > 0.0 {
        scenario = perturb_boundaries(&scenario, opts.jitter)?;
    }
    scenario.write_files(traces_out, gt_out)
}

fn traces_by_video(traces: &[ScoreTrace]) -> BTreeMap<&str, Vec<&ScoreTrace>> {
    let mut map: BTreeMap<&str, Vec<&ScoreTrace>> = BTreeMap::new();
    for t in traces {
        map.entry(t.key.video_id.as_str()).or_default().push(t);
    }
    map
}

/// Candidate generation + NMS per video, driven by the configured
/// (view, rate) actionness trace.
pub fn propose(traces: &[ScoreTrace], cfg: &PipelineConfig) -> Result<Vec<(String, Proposal)>> {
    let by_video = traces_by_video(traces);
    let videos: Vec<(&str, &Vec<&ScoreTrace>)> = by_video.iter().map(|(k, v)| (*k, v)).collect();
    let per_video: Vec<Result<Vec<(String, Proposal)>>> = videos
        .par_iter()
        .map(|(video_id, vid_traces)| {
            let driver = vid_traces
                .iter()
                .find(|t| t.key.view == cfg.proposal_view && t.rate == cfg.proposal_rate)
                .ok_or_else(|| Error::MissingTrace {
                    video_id: video_id.to_string(),
                    view: cfg.proposal_view.name().to_string(),
                    rate: cfg.proposal_rate.as_u32(),
                })?;
            let candidates = generate_candidates(driver, &cfg.generator)?;
            let kept = soft_nms(&candidates, &cfg.generator);
            Ok(kept
                .into_iter()
                .map(|p| (video_id.to_string(), p))
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_video {
        out.extend(r?);
    }
    Ok(out)
}

pub fn run_propose(traces_in: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let traces = io::read_score_traces(traces_in)?;
    let proposals = propose(&traces, cfg)?;
    io::write_proposals(out, &proposals)
}

/// Model voting: pools each proposal's class scores from all nine traces of
/// its video, fuses them with the view/rate weights and resolves the label.
pub fn fuse(
    traces: &[ScoreTrace],
    proposals: &[(String, Proposal)],
    cfg: &PipelineConfig,
) -> Result<Vec<Prediction>> {
    let by_video = traces_by_video(traces);
    proposals
        .par_iter()
        .map(|(video_id, prop)| {
            let vid_traces = by_video.get(video_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            let grid = attach_grid(vid_traces, video_id, &prop.interval)?;
            let fused = model_vote(&grid, &cfg.view_weights, &cfg.rate_weights);
            let (label, _) = resolve_label(&fused);
            Ok(Prediction {
                video_id: video_id.clone(),
                item: ClassifiedProposal::new(*prop, fused, label)?,
            })
        })
        .collect()
}

pub fn run_fuse(traces_in: &Path, proposals_in: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let traces = io::read_score_traces(traces_in)?;
    let proposals = io::read_proposals(proposals_in)?;
    let preds = fuse(&traces, &proposals, cfg)?;
    io::write_predictions(out, &preds)
}

/// Pairs each prediction with the ground-truth instance it localizes
/// correctly (same video, same class, boundaries within `tol`), dropping
/// everything else. These are the correct results thresholds are mined from.
pub fn correct_results(
    preds: &[Prediction],
    gts: &[GroundTruthInstance],
    tol: f64,
) -> Vec<(ClassifiedProposal, GroundTruthInstance)> {
    let mut out = Vec::new();
    for pred in preds {
        let hit = gts.iter().find(|gt| {
            gt.video_id == pred.video_id
                && gt.class_id == pred.item.label
                && boundary_match(pred.item.interval(), &gt.interval, tol)
        });
        if let Some(gt) = hit {
            out.push((pred.item.clone(), gt.clone()));
        }
    }
    out
}

pub fn calibrate_from(
    preds: &[Prediction],
    gts: &[GroundTruthInstance],
    cfg: &PipelineConfig,
) -> Result<ClassThresholds> {
    let pairs = correct_results(preds, gts, cfg.match_tol);
    calibrate(&pairs, cfg.match_tol, cfg.threshold_fallback)
}

/// Calibrates a threshold table from predictions + ground truth. With
/// `folds = Some(n)` the videos are split round-robin into n folds, each
/// fold is calibrated on its own (written to `<out>.fold<k>`), and the
/// deployment table written to `out` is their element-wise minimum.
pub fn run_calibrate(
    preds_in: &Path,
    gt_in: &Path,
    out: &Path,
    folds: Option<usize>,
    cfg: &PipelineConfig,
) -> Result<()> {
    let preds = io::read_predictions(preds_in)?;
    let gts = io::read_ground_truth(gt_in)?;
    match folds {
        None => {
            let thresholds = calibrate_from(&preds, &gts, cfg)?;
            io::write_thresholds(out, &thresholds)
        }
        Some(n) => {
            let mut videos: Vec<&str> = gts.iter().map(|g| g.video_id.as_str()).collect();
            videos.sort_unstable();
            videos.dedup();
            if n == 0 || n > videos.len() {
                return Err(Error::invariant(format!(
                    "fold count must be in 1..={} (one fold per video at most), got {n}",
                    videos.len()
                )));
            }
            let mut combined: Option<ClassThresholds> = None;
            for k in 0..n {
                let fold_videos: Vec<&str> = videos
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % n == k)
                    .map(|(_, v)| *v)
                    .collect();
                let fold_preds: Vec<Prediction> = preds
                    .iter()
                    .filter(|p| fold_videos.contains(&p.video_id.as_str()))
                    .cloned()
                    .collect();
                let fold_gts: Vec<GroundTruthInstance> = gts
                    .iter()
                    .filter(|g| fold_videos.contains(&g.video_id.as_str()))
                    .cloned()
                    .collect();
                let table = calibrate_from(&fold_preds, &fold_gts, cfg)?;
                let mut fold_path = out.as_os_str().to_owned();
                fold_path.push(format!(".fold{k}"));
                io::write_thresholds(PathBuf::from(fold_path), &table)?;
                combined = Some(match combined {
                    None => table,
                    Some(acc) => acc.min(&table),
                });
            }
            io::write_thresholds(out, &combined.expect("n >= 1 folds"))
        }
    }
}

/// Duration filter, per-class gates and duplicate merging, per video.
pub fn postprocess(
    preds: &[Prediction],
    thresholds: &ClassThresholds,
    cfg: &PipelineConfig,
) -> Vec<Prediction> {
    let mut by_video: BTreeMap<&str, Vec<ClassifiedProposal>> = BTreeMap::new();
    for p in preds {
        by_video
            .entry(p.video_id.as_str())
            .or_default()
            .push(p.item.clone());
    }
    let mut out = Vec::new();
    for (video_id, items) in by_video {
        let sized = duration_filter(items, cfg.min_duration, cfg.max_duration);
        let pool = classification_gate(sized, thresholds);
        for item in select_final(&pool, thresholds, cfg.merge_tol, cfg.strict_single) {
            out.push(Prediction {
                video_id: video_id.to_string(),
                item,
            });
        }
    }
    out
}

pub fn run_postprocess(
    preds_in: &Path,
    thresholds_in: &Path,
    out: &Path,
    submission_out: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<()> {
    let preds = io::read_predictions(preds_in)?;
    let thresholds = io::read_thresholds(thresholds_in)?;
    let finals = postprocess(&preds, &thresholds, cfg);
    io::write_predictions(out, &finals)?;
    if let Some(sub) = submission_out {
        let rows: Result<Vec<SubmissionRow>> = finals
            .iter()
            .map(|p| SubmissionRow::new(p.video_id.clone(), p.item.label, *p.item.interval()))
            .collect();
        io::write_submission(sub, &rows?)?;
    }
    Ok(())
}

pub fn run_evaluate(
    preds_in: &Path,
    gt_in: &Path,
    proposals_in: Option<&Path>,
    report_out: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    let preds = io::read_predictions(preds_in)?;
    let gts = io::read_ground_truth(gt_in)?;
    let mut proposals_per_video: BTreeMap<String, Vec<Proposal>> = BTreeMap::new();
    if let Some(path) = proposals_in {
        for (video_id, prop) in io::read_proposals(path)? {
            proposals_per_video.entry(video_id).or_default().push(prop);
        }
    }
    let report = evaluate(
        &preds,
        &gts,
        &proposals_per_video,
        cfg.match_tol,
        cfg.match_strategy,
    );
    if let Some(path) = report_out {
        std::fs::write(path, report.to_tsv()).map_err(|e| Error::io(path, e))?;
    }
    Ok(report)
}

/// Where the pipeline gets its traces and ground truth.
#[derive(Debug, Clone)]
pub enum PipelineInput {
    /// Generate a scenario into the output directory.
    Synth(SynthOptions),
    /// Use existing trace and ground-truth files.
    Files { traces: PathBuf, gt: PathBuf },
}

/// Chains synth-or-ingest, propose, fuse, calibrate-or-load, postprocess and
/// evaluate through files in `outdir`. Every stage re-reads its inputs from
/// disk, so the result is identical to running the subcommands manually.
pub fn run_pipeline(input: &PipelineInput, outdir: &Path, cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    with_pool(cfg.workers, || {
        let (traces, gt) = match input {
            PipelineInput::Synth(opts) => {
                let traces = outdir.join("traces.txt");
                let gt = outdir.join("gt.csv");
                run_synth(opts, &traces, &gt)?;
                (traces, gt)
            }
            PipelineInput::Files { traces, gt } => (traces.clone(), gt.clone()),
        };
        let proposals = outdir.join("proposals.txt");
        run_propose(&traces, &proposals, cfg)?;
        let predictions = outdir.join("predictions.txt");
        run_fuse(&traces, &proposals, &predictions, cfg)?;
        let thresholds = match &cfg.thresholds_path {
            Some(path) => path.clone(),
            None => {
                let path = outdir.join("thresholds.txt");
                run_calibrate(&predictions, &gt, &path, None, cfg)?;
                path
            }
        };
        let finals = outdir.join("final.txt");
        let submission = outdir.join("submission.txt");
        run_postprocess(&predictions, &thresholds, &finals, Some(&submission), cfg)?;
        run_evaluate(&finals, &gt, Some(&proposals), Some(&outdir.join("report.tsv")), cfg)
    })
}
