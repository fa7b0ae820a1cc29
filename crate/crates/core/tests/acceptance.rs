//! Acceptance suite: one test per release criterion, each ending in a
//! single PASS line. Quantitative checks run against independent in-test
//! oracles, never against the library's own arithmetic.

// oracle code favors explicit indices over iterator chains
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use actionloc::calibration::{calibrate, ClassThresholds};
use actionloc::config::PipelineConfig;
use actionloc::fusion::{model_vote, RateWeights, ScoreGrid, ViewWeights};
use actionloc::io::Prediction;
use actionloc::metrics::{
    ar_at_an, challenge_f1, default_tiou_grid, match_predictions, miou_and_time_positive,
    MatchStrategy,
};
use actionloc::pipeline::{
    calibrate_from, fuse, postprocess, propose, run_pipeline, PipelineInput, SynthOptions,
};
use actionloc::postprocess::{
    classification_gate, duration_filter, resolve_label, select_final,
};
use actionloc::proposal::{proposal_order, soft_nms, GeneratorConfig, NmsMethod};
use actionloc::synthetic::{generate_scenario, ScenarioParams};
use actionloc::types::{
    boundary_match, tiou, ClassifiedProposal, GroundTruthInstance, Proposal, ScoreVector,
    TimeInterval, NUM_CLASSES,
};

fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xACCE_97ED ^ salt)
}

fn interval(rng: &mut ChaCha8Rng) -> TimeInterval {
    let start = rng.gen_range(0.0..200.0);
    let len = rng.gen_range(1.0..40.0);
    TimeInterval::new(start, start + len).unwrap()
}

fn score_vector(rng: &mut ChaCha8Rng) -> ScoreVector {
    let mut raw = [0.0; NUM_CLASSES];
    for r in &mut raw {
        *r = rng.gen_range(0.01..1.0);
    }
    let sum: f64 = raw.iter().sum();
    for r in &mut raw {
        *r /= sum;
    }
    ScoreVector::new(raw).unwrap()
}

fn classified(rng: &mut ChaCha8Rng, class_id: usize, iv: TimeInterval, label_score: f64) -> ClassifiedProposal {
    let mut raw = [0.0; NUM_CLASSES];
    raw[class_id] = label_score;
    let rest = (1.0 - label_score) / (NUM_CLASSES - 1) as f64;
    for (c, r) in raw.iter_mut().enumerate() {
        if c != class_id {
            *r = rest;
        }
    }
    let p_score = rng.gen_range(0.05..1.0);
    ClassifiedProposal::new(
        Proposal::new(iv, p_score).unwrap(),
        ScoreVector::new(raw).unwrap(),
        class_id,
    )
    .unwrap()
}

// -------------------------------------------------------------------------
// criterion 1: metric oracles
// -------------------------------------------------------------------------

/// Exhaustive maximum one-to-one matching by recursion over predictions.
fn oracle_max_matching(edges: &[Vec<bool>], pred: usize, used: &mut Vec<bool>) -> usize {
    if pred == edges.len() {
        return 0;
    }
    let mut best = oracle_max_matching(edges, pred + 1, used);
    for g in 0..used.len() {
        if edges[pred][g] && !used[g] {
            used[g] = true;
            best = best.max(1 + oracle_max_matching(edges, pred + 1, used));
            used[g] = false;
        }
    }
    best
}

#[test]
fn acceptance_metric_oracles() {
    let start = std::time::Instant::now();
    let mut r = rng(1);
    for _ in 0..500 {
        let n_gts = r.gen_range(1..=6);
        let n_preds = r.gen_range(0..=6);
        let gts: Vec<GroundTruthInstance> = (0..n_gts)
            .map(|_| {
                GroundTruthInstance::new("v", r.gen_range(1..NUM_CLASSES), interval(&mut r)).unwrap()
            })
            .collect();
        let preds: Vec<Prediction> = (0..n_preds)
            .map(|_| {
                let class = r.gen_range(1..NUM_CLASSES);
                let iv = if r.gen_bool(0.5) {
                    // near-copy of a ground-truth instance
                    let gt = &gts[r.gen_range(0..gts.len())];
                    let ds = r.gen_range(-2.0..2.0f64);
                    let de = r.gen_range(-2.0..2.0f64);
                    TimeInterval::new(
                        (gt.interval.start() + ds).max(0.0),
                        (gt.interval.end() + de).max(gt.interval.start() + ds + 0.5),
                    )
                    .unwrap()
                } else {
                    interval(&mut r)
                };
                let ls = r.gen_range(0.3..0.95);
                Prediction {
                    video_id: "v".to_string(),
                    item: classified(&mut r, class, iv, ls),
                }
            })
            .collect();

        // tIoU oracle: direct formula on every pair
        for p in &preds {
            for g in &gts {
                let a = p.item.interval();
                let b = &g.interval;
                let inter = (a.end().min(b.end()) - a.start().max(b.start())).max(0.0);
                let union = (a.end() - a.start()) + (b.end() - b.start()) - inter;
                assert!((tiou(a, b) - inter / union).abs() < 1e-9);
            }
        }

        // optimal matching equals exhaustive maximum matching per class
        let tol = 1.0;
        let optimal = match_predictions(&preds, &gts, tol, MatchStrategy::Optimal);
        let mut oracle_tp = 0usize;
        for class in 1..NUM_CLASSES {
            let cls_preds: Vec<&Prediction> =
                preds.iter().filter(|p| p.item.label == class).collect();
            let cls_gts: Vec<&GroundTruthInstance> =
                gts.iter().filter(|g| g.class_id == class).collect();
            let edges: Vec<Vec<bool>> = cls_preds
                .iter()
                .map(|p| {
                    cls_gts
                        .iter()
                        .map(|g| boundary_match(p.item.interval(), &g.interval, tol))
                        .collect()
                })
                .collect();
            let mut used = vec![false; cls_gts.len()];
            oracle_tp += oracle_max_matching(&edges, 0, &mut used);
        }
        assert_eq!(optimal.total.tp, oracle_tp);
        assert_eq!(optimal.total.fp, preds.len() - oracle_tp);
        assert_eq!(optimal.total.fn_, gts.len() - oracle_tp);

        // greedy never beats optimal, and its P/R/F1 follow from its counts
        let greedy = match_predictions(&preds, &gts, tol, MatchStrategy::Greedy);
        assert!(greedy.total.tp <= optimal.total.tp);
        let (p, rec, f1) = challenge_f1(&preds, &gts, tol, MatchStrategy::Greedy);
        let tp = greedy.total.tp as f64;
        let op = if preds.is_empty() { 0.0 } else { tp / preds.len() as f64 };
        let orec = tp / gts.len() as f64;
        let of1 = if op + orec > 0.0 { 2.0 * op * orec / (op + orec) } else { 0.0 };
        assert!((p - op).abs() < 1e-9 && (rec - orec).abs() < 1e-9 && (f1 - of1).abs() < 1e-9);

        // mIoU / time-positive oracle
        let (miou, acc) = miou_and_time_positive(&preds, &gts);
        let mut o_sum = 0.0;
        let mut o_tp = 0usize;
        let mut o_correct = 0usize;
        for p in &preds {
            let mut best = 0.0;
            let mut best_class = usize::MAX;
            for g in &gts {
                let t = tiou(p.item.interval(), &g.interval);
                if t > best {
                    best = t;
                    best_class = g.class_id;
                }
            }
            o_sum += best;
            if best > 0.9 {
                o_tp += 1;
                if best_class == p.item.label {
                    o_correct += 1;
                }
            }
        }
        let o_miou = if preds.is_empty() { 0.0 } else { o_sum / preds.len() as f64 };
        let o_acc = if o_tp == 0 { 0.0 } else { o_correct as f64 / o_tp as f64 };
        assert!((miou - o_miou).abs() < 1e-9);
        assert!((acc - o_acc).abs() < 1e-9);

        // AR@AN oracle: per-AN, per-threshold greedy best-tIoU claiming
        let mut props = BTreeMap::new();
        props.insert(
            "v".to_string(),
            preds.iter().map(|p| p.item.proposal).collect::<Vec<_>>(),
        );
        let ans = [1usize, 3, 6];
        let got = ar_at_an(&props, &gts, &ans, &default_tiou_grid());
        for (i, &an) in ans.iter().enumerate() {
            let mut sorted: Vec<Proposal> = preds.iter().map(|p| p.item.proposal).collect();
            sorted.sort_by(proposal_order);
            sorted.truncate(an);
            let mut recall_sum = 0.0;
            for t in default_tiou_grid() {
                let mut used = vec![false; gts.len()];
                let mut covered = 0;
                for prop in &sorted {
                    let mut best: Option<(usize, f64)> = None;
                    for (gi, g) in gts.iter().enumerate() {
                        if used[gi] {
                            continue;
                        }
                        let tv = tiou(&prop.interval, &g.interval);
                        if tv >= t && best.is_none_or(|(_, b)| tv > b) {
                            best = Some((gi, tv));
                        }
                    }
                    if let Some((gi, _)) = best {
                        used[gi] = true;
                        covered += 1;
                    }
                }
                recall_sum += covered as f64 / gts.len() as f64;
            }
            let oracle = recall_sum / default_tiou_grid().len() as f64;
            assert!((got[i].1 - oracle).abs() < 1e-9);
        }
    }
    assert!(start.elapsed().as_secs() < 10, "metric oracles too slow");
    println!("PASS: metric oracles — tIoU, F1, mIoU, AR@AN match brute force on 500 instances");
}

// -------------------------------------------------------------------------
// criterion 2: fusion algebra
// -------------------------------------------------------------------------

#[test]
fn acceptance_fusion_algebra() {
    let mut r = rng(2);
    let vw = ViewWeights::default();
    let rw = RateWeights::default();
    for _ in 0..1000 {
        let cells: [[ScoreVector; 3]; 3] = std::array::from_fn(|_| {
            std::array::from_fn(|_| score_vector(&mut r))
        });
        let grid = ScoreGrid::new(cells);
        let fused = model_vote(&grid, &vw, &rw);

        // flat nine-term double-weighted sum
        let view_w = [0.6, 0.2, 0.2];
        let rate_w = [0.25, 0.25, 0.5]; // indexed 32, 64, 128
        let mut flat = [0.0; NUM_CLASSES];
        for v in 0..3 {
            for rt in 0..3 {
                for c in 0..NUM_CLASSES {
                    flat[c] += view_w[v] * rate_w[rt] * cells[v][rt].get(c);
                }
            }
        }
        let mut sum = 0.0;
        for c in 0..NUM_CLASSES {
            assert!((fused.get(c) - flat[c]).abs() < 1e-12);
            sum += fused.get(c);
        }
        assert!((sum - 1.0).abs() < 1e-9);

        // argmax invariance under common positive scaling + renormalization
        let scale = r.gen_range(0.1..10.0);
        let scaled_cells: [[ScoreVector; 3]; 3] = std::array::from_fn(|v| {
            std::array::from_fn(|rt| {
                let mut raw = *cells[v][rt].as_slice();
                for x in &mut raw {
                    *x *= scale;
                }
                let s: f64 = raw.iter().sum();
                for x in &mut raw {
                    *x /= s;
                }
                ScoreVector::new(raw).unwrap()
            })
        });
        let fused_scaled = model_vote(&ScoreGrid::new(scaled_cells), &vw, &rw);
        let argmax = |v: &ScoreVector| {
            (0..NUM_CLASSES)
                .max_by(|&a, &b| v.get(a).partial_cmp(&v.get(b)).unwrap())
                .unwrap()
        };
        assert_eq!(argmax(&fused), argmax(&fused_scaled));
    }
    println!("PASS: fusion algebra — nine-term equivalence, closure, argmax invariance (1000 grids)");
}

// -------------------------------------------------------------------------
// criterion 3: post-processing golden rules + idempotence
// -------------------------------------------------------------------------

#[test]
fn acceptance_postprocessing_rules() {
    let mut r = rng(3);

    // duration bounds: 9.9 out, 10.0 in, 31 out
    let mk = |len: f64| classified(&mut rng(30), 4, TimeInterval::new(0.0, len).unwrap(), 0.8);
    let kept = duration_filter(vec![mk(9.9), mk(10.0), mk(30.0), mk(31.0)], 10.0, 30.0);
    assert_eq!(kept.len(), 2);

    // class-0 fallback to the second-highest class
    let mut raw = [0.02; NUM_CLASSES];
    raw[0] = 0.4;
    raw[7] = 0.28;
    let (label, score) = resolve_label(&ScoreVector::new(raw).unwrap());
    assert_eq!(label, 7);
    assert!((score - 0.28).abs() < 1e-12);

    // inclusive theta gates
    let mut tc = [0.0; NUM_CLASSES];
    tc[0] = 1.0;
    tc[4] = 0.8;
    let mut tp = [0.0; NUM_CLASSES];
    tp[0] = 1.0;
    let th = ClassThresholds::new(tc, tp).unwrap();
    let exactly_at = classified(&mut r, 4, TimeInterval::new(0.0, 20.0).unwrap(), 0.8);
    assert_eq!(classification_gate(vec![exactly_at], &th).len(), 1);

    // strict-<2s merge with averaged endpoints
    let open = ClassThresholds::uniform(0.0).unwrap();
    let a = classified(&mut r, 5, TimeInterval::new(100.0, 120.0).unwrap(), 0.9);
    let mut b = classified(&mut r, 5, TimeInterval::new(101.0, 121.0).unwrap(), 0.9);
    b.proposal.p_score = 0.9;
    let mut a_hi = a.clone();
    a_hi.proposal.p_score = 0.95;
    let pool = classification_gate(vec![a_hi.clone(), b.clone()], &open);
    let merged = select_final(&pool, &open, 2.0, false);
    assert_eq!(merged.len(), 1);
    assert!((merged[0].interval().start() - 100.5).abs() < 1e-12);
    assert!((merged[0].interval().end() - 120.5).abs() < 1e-12);
    assert_eq!(merged[0].p_score(), 0.95);

    // offset exactly 2s: retain-both branch
    let c = classified(&mut r, 5, TimeInterval::new(102.0, 122.0).unwrap(), 0.9);
    let pool = classification_gate(vec![a_hi, c], &open);
    assert_eq!(select_final(&pool, &open, 2.0, false).len(), 2);

    // idempotence on 1000 random pools
    for _ in 0..1000 {
        let n = r.gen_range(0..12);
        let candidates: Vec<ClassifiedProposal> = (0..n)
            .map(|_| {
                let class = r.gen_range(1..NUM_CLASSES).min(6); // force collisions
                let iv = interval(&mut r);
                let ls = r.gen_range(0.2..1.0);
                classified(&mut r, class, iv, ls)
            })
            .collect();
        let mut tc = [0.0; NUM_CLASSES];
        let mut tp = [0.0; NUM_CLASSES];
        for cidx in 1..NUM_CLASSES {
            tc[cidx] = r.gen_range(0.0..0.4);
            tp[cidx] = r.gen_range(0.0..0.4);
        }
        tc[0] = 1.0;
        tp[0] = 1.0;
        let th = ClassThresholds::new(tc, tp).unwrap();
        let once = select_final(&classification_gate(candidates, &th), &th, 2.0, false);
        let twice = select_final(&classification_gate(once.clone(), &th), &th, 2.0, false);
        assert_eq!(once, twice);
    }
    println!("PASS: post-processing — golden filter/fallback/gate/merge rules, idempotent on 1000 pools");
}

// -------------------------------------------------------------------------
// criterion 4: calibration self-consistency
// -------------------------------------------------------------------------

#[test]
fn acceptance_calibration_self_consistency() {
    let mut r = rng(4);
    for _ in 0..200 {
        let n = r.gen_range(1..40);
        let pairs: Vec<(ClassifiedProposal, GroundTruthInstance)> = (0..n)
            .map(|_| {
                let class = r.gen_range(1..NUM_CLASSES);
                let iv = interval(&mut r);
                let ls = r.gen_range(0.1..1.0);
                let cp = classified(&mut r, class, iv, ls);
                let gt = GroundTruthInstance::new("v", class, iv).unwrap();
                (cp, gt)
            })
            .collect();
        let th = calibrate(&pairs, 1.0, 0.0).unwrap();
        for (cp, _) in &pairs {
            assert!(cp.label_score >= th.theta_c(cp.label));
            assert!(cp.p_score() >= th.theta_p(cp.label));
        }
    }
    println!("PASS: calibration — every correct result passes its own thresholds (200 sets)");
}

// -------------------------------------------------------------------------
// criterion 5: end-to-end clean-scenario recovery
// -------------------------------------------------------------------------

fn pipeline_f1(seed: u64, noise: f64, jitter: f64) -> (f64, f64) {
    let dir = tempfile::tempdir().unwrap();
    let input = PipelineInput::Synth(SynthOptions {
        seed,
        params: ScenarioParams {
            noise_level: noise,
            ..Default::default()
        },
        jitter,
    });
    let report = run_pipeline(&input, dir.path(), &PipelineConfig::default()).unwrap();
    (report.f1, report.miou)
}

#[test]
fn acceptance_clean_scenario_recovery() {
    let start = std::time::Instant::now();
    let (f1, miou) = pipeline_f1(42, 0.0, 0.0);
    assert_eq!(f1, 1.0, "clean scenario must be solved exactly");
    assert!(miou >= 0.95, "clean mIoU {miou}");
    let (f1_small, _) = pipeline_f1(42, 0.0, 0.5);
    assert_eq!(f1_small, 1.0, "0.5s jitter stays inside the 1s tolerance");
    let (f1_large, _) = pipeline_f1(42, 0.0, 5.0);
    assert!(f1_large < 1.0, "5s jitter must break exact recovery, got {f1_large}");
    assert!(start.elapsed().as_secs() < 30);
    println!(
        "PASS: end-to-end recovery — clean F1=1.000, mIoU={miou:.3}, jitter 0.5s F1=1.000, jitter 5s F1={f1_large:.3}"
    );
}

// -------------------------------------------------------------------------
// criterion 6: ablation trend on noisy data
// -------------------------------------------------------------------------

/// The four ablation variants: single-model labels, + model voting,
/// + calibrated threshold gates, + duplicate removal.
fn ablation_metrics(seed: u64, noise: f64) -> [(f64, f64); 4] {
    let cfg = PipelineConfig::default();
    let scenario = generate_scenario(
        seed,
        ScenarioParams {
            noise_level: noise,
            ..Default::default()
        },
    )
    .unwrap();
    let proposals = propose(&scenario.traces, &cfg).unwrap();

    // single worst-view, single-rate classification (no voting)
    let mut single_cfg = cfg.clone();
    single_cfg.view_weights = ViewWeights::new(0.0, 1.0, 0.0).unwrap();
    single_cfg.rate_weights = RateWeights::new(0.0, 0.0, 1.0).unwrap();
    let preds_single = fuse(&scenario.traces, &proposals, &single_cfg).unwrap();
    let preds_voted = fuse(&scenario.traces, &proposals, &cfg).unwrap();

    let open = ClassThresholds::uniform(0.0).unwrap();
    let calibrated = calibrate_from(&preds_voted, &scenario.gts, &cfg).unwrap();

    let flatten = |preds: &[Prediction], th: &ClassThresholds| -> Vec<Prediction> {
        // duration filter + gates, but keep every surviving candidate
        let mut by_video: BTreeMap<&str, Vec<ClassifiedProposal>> = BTreeMap::new();
        for p in preds {
            by_video.entry(p.video_id.as_str()).or_default().push(p.item.clone());
        }
        let mut out = Vec::new();
        for (video, items) in by_video {
            let sized = duration_filter(items, cfg.min_duration, cfg.max_duration);
            let pool = classification_gate(sized, th);
            for class in pool.class_ids().collect::<Vec<_>>() {
                for item in pool.class(class) {
                    if item.p_score() >= th.theta_p(class) {
                        out.push(Prediction {
                            video_id: video.to_string(),
                            item: item.clone(),
                        });
                    }
                }
            }
        }
        out
    };

    let v0 = flatten(&preds_single, &open);
    let v1 = flatten(&preds_voted, &open);
    let v2 = flatten(&preds_voted, &calibrated);
    let v3 = postprocess(&preds_voted, &calibrated, &cfg);

    [&v0, &v1, &v2, &v3].map(|preds| miou_and_time_positive(preds, &scenario.gts))
}

#[test]
fn acceptance_ablation_trend() {
    const SEEDS: u64 = 20;
    let mut means = [(0.0, 0.0); 4];
    for seed in 0..SEEDS {
        let stages = ablation_metrics(seed, 0.4);
        for (m, s) in means.iter_mut().zip(stages) {
            m.0 += s.0 / SEEDS as f64;
            m.1 += s.1 / SEEDS as f64;
        }
    }
    for w in means.windows(2) {
        assert!(
            w[1].0 >= w[0].0 - 1e-12,
            "mean mIoU must not decrease: {means:?}"
        );
        assert!(
            w[1].1 >= w[0].1 - 1e-12,
            "mean time-positive accuracy must not decrease: {means:?}"
        );
    }
    println!(
        "PASS: ablation trend — mean mIoU {:.3} -> {:.3} -> {:.3} -> {:.3}, accuracy {:.3} -> {:.3} -> {:.3} -> {:.3}",
        means[0].0, means[1].0, means[2].0, means[3].0,
        means[0].1, means[1].1, means[2].1, means[3].1
    );
}

// -------------------------------------------------------------------------
// criterion 7: soft-NMS properties
// -------------------------------------------------------------------------

#[test]
fn acceptance_soft_nms_properties() {
    let mut r = rng(7);
    let cfg = GeneratorConfig::default();
    for _ in 0..300 {
        let n = r.gen_range(1..25);
        let input: Vec<Proposal> = (0..n)
            .map(|_| Proposal::new(interval(&mut r), r.gen_range(0.05..1.0)).unwrap())
            .collect();
        let out = soft_nms(&input, &cfg);

        // the top input proposal is never rescored
        let mut sorted = input.clone();
        sorted.sort_by(proposal_order);
        let top = sorted[0];
        assert!(out.iter().any(|p| p.interval == top.interval && p.p_score == top.p_score));

        // scores are element-wise non-increasing
        for p in &out {
            let original = input
                .iter()
                .find(|q| q.interval == p.interval)
                .expect("nms invents no intervals");
            assert!(p.p_score <= original.p_score + 1e-15);
        }
    }

    // disjoint inputs are a fixed point
    let disjoint: Vec<Proposal> = (0..10)
        .map(|i| {
            Proposal::new(
                TimeInterval::new(i as f64 * 50.0 + 1.0, i as f64 * 50.0 + 20.0).unwrap(),
                0.1 + 0.08 * i as f64,
            )
            .unwrap()
        })
        .collect();
    let mut expected = disjoint.clone();
    expected.sort_by(proposal_order);
    assert_eq!(soft_nms(&disjoint, &cfg), expected);

    // hand-computed Gaussian decay: 0.8 * exp(-1/0.5) = 0.1083
    let cfg_g = GeneratorConfig {
        nms_method: NmsMethod::SoftGaussian,
        nms_sigma: 0.5,
        ..GeneratorConfig::default()
    };
    let out = soft_nms(
        &[
            Proposal::new(TimeInterval::new(0.0, 10.0).unwrap(), 0.9).unwrap(),
            Proposal::new(TimeInterval::new(0.0, 10.0).unwrap(), 0.8).unwrap(),
        ],
        &cfg_g,
    );
    assert!((out[1].p_score - 0.1083).abs() < 1e-4);
    println!("PASS: soft-NMS — top untouched, monotone decay, disjoint fixed point, 0.1083 example");
}

// -------------------------------------------------------------------------
// criterion 8: determinism
// -------------------------------------------------------------------------

#[test]
fn acceptance_determinism() {
    let run = |workers: usize, dir: &Path| {
        let cfg = PipelineConfig {
            workers,
            ..Default::default()
        };
        let input = PipelineInput::Synth(SynthOptions {
            seed: 9,
            params: ScenarioParams {
                noise_level: 0.25,
                ..Default::default()
            },
            jitter: 0.3,
        });
        run_pipeline(&input, dir, &cfg).unwrap();
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run(1, d1.path());
    run(4, d2.path());
    for file in ["submission.txt", "report.tsv", "final.txt", "proposals.txt", "predictions.txt"] {
        let a = std::fs::read(d1.path().join(file)).unwrap();
        let b = std::fs::read(d2.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between worker counts");
    }
    println!("PASS: determinism — byte-identical outputs across runs and worker counts");
}
