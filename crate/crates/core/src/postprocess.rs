//! The per-video pipeline after model voting: duration filter, background
//! fallback when class 0 wins the argmax, per-class threshold gates,
//! candidate pools, and duplicate merging down to at most two instances
//! per class.

use std::collections::BTreeMap;

use crate::calibration::ClassThresholds;
use crate::proposal::proposal_order;
use crate::types::{ClassifiedProposal, ScoreVector, TimeInterval, BACKGROUND_CLASS, NUM_CLASSES};

/// Per-class lists of classified proposals, each sorted by confidence
/// descending. Class 0 never appears.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidatePool {
    by_class: BTreeMap<usize, Vec<ClassifiedProposal>>,
}

impl CandidatePool {
    pub fn class_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_class.keys().copied()
    }

    pub fn class(&self, class_id: usize) -> &[ClassifiedProposal] {
        self.by_class.get(&class_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.by_class.is_empty()
    }

    pub fn len(&self) -> usize {
        self.by_class.values().map(Vec::len).sum()
    }
}

/// Keeps proposals whose duration lies in `[min_dur, max_dur]`, boundaries
/// inclusive.
pub fn duration_filter(
    proposals: Vec<ClassifiedProposal>,
    min_dur: f64,
    max_dur: f64,
) -> Vec<ClassifiedProposal> {
    proposals
        .into_iter()
        .filter(|p| {
            let d = p.interval().duration();
            d >= min_dur && d <= max_dur
        })
        .collect()
}

/// Resolves the reported label from a fused score vector: the argmax class,
/// falling back to the second-highest class when the argmax is the
/// background class 0. Argmax ties resolve to the lower class index.
pub fn resolve_label(c_score: &ScoreVector) -> (usize, f64) {
    let mut best = 0usize;
    for c in 1..NUM_CLASSES {
        if c_score.get(c) > c_score.get(best) {
            best = c;
        }
    }
    if best != BACKGROUND_CLASS {
        return (best, c_score.get(best));
    }
    let mut second = if best == 0 { 1 } else { 0 };
    for c in 0..NUM_CLASSES {
        if c != best && c_score.get(c) > c_score.get(second) {
            second = c;
        }
    }
    (second, c_score.get(second))
}

/// Keeps candidates whose label score reaches the classification threshold
/// of their class (inclusive) and groups them into per-class pools sorted by
/// confidence descending.
pub fn classification_gate(
    candidates: Vec<ClassifiedProposal>,
    thresholds: &ClassThresholds,
) -> CandidatePool {
    let mut pool = CandidatePool::default();
    for cand in candidates {
        if cand.label == BACKGROUND_CLASS {
            continue; // class 0 is never reportable
        }
        if cand.label_score >= thresholds.theta_c(cand.label) {
            pool.by_class.entry(cand.label).or_default().push(cand);
        }
    }
    for list in pool.by_class.values_mut() {
        list.sort_by(|a, b| proposal_order(&a.proposal, &b.proposal));
    }
    pool.by_class.retain(|_, list| !list.is_empty());
    pool
}

/// Per class: drops entries below the confidence threshold, then emits the
/// single survivor, or merges/retains the top two. Two proposals merge when
/// both their start and end differences are strictly below `merge_tol`; the
/// merged proposal averages the endpoints and inherits score and score
/// vector from the higher-scored member. With `strict_single`, only the top
/// proposal is kept instead of retaining a non-mergeable pair.
pub fn select_final(
    pool: &CandidatePool,
    thresholds: &ClassThresholds,
    merge_tol: f64,
    strict_single: bool,
) -> Vec<ClassifiedProposal> {
    let mut out: Vec<ClassifiedProposal> = Vec::new();
    for (&class_id, list) in &pool.by_class {
        let survivors: Vec<&ClassifiedProposal> = list
            .iter()
            .filter(|p| p.p_score() >= thresholds.theta_p(class_id))
            .collect();
        match survivors.len() {
            0 => {}
            1 => out.push(survivors[0].clone()),
            _ => {
                let first = survivors[0];
                let second = survivors[1];
                let ds = (first.interval().start() - second.interval().start()).abs();
                let de = (first.interval().end() - second.interval().end()).abs();
                if ds < merge_tol && de < merge_tol {
                    let start = (first.interval().start() + second.interval().start()) / 2.0;
                    let end = (first.interval().end() + second.interval().end()) / 2.0;
                    let interval = TimeInterval::new(start, end)
                        .expect("mean of two valid intervals within merge_tol is valid");
                    let mut merged = first.clone();
                    merged.proposal.interval = interval;
                    out.push(merged);
                } else if strict_single {
                    out.push(first.clone());
                } else {
                    out.push(first.clone());
                    out.push(second.clone());
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.interval()
            .start()
            .partial_cmp(&b.interval().start())
            .unwrap()
            .then(a.label.cmp(&b.label))
    });
    out
}
