//! Evaluation suite: boundary-tolerance matching, precision/recall/F1,
//! mean tIoU, time-positive classification accuracy, and AR@AN.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::io::Prediction;
use crate::types::{boundary_match, tiou, GroundTruthInstance, Proposal, NUM_CLASSES};

/// Predictions with best tIoU strictly above this count as time-positive.
pub const TIME_POSITIVE_TIOU: f64 = 0.9;

/// Default proposal budgets for AR@AN.
pub const DEFAULT_AN_VALUES: [usize; 4] = [25, 50, 100, 150];

/// tIoU thresholds 0.5, 0.55, ..., 0.95.
pub fn default_tiou_grid() -> Vec<f64> {
    (10..=19).map(|k| k as f64 * 0.05).collect()
}

/// How predictions claim ground-truth instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStrategy {
    /// Score-descending greedy one-to-one matching (the default).
    Greedy,
    /// Maximum bipartite matching per (video, class).
    Optimal,
}

impl MatchStrategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(MatchStrategy::Greedy),
            "optimal" => Ok(MatchStrategy::Optimal),
            other => Err(Error::invariant(format!(
                "unknown match strategy '{other}' (expected greedy or optimal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn precision(&self) -> f64 {
        safe_ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> f64 {
        safe_ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Outcome of matching predictions against ground truth.
#[derive(Debug, Clone, Default)]
pub struct MatchOutcome {
    pub total: MatchCounts,
    pub per_class: Vec<MatchCounts>,
}

fn group_gts(gts: &[GroundTruthInstance]) -> BTreeMap<&str, Vec<&GroundTruthInstance>> {
    let mut map: BTreeMap<&str, Vec<&GroundTruthInstance>> = BTreeMap::new();
    for gt in gts {
        map.entry(gt.video_id.as_str()).or_default().push(gt);
    }
    for list in map.values_mut() {
        list.sort_by(|a, b| {
            a.interval
                .start()
                .partial_cmp(&b.interval.start())
                .unwrap()
                .then(a.class_id.cmp(&b.class_id))
        });
    }
    map
}

fn group_preds(preds: &[Prediction]) -> BTreeMap<&str, Vec<&Prediction>> {
    let mut map: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
    for p in preds {
        map.entry(p.video_id.as_str()).or_default().push(p);
    }
    for list in map.values_mut() {
        // score descending; ties broken by start time for determinism
        list.sort_by(|a, b| {
            b.item
                .label_score
                .partial_cmp(&a.item.label_score)
                .unwrap()
                .then(
                    a.item
                        .interval()
                        .start()
                        .partial_cmp(&b.item.interval().start())
                        .unwrap(),
                )
                .then(a.item.label.cmp(&b.item.label))
        });
    }
    map
}

/// One-to-one matching of predictions to ground truth at boundary tolerance
/// `tol`. A prediction matches a ground-truth instance of the same class in
/// the same video when both boundaries lie within `tol`; each instance is
/// claimed at most once, so duplicates count as false positives.
#[allow(clippy::needless_range_loop)] // class ids index several parallel tables
pub fn match_predictions(
    preds: &[Prediction],
    gts: &[GroundTruthInstance],
    tol: f64,
    strategy: MatchStrategy,
) -> MatchOutcome {
    let gts_by_video = group_gts(gts);
    let preds_by_video = group_preds(preds);

    let mut per_class = vec![MatchCounts::default(); NUM_CLASSES];

    let mut videos: Vec<&str> = gts_by_video
        .keys()
        .chain(preds_by_video.keys())
        .copied()
        .collect();
    videos.sort_unstable();
    videos.dedup();

    for video in videos {
        let vid_gts = gts_by_video.get(video).map(Vec::as_slice).unwrap_or(&[]);
        let vid_preds = preds_by_video.get(video).map(Vec::as_slice).unwrap_or(&[]);
        match strategy {
            MatchStrategy::Greedy => {
                let mut gt_used = vec![false; vid_gts.len()];
                for pred in vid_preds {
                    let hit = vid_gts.iter().enumerate().find(|(gi, gt)| {
                        !gt_used[*gi]
                            && gt.class_id == pred.item.label
                            && boundary_match(pred.item.interval(), &gt.interval, tol)
                    });
                    if let Some((gi, gt)) = hit {
                        gt_used[gi] = true;
                        per_class[gt.class_id].tp += 1;
                    } else {
                        per_class[pred.item.label].fp += 1;
                    }
                }
            }
            MatchStrategy::Optimal => {
                // per class maximum bipartite matching via augmenting paths
                for class_id in 0..NUM_CLASSES {
                    let p_idx: Vec<usize> = (0..vid_preds.len())
                        .filter(|&i| vid_preds[i].item.label == class_id)
                        .collect();
                    let g_idx: Vec<usize> = (0..vid_gts.len())
                        .filter(|&i| vid_gts[i].class_id == class_id)
                        .collect();
                    if p_idx.is_empty() || g_idx.is_empty() {
                        per_class[class_id].fp += p_idx.len();
                        continue;
                    }
                    let adj: Vec<Vec<usize>> = p_idx
                        .iter()
                        .map(|&pi| {
                            g_idx
                                .iter()
                                .enumerate()
                                .filter(|(_, &gi)| {
                                    boundary_match(
                                        vid_preds[pi].item.interval(),
                                        &vid_gts[gi].interval,
                                        tol,
                                    )
                                })
                                .map(|(j, _)| j)
                                .collect()
                        })
                        .collect();
                    let mut gt_owner: Vec<Option<usize>> = vec![None; g_idx.len()];
                    let mut class_tp = 0usize;
                    for p in 0..p_idx.len() {
                        let mut visited = vec![false; g_idx.len()];
                        if augment(p, &adj, &mut gt_owner, &mut visited) {
                            class_tp += 1;
                        }
                    }
                    per_class[class_id].tp += class_tp;
                    per_class[class_id].fp += p_idx.len() - class_tp;
                }
            }
        }
    }

    // false negatives: total instances minus matched instances per class
    let mut gt_count = [0usize; NUM_CLASSES];
    for gt in gts {
        gt_count[gt.class_id] += 1;
    }
    for (class_id, counts) in per_class.iter_mut().enumerate() {
        counts.fn_ = gt_count[class_id].saturating_sub(counts.tp);
    }

    let mut total = MatchCounts::default();
    for c in &per_class {
        total.tp += c.tp;
        total.fp += c.fp;
        total.fn_ += c.fn_;
    }
    MatchOutcome { total, per_class }
}

fn augment(p: usize, adj: &[Vec<usize>], gt_owner: &mut Vec<Option<usize>>, visited: &mut Vec<bool>) -> bool {
    for &g in &adj[p] {
        if visited[g] {
            continue;
        }
        visited[g] = true;
        if gt_owner[g].is_none() || augment(gt_owner[g].unwrap(), adj, gt_owner, visited) {
            gt_owner[g] = Some(p);
            return true;
        }
    }
    false
}

/// Precision, recall and F1 under boundary-tolerance matching. All three are
/// 0 when their denominators vanish.
pub fn challenge_f1(
    preds: &[Prediction],
    gts: &[GroundTruthInstance],
    tol: f64,
    strategy: MatchStrategy,
) -> (f64, f64, f64) {
    let outcome = match_predictions(preds, gts, tol, strategy);
    (
        outcome.total.precision(),
        outcome.total.recall(),
        outcome.total.f1(),
    )
}

/// Mean best tIoU over predictions (class-agnostic assignment) and the
/// classification accuracy over time-positive predictions (best tIoU
/// strictly above 0.9).
pub fn miou_and_time_positive(preds: &[Prediction], gts: &[GroundTruthInstance]) -> (f64, f64) {
    let gts_by_video = group_gts(gts);
    let mut tiou_sum = 0.0;
    let mut n = 0usize;
    let mut tp_total = 0usize;
    let mut tp_correct = 0usize;
    for pred in preds {
        let vid_gts = gts_by_video
            .get(pred.video_id.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let mut best = 0.0;
        let mut best_class = None;
        for gt in vid_gts {
            let t = tiou(pred.item.interval(), &gt.interval);
            if t > best {
                best = t;
                best_class = Some(gt.class_id);
            }
        }
        tiou_sum += best;
        n += 1;
        if best > TIME_POSITIVE_TIOU {
            tp_total += 1;
            if best_class == Some(pred.item.label) {
                tp_correct += 1;
            }
        }
    }
    let miou = safe_ratio(tiou_sum, n as f64);
    let accuracy = safe_ratio(tp_correct as f64, tp_total as f64);
    (miou, accuracy)
}

/// Average recall at several proposal budgets. For each AN, each video keeps
/// its top-AN proposals; recall at a tIoU threshold is the fraction of
/// ground-truth instances covered under one-to-one greedy matching by score,
/// and AR averages recall over the threshold grid.
pub fn ar_at_an(
    proposals_per_video: &BTreeMap<String, Vec<Proposal>>,
    gts: &[GroundTruthInstance],
    an_values: &[usize],
    tiou_grid: &[f64],
) -> Vec<(usize, f64)> {
    let gts_by_video = group_gts(gts);
    let total_gts = gts.len();
    let mut out = Vec::new();
    for &an in an_values {
        let mut recall_sum = 0.0;
        for &t in tiou_grid {
            let mut covered = 0usize;
            for (video, props) in proposals_per_video {
                let vid_gts = gts_by_video
                    .get(video.as_str())
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                if vid_gts.is_empty() {
                    continue;
                }
                let mut sorted: Vec<&Proposal> = props.iter().collect();
                sorted.sort_by(|a, b| crate::proposal::proposal_order(a, b));
                sorted.truncate(an);
                let mut used = vec![false; vid_gts.len()];
                for prop in sorted {
                    // claim the unmatched instance with the highest tIoU >= t
                    let mut best: Option<(usize, f64)> = None;
                    for (gi, gt) in vid_gts.iter().enumerate() {
                        if used[gi] {
                            continue;
                        }
                        let tv = tiou(&prop.interval, &gt.interval);
                        if tv >= t && best.is_none_or(|(_, b)| tv > b) {
                            best = Some((gi, tv));
                        }
                    }
                    if let Some((gi, _)) = best {
                        used[gi] = true;
                        covered += 1;
                    }
                }
            }
            recall_sum += safe_ratio(covered as f64, total_gts as f64);
        }
        out.push((an, recall_sum / tiou_grid.len() as f64));
    }
    out
}

/// Per-class detection counts plus the rates derived from them.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub miou: f64,
    pub time_positive_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<MatchCounts>,
    pub ar_at_an: Vec<(usize, f64)>,
}

/// Computes the full report. `proposals_per_video` feeds AR@AN and may be
/// empty when no raw proposal lists are available.
pub fn evaluate(
    preds: &[Prediction],
    gts: &[GroundTruthInstance],
    proposals_per_video: &BTreeMap<String, Vec<Proposal>>,
    tol: f64,
    strategy: MatchStrategy,
) -> EvalReport {
    let outcome = match_predictions(preds, gts, tol, strategy);
    let (miou, tp_acc) = miou_and_time_positive(preds, gts);
    let ar = if proposals_per_video.is_empty() {
        Vec::new()
    } else {
        ar_at_an(proposals_per_video, gts, &DEFAULT_AN_VALUES, &default_tiou_grid())
    };
    EvalReport {
        miou,
        time_positive_accuracy: tp_acc,
        precision: outcome.total.precision(),
        recall: outcome.total.recall(),
        f1: outcome.total.f1(),
        per_class: outcome.per_class,
        ar_at_an: ar,
    }
}

impl EvalReport {
    /// Machine-readable form: one `key<TAB>value` row per metric.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("miou\t{:.6}\n", self.miou));
        out.push_str(&format!(
            "time_positive_accuracy\t{:.6}\n",
            self.time_positive_accuracy
        ));
        out.push_str(&format!("precision\t{:.6}\n", self.precision));
        out.push_str(&format!("recall\t{:.6}\n", self.recall));
        out.push_str(&format!("f1\t{:.6}\n", self.f1));
        for (an, ar) in &self.ar_at_an {
            out.push_str(&format!("ar_at_{an}\t{ar:.6}\n"));
        }
        for (class_id, c) in self.per_class.iter().enumerate() {
            if c.tp + c.fp + c.fn_ == 0 {
                continue;
            }
            out.push_str(&format!(
                "class_{class_id}\ttp={} fp={} fn={} precision={:.6} recall={:.6} f1={:.6}\n",
                c.tp,
                c.fp,
                c.fn_,
                c.precision(),
                c.recall(),
                c.f1()
            ));
        }
        out
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "mIoU                    {:.4}", self.miou)?;
        writeln!(f, "time-positive accuracy  {:.4}", self.time_positive_accuracy)?;
        writeln!(f, "precision               {:.4}", self.precision)?;
        writeln!(f, "recall                  {:.4}", self.recall)?;
        writeln!(f, "F1                      {:.4}", self.f1)?;
        if !self.ar_at_an.is_empty() {
            let cells: Vec<String> = self
                .ar_at_an
                .iter()
                .map(|(an, ar)| format!("@{an}={ar:.4}"))
                .collect();
            writeln!(f, "AR@AN                   {}", cells.join(" "))?;
        }
        let active: Vec<(usize, &MatchCounts)> = self
            .per_class
            .iter()
            .enumerate()
            .filter(|(_, c)| c.tp + c.fp + c.fn_ > 0)
            .collect();
        if !active.is_empty() {
            writeln!(f, "per class               tp  fp  fn    P      R      F1")?;
            for (class_id, c) in active {
                writeln!(
                    f,
                    "  class {class_id:<2}              {:>3} {:>3} {:>3}  {:.3}  {:.3}  {:.3}",
                    c.tp,
                    c.fp,
                    c.fn_,
                    c.precision(),
                    c.recall(),
                    c.f1()
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ClassifiedProposal, ScoreVector, TimeInterval};

    fn pred(video: &str, class_id: usize, start: f64, end: f64, label_score: f64) -> Prediction {
        let mut scores = [0.0; NUM_CLASSES];
        scores[class_id] = label_score;
        let rest = (1.0 - label_score) / (NUM_CLASSES - 1) as f64;
        for (c, s) in scores.iter_mut().enumerate() {
            if c != class_id {
                *s = rest;
            }
        }
        Prediction {
            video_id: video.to_string(),
            item: ClassifiedProposal::new(
                crate::types::Proposal::new(TimeInterval::new(start, end).unwrap(), 0.9).unwrap(),
                ScoreVector::new(scores).unwrap(),
                class_id,
            )
            .unwrap(),
        }
    }

    fn gt(video: &str, class_id: usize, start: f64, end: f64) -> GroundTruthInstance {
        GroundTruthInstance::new(video, class_id, TimeInterval::new(start, end).unwrap()).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![gt("v1", 3, 10.0, 25.0), gt("v1", 4, 40.0, 55.0)];
        let preds = vec![pred("v1", 3, 10.0, 25.0, 0.9), pred("v1", 4, 40.0, 55.0, 0.8)];
        let (p, r, f1) = challenge_f1(&preds, &gts, 1.0, MatchStrategy::Greedy);
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn duplicate_prediction_is_false_positive() {
        let gts = vec![gt("v1", 3, 10.0, 25.0)];
        let preds = vec![pred("v1", 3, 10.0, 25.0, 0.9), pred("v1", 3, 10.2, 25.2, 0.8)];
        let outcome = match_predictions(&preds, &gts, 1.0, MatchStrategy::Greedy);
        assert_eq!(outcome.total.tp, 1);
        assert_eq!(outcome.total.fp, 1);
        assert_eq!(outcome.total.fn_, 0);
    }

    #[test]
    fn wrong_class_is_false_positive() {
        let gts = vec![gt("v1", 3, 10.0, 25.0)];
        let preds = vec![pred("v1", 4, 10.0, 25.0, 0.9)];
        let outcome = match_predictions(&preds, &gts, 1.0, MatchStrategy::Greedy);
        assert_eq!(outcome.total.tp, 0);
        assert_eq!(outcome.total.fp, 1);
        assert_eq!(outcome.total.fn_, 1);
    }

    #[test]
    fn partial_recall_arithmetic() {
        let gts = vec![gt("v1", 3, 10.0, 25.0), gt("v1", 4, 40.0, 55.0)];
        let preds = vec![pred("v1", 3, 10.0, 25.0, 0.9)];
        let (p, r, f1) = challenge_f1(&preds, &gts, 1.0, MatchStrategy::Greedy);
        assert_eq!(p, 1.0);
        assert_eq!(r, 0.5);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_predictions_zero_convention() {
        let gts = vec![gt("v1", 3, 10.0, 25.0)];
        let (p, r, f1) = challenge_f1(&[], &gts, 1.0, MatchStrategy::Greedy);
        assert_eq!((p, r, f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn miou_exact_predictions() {
        let gts = vec![gt("v1", 3, 10.0, 25.0)];
        let preds = vec![pred("v1", 3, 10.0, 25.0, 0.9)];
        let (miou, acc) = miou_and_time_positive(&preds, &gts);
        assert_eq!(miou, 1.0);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn time_positive_is_strictly_above_point_nine() {
        // tIoU exactly 0.9: excluded from the time-positive set
        let gts = vec![gt("v1", 3, 0.0, 10.0)];
        let preds = vec![pred("v1", 3, 0.0, 9.0, 0.9)];
        let t = tiou(preds[0].item.interval(), &gts[0].interval);
        assert!((t - 0.9).abs() < 1e-12);
        let (miou, acc) = miou_and_time_positive(&preds, &gts);
        assert!((miou - 0.9).abs() < 1e-12);
        assert_eq!(acc, 0.0); // empty time-positive set
    }

    #[test]
    fn time_positive_accuracy_fraction() {
        let gts = vec![gt("v1", 3, 0.0, 100.0), gt("v1", 4, 200.0, 300.0)];
        let preds = vec![
            pred("v1", 3, 0.0, 95.0, 0.9),   // tIoU 0.95, correct class
            pred("v1", 9, 200.0, 295.0, 0.9), // tIoU 0.95, wrong class
        ];
        let (_, acc) = miou_and_time_positive(&preds, &gts);
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn ar_perfect_and_empty() {
        let gts = vec![gt("v1", 3, 10.0, 25.0), gt("v2", 4, 40.0, 55.0)];
        let mut props = BTreeMap::new();
        props.insert(
            "v1".to_string(),
            vec![Proposal::new(TimeInterval::new(10.0, 25.0).unwrap(), 0.9).unwrap()],
        );
        props.insert(
            "v2".to_string(),
            vec![Proposal::new(TimeInterval::new(40.0, 55.0).unwrap(), 0.9).unwrap()],
        );
        for (_, ar) in ar_at_an(&props, &gts, &DEFAULT_AN_VALUES, &default_tiou_grid()) {
            assert_eq!(ar, 1.0);
        }
        let empty: BTreeMap<String, Vec<Proposal>> = BTreeMap::new();
        for (_, ar) in ar_at_an(&empty, &gts, &DEFAULT_AN_VALUES, &default_tiou_grid()) {
            assert_eq!(ar, 0.0);
        }
    }

    #[test]
    fn ar_single_point_nine_overlap() {
        // one gt (0,10), one proposal (0,9): recall 1 for t <= 0.9, 0 at 0.95
        let gts = vec![gt("v1", 3, 0.0, 10.0)];
        let mut props = BTreeMap::new();
        props.insert(
            "v1".to_string(),
            vec![Proposal::new(TimeInterval::new(0.0, 9.0).unwrap(), 0.9).unwrap()],
        );
        let ar = ar_at_an(&props, &gts, &[25], &default_tiou_grid());
        assert!((ar[0].1 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ar_non_decreasing_in_an() {
        let gts = vec![
            gt("v1", 1, 0.0, 10.0),
            gt("v1", 2, 20.0, 30.0),
            gt("v1", 3, 40.0, 50.0),
        ];
        let mut props = BTreeMap::new();
        props.insert(
            "v1".to_string(),
            vec![
                Proposal::new(TimeInterval::new(0.0, 10.0).unwrap(), 0.9).unwrap(),
                Proposal::new(TimeInterval::new(20.0, 30.0).unwrap(), 0.5).unwrap(),
                Proposal::new(TimeInterval::new(40.0, 50.0).unwrap(), 0.3).unwrap(),
            ],
        );
        let ar = ar_at_an(&props, &gts, &[1, 2, 3], &default_tiou_grid());
        assert!(ar[0].1 <= ar[1].1 && ar[1].1 <= ar[2].1);
        assert_eq!(ar[2].1, 1.0);
    }

    #[test]
    fn metrics_are_translation_invariant() {
        let gts1 = vec![gt("v1", 3, 10.0, 25.0)];
        let preds1 = vec![pred("v1", 3, 10.4, 25.3, 0.9)];
        let gts2 = vec![gt("v1", 3, 110.0, 125.0)];
        let preds2 = vec![pred("v1", 3, 110.4, 125.3, 0.9)];
        assert_eq!(
            challenge_f1(&preds1, &gts1, 1.0, MatchStrategy::Greedy),
            challenge_f1(&preds2, &gts2, 1.0, MatchStrategy::Greedy)
        );
        let (m1, a1) = miou_and_time_positive(&preds1, &gts1);
        let (m2, a2) = miou_and_time_positive(&preds2, &gts2);
        assert!((m1 - m2).abs() < 1e-12);
        assert_eq!(a1, a2);
    }

    #[test]
    fn optimal_matching_recovers_crossed_assignment() {
        // greedy (by score) can pick the wrong pairing; optimal cannot
        let gts = vec![gt("v1", 3, 10.0, 25.0), gt("v1", 3, 11.5, 26.5)];
        let preds = vec![
            pred("v1", 3, 10.8, 25.8, 0.9), // matches both
            pred("v1", 3, 10.2, 25.2, 0.8), // matches only the first
        ];
        let optimal = match_predictions(&preds, &gts, 1.0, MatchStrategy::Optimal);
        assert_eq!(optimal.total.tp, 2);
    }
}
