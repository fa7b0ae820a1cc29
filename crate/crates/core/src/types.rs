//! Foundational interval, score and identifier types shared by every stage,
//! plus interval arithmetic (tIoU, boundary matching).
//!
//! All times are real-valued seconds. Class ids run 0..18 where class 0 is
//! the background / "no distraction" class and is never reported.

use crate::error::{Error, Result};

/// Number of action classes, including the background class 0.
pub const NUM_CLASSES: usize = 18;

/// Class id of the background / "no distraction" class.
pub const BACKGROUND_CLASS: usize = 0;

/// A temporal segment in seconds. Construction enforces `0 <= start < end`
/// and finiteness; zero-length intervals are rejected because they make
/// tIoU ill-defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeInterval {
    start: f64,
    end: f64,
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::invariant(format!(
                "interval endpoints must be finite, got [{start}, {end}]"
            )));
        }
        if start < 0.0 {
            return Err(Error::invariant(format!(
                "interval start must be non-negative, got {start}"
            )));
        }
        if end <= start {
            return Err(Error::invariant(format!(
                "interval end must be greater than start, got [{start}, {end}]"
            )));
        }
        Ok(TimeInterval { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Overlap length with another interval; zero when disjoint.
    pub fn intersection(&self, other: &TimeInterval) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }
}

/// Temporal intersection over union of two intervals; 0 when disjoint.
pub fn tiou(a: &TimeInterval, b: &TimeInterval) -> f64 {
    let inter = a.intersection(b);
    let union = a.duration() + b.duration() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// True iff both endpoints of `pred` lie within `tol` seconds of `gt`.
/// The comparison is inclusive: an offset of exactly `tol` matches.
pub fn boundary_match(pred: &TimeInterval, gt: &TimeInterval, tol: f64) -> bool {
    debug_assert!(tol >= 0.0);
    (pred.start - gt.start).abs() <= tol && (pred.end - gt.end).abs() <= tol
}

/// A candidate temporal segment with a proposal confidence score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub interval: TimeInterval,
    pub p_score: f64,
}

impl Proposal {
    pub fn new(interval: TimeInterval, p_score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_score) {
            return Err(Error::invariant(format!(
                "proposal confidence must be in [0,1], got {p_score}"
            )));
        }
        Ok(Proposal { interval, p_score })
    }
}

/// A normalized 18-way class score distribution. Entries sum to 1 within 1e-6.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreVector([f64; NUM_CLASSES]);

impl ScoreVector {
    /// Strict constructor: entries in [0,1], sum within 1e-6 of 1.
    pub fn new(scores: [f64; NUM_CLASSES]) -> Result<Self> {
        for (i, &s) in scores.iter().enumerate() {
            if !s.is_finite() || !(-1e-12..=1.0 + 1e-9).contains(&s) {
                return Err(Error::invariant(format!(
                    "class score {i} out of [0,1]: {s}"
                )));
            }
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invariant(format!(
                "class scores must sum to 1 +/- 1e-6, got {sum}"
            )));
        }
        Ok(ScoreVector(scores))
    }

    /// Lenient constructor used when ingesting external rows: accepts sums
    /// within 1e-3 of 1 and renormalizes exactly; rejects anything further off.
    pub fn normalized(scores: [f64; NUM_CLASSES]) -> Result<Self> {
        for (i, &s) in scores.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::invariant(format!(
                    "class score {i} must be a finite non-negative value, got {s}"
                )));
            }
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > 1e-3 {
            return Err(Error::invariant(format!(
                "class scores sum to {sum}, outside the renormalizable band 1 +/- 1e-3"
            )));
        }
        let mut out = scores;
        for s in &mut out {
            *s /= sum;
        }
        Ok(ScoreVector(out))
    }

    pub fn get(&self, class_id: usize) -> f64 {
        self.0[class_id]
    }

    pub fn as_slice(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn uniform() -> Self {
        ScoreVector([1.0 / NUM_CLASSES as f64; NUM_CLASSES])
    }

    pub fn one_hot(class_id: usize) -> Self {
        let mut v = [0.0; NUM_CLASSES];
        v[class_id] = 1.0;
        ScoreVector(v)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for ScoreVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A proposal together with its fused class-score vector and resolved label.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedProposal {
    pub proposal: Proposal,
    pub c_score: ScoreVector,
    pub label: usize,
    pub label_score: f64,
}

impl ClassifiedProposal {
    pub fn new(proposal: Proposal, c_score: ScoreVector, label: usize) -> Result<Self> {
        if label >= NUM_CLASSES {
            return Err(Error::invariant(format!("label out of range: {label}")));
        }
        Ok(ClassifiedProposal {
            proposal,
            label_score: c_score.get(label),
            c_score,
            label,
        })
    }

    pub fn interval(&self) -> &TimeInterval {
        &self.proposal.interval
    }

    pub fn p_score(&self) -> f64 {
        self.proposal.p_score
    }
}

/// One of the three synchronized camera views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViewId {
    Dashboard,
    Rear,
    Right,
}

impl ViewId {
    pub const ALL: [ViewId; 3] = [ViewId::Dashboard, ViewId::Rear, ViewId::Right];

    pub fn index(&self) -> usize {
        match self {
            ViewId::Dashboard => 0,
            ViewId::Rear => 1,
            ViewId::Right => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ViewId::Dashboard => "dashboard",
            ViewId::Rear => "rear",
            ViewId::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dashboard" => Ok(ViewId::Dashboard),
            "rear" => Ok(ViewId::Rear),
            "right" => Ok(ViewId::Right),
            other => Err(Error::invariant(format!(
                "unknown view '{other}' (expected dashboard, rear or right)"
            ))),
        }
    }
}

impl std::fmt::Display for ViewId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Frame-sampling-rate identity of a classification model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RateTag {
    R32,
    R64,
    R128,
}

impl RateTag {
    pub const ALL: [RateTag; 3] = [RateTag::R32, RateTag::R64, RateTag::R128];

    pub fn index(&self) -> usize {
        match self {
            RateTag::R32 => 0,
            RateTag::R64 => 1,
            RateTag::R128 => 2,
        }
    }

    pub fn as_u32(&self) -> u32 {
        match self {
            RateTag::R32 => 32,
            RateTag::R64 => 64,
            RateTag::R128 => 128,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "32" => Ok(RateTag::R32),
            "64" => Ok(RateTag::R64),
            "128" => Ok(RateTag::R128),
            other => Err(Error::invariant(format!(
                "unknown sampling rate '{other}' (expected 32, 64 or 128)"
            ))),
        }
    }
}

impl std::fmt::Display for RateTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u32())
    }
}

/// Identifies one view of one video.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VideoKey {
    pub video_id: String,
    pub view: ViewId,
}

impl VideoKey {
    pub fn new(video_id: impl Into<String>, view: ViewId) -> Result<Self> {
        let video_id = video_id.into();
        if video_id.is_empty() {
            return Err(Error::invariant("video id must be non-empty"));
        }
        Ok(VideoKey { video_id, view })
    }
}

/// A manually annotated action instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub video_id: String,
    pub class_id: usize,
    pub interval: TimeInterval,
}

impl GroundTruthInstance {
    pub fn new(video_id: impl Into<String>, class_id: usize, interval: TimeInterval) -> Result<Self> {
        let video_id = video_id.into();
        if video_id.is_empty() {
            return Err(Error::invariant("video id must be non-empty"));
        }
        if class_id >= NUM_CLASSES {
            return Err(Error::invariant(format!("class id out of range: {class_id}")));
        }
        Ok(GroundTruthInstance {
            video_id,
            class_id,
            interval,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(s: f64, e: f64) -> TimeInterval {
        TimeInterval::new(s, e).unwrap()
    }

    #[test]
    fn tiou_identical_is_one() {
        assert_eq!(tiou(&iv(0.0, 10.0), &iv(0.0, 10.0)), 1.0);
    }

    #[test]
    fn tiou_disjoint_is_zero() {
        assert_eq!(tiou(&iv(0.0, 10.0), &iv(20.0, 30.0)), 0.0);
    }

    #[test]
    fn tiou_partial_overlap() {
        let v = tiou(&iv(0.0, 10.0), &iv(5.0, 15.0));
        assert!((v - 5.0 / 15.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn boundary_match_examples() {
        assert!(boundary_match(&iv(10.0, 25.0), &iv(10.0, 25.0), 1.0));
        // both offsets exactly 1.0: inclusive
        assert!(boundary_match(&iv(11.0, 24.0), &iv(10.0, 25.0), 1.0));
        assert!(!boundary_match(&iv(11.5, 25.0), &iv(10.0, 25.0), 1.0));
    }

    #[test]
    fn interval_construction_rejects_bad_values() {
        assert!(TimeInterval::new(5.0, 5.0).is_err());
        assert!(TimeInterval::new(6.0, 5.0).is_err());
        assert!(TimeInterval::new(-1.0, 5.0).is_err());
        assert!(TimeInterval::new(0.0, f64::NAN).is_err());
        assert!(TimeInterval::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn proposal_score_range_checked() {
        assert!(Proposal::new(iv(0.0, 10.0), 1.1).is_err());
        assert!(Proposal::new(iv(0.0, 10.0), -0.1).is_err());
        assert!(Proposal::new(iv(0.0, 10.0), 0.5).is_ok());
    }

    #[test]
    fn score_vector_sum_checked() {
        let mut v = [1.0 / 18.0; NUM_CLASSES];
        assert!(ScoreVector::new(v).is_ok());
        v[0] += 0.1;
        assert!(ScoreVector::new(v).is_err());
        // renormalizable band
        let w = [(1.0 + 5e-4) / 18.0; NUM_CLASSES];
        let sv = ScoreVector::normalized(w).unwrap();
        assert!((sv.sum() - 1.0).abs() < 1e-9);
        let bad = [(1.0 + 5e-3) / 18.0; NUM_CLASSES];
        assert!(ScoreVector::normalized(bad).is_err());
    }

    #[test]
    fn classified_proposal_label_score_follows_vector() {
        let cp = ClassifiedProposal::new(
            Proposal::new(iv(0.0, 10.0), 0.9).unwrap(),
            ScoreVector::one_hot(5),
            5,
        )
        .unwrap();
        assert_eq!(cp.label_score, 1.0);
        assert!(ClassifiedProposal::new(
            Proposal::new(iv(0.0, 10.0), 0.9).unwrap(),
            ScoreVector::one_hot(5),
            18
        )
        .is_err());
    }
}
