//! Per-class threshold calibration from correctly-localized validation
//! results: theta_c is the minimum classification score and theta_p the
//! minimum proposal confidence observed among correct results of a class.

use crate::error::{Error, Result};
use crate::types::{boundary_match, ClassifiedProposal, GroundTruthInstance, BACKGROUND_CLASS, NUM_CLASSES};

/// Per-class classification-score and proposal-confidence thresholds.
/// Class 0 entries are pinned to 1.0: background is never reported, so its
/// gate is unreachable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassThresholds {
    theta_c: [f64; NUM_CLASSES],
    theta_p: [f64; NUM_CLASSES],
}

impl ClassThresholds {
    pub fn new(theta_c: [f64; NUM_CLASSES], theta_p: [f64; NUM_CLASSES]) -> Result<Self> {
        for (name, table) in [("theta_c", &theta_c), ("theta_p", &theta_p)] {
            for (c, &t) in table.iter().enumerate() {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::invariant(format!(
                        "{name}[{c}] must be in [0,1], got {t}"
                    )));
                }
            }
            if table[BACKGROUND_CLASS] != 1.0 {
                return Err(Error::invariant(format!(
                    "{name}[0] must be 1.0 (class 0 is never reported)"
                )));
            }
        }
        Ok(ClassThresholds { theta_c, theta_p })
    }

    /// Thresholds that filter nothing (all gates at `fallback`, typically 0).
    pub fn uniform(fallback: f64) -> Result<Self> {
        let mut theta_c = [fallback; NUM_CLASSES];
        let mut theta_p = [fallback; NUM_CLASSES];
        theta_c[BACKGROUND_CLASS] = 1.0;
        theta_p[BACKGROUND_CLASS] = 1.0;
        ClassThresholds::new(theta_c, theta_p)
    }

    pub fn theta_c(&self, class_id: usize) -> f64 {
        self.theta_c[class_id]
    }

    pub fn theta_p(&self, class_id: usize) -> f64 {
        self.theta_p[class_id]
    }

    /// Element-wise minimum, used to combine per-fold tables into a
    /// deployment table.
    pub fn min(&self, other: &ClassThresholds) -> ClassThresholds {
        let mut theta_c = self.theta_c;
        let mut theta_p = self.theta_p;
        for c in 0..NUM_CLASSES {
            theta_c[c] = theta_c[c].min(other.theta_c[c]);
            theta_p[c] = theta_p[c].min(other.theta_p[c]);
        }
        ClassThresholds { theta_c, theta_p }
    }
}

/// Computes per-class thresholds from correct validation results. Every pair
/// must be a correct result: the predicted label equals the ground-truth
/// class and both boundaries lie within `tol` seconds of the truth. Classes
/// with no correct result fall back to `fallback` (0.0 filters nothing).
pub fn calibrate(
    validation_results: &[(ClassifiedProposal, GroundTruthInstance)],
    tol: f64,
    fallback: f64,
) -> Result<ClassThresholds> {
    if !(0.0..=1.0).contains(&fallback) {
        return Err(Error::invariant(format!(
            "threshold fallback must be in [0,1], got {fallback}"
        )));
    }
    let mut theta_c = [f64::INFINITY; NUM_CLASSES];
    let mut theta_p = [f64::INFINITY; NUM_CLASSES];
    for (pred, gt) in validation_results {
        if pred.label != gt.class_id {
            return Err(Error::invariant(format!(
                "validation pair is not a correct result: predicted class {} vs ground truth {}",
                pred.label, gt.class_id
            )));
        }
        if !boundary_match(pred.interval(), &gt.interval, tol) {
            return Err(Error::invariant(format!(
                "validation pair is not a correct result: boundaries [{}, {}] vs [{}, {}] exceed tol {tol}",
                pred.interval().start(),
                pred.interval().end(),
                gt.interval.start(),
                gt.interval.end()
            )));
        }
        let c = pred.label;
        theta_c[c] = theta_c[c].min(pred.label_score);
        theta_p[c] = theta_p[c].min(pred.p_score());
    }
    let mut tc = [0.0; NUM_CLASSES];
    let mut tp = [0.0; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        tc[c] = if theta_c[c].is_finite() { theta_c[c] } else { fallback };
        tp[c] = if theta_p[c].is_finite() { theta_p[c] } else { fallback };
    }
    tc[BACKGROUND_CLASS] = 1.0;
    tp[BACKGROUND_CLASS] = 1.0;
    ClassThresholds::new(tc, tp)
}
