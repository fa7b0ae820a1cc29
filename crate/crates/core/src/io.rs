//! On-disk text formats: score traces, ground-truth annotations, proposal
//! lists, classified predictions, calibration tables and the submission file.
//!
//! All formats are line-oriented text. Blank lines and lines starting with
//! `#` are ignored on read. Writers emit deterministic orderings so repeated
//! runs produce byte-identical files.
//!
//! Formats:
//! - score traces: a `trace <video_id> <view> <rate> [<step>]` header followed
//!   by one row per snippet: `<actionness> <s0> ... <s17>`. `step` defaults
//!   to 1.0 when absent. Several traces may share one file.
//! - ground truth: CSV rows `video_id,class_id,start,end`.
//! - proposals: `video_id start end p_score`.
//! - predictions: `video_id label start end p_score <s0> ... <s17>`.
//! - thresholds: `class_id theta_c theta_p`, one row per class.
//! - submission: `video_id activity_id start end`, times at 3 decimals,
//!   sorted by video id then start.

use std::fs;
use std::path::Path;

use crate::calibration::ClassThresholds;
use crate::error::{Error, Result};
use crate::types::{
    ClassifiedProposal, GroundTruthInstance, Proposal, RateTag, ScoreVector, TimeInterval,
    VideoKey, ViewId, BACKGROUND_CLASS, NUM_CLASSES,
};

/// Per-snippet class scores and actionness for one (video, view, rate) model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTrace {
    pub key: VideoKey,
    pub rate: RateTag,
    /// Seconds per snippet.
    pub step: f64,
    pub scores: Vec<ScoreVector>,
    /// Probability that any action is occurring, aligned with `scores`.
    pub actionness: Vec<f64>,
}

impl ScoreTrace {
    pub fn new(
        key: VideoKey,
        rate: RateTag,
        step: f64,
        scores: Vec<ScoreVector>,
        actionness: Vec<f64>,
    ) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invariant(format!("snippet step must be > 0, got {step}")));
        }
        if scores.is_empty() {
            return Err(Error::invariant("score trace must contain at least one snippet"));
        }
        if scores.len() != actionness.len() {
            return Err(Error::invariant(format!(
                "actionness length {} does not match score length {}",
                actionness.len(),
                scores.len()
            )));
        }
        for (i, &a) in actionness.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::invariant(format!(
                    "actionness at snippet {i} must be in [0,1], got {a}"
                )));
            }
        }
        Ok(ScoreTrace {
            key,
            rate,
            step,
            scores,
            actionness,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Total covered time in seconds.
    pub fn duration(&self) -> f64 {
        self.scores.len() as f64 * self.step
    }
}

/// One detected activity in the challenge submission format. Class 0 is
/// never reportable.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionRow {
    pub video_id: String,
    pub activity_id: usize,
    pub interval: TimeInterval,
}

impl SubmissionRow {
    pub fn new(video_id: impl Into<String>, activity_id: usize, interval: TimeInterval) -> Result<Self> {
        let video_id = video_id.into();
        if video_id.is_empty() {
            return Err(Error::invariant("video id must be non-empty"));
        }
        if activity_id == BACKGROUND_CLASS || activity_id >= NUM_CLASSES {
            return Err(Error::invariant(format!(
                "activity id must be in 1..={}, got {activity_id}",
                NUM_CLASSES - 1
            )));
        }
        Ok(SubmissionRow {
            video_id,
            activity_id,
            interval,
        })
    }
}

/// A classified proposal tagged with the video it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub video_id: String,
    pub item: ClassifiedProposal,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn parse_f64(path: &str, line_no: usize, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| Error::parse(path, line_no, format!("invalid {field}: '{raw}'")))
}

fn parse_usize(path: &str, line_no: usize, field: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>()
        .map_err(|_| Error::parse(path, line_no, format!("invalid {field}: '{raw}'")))
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

// ---------------------------------------------------------------------------
// score traces
// ---------------------------------------------------------------------------

pub fn read_score_traces(path: impl AsRef<Path>) -> Result<Vec<ScoreTrace>> {
    let path = path.as_ref();
    let p = path_str(path);
    let text = read_to_string(path)?;

    let mut traces = Vec::new();
    let mut header: Option<(VideoKey, RateTag, f64, usize)> = None;
    let mut scores: Vec<ScoreVector> = Vec::new();
    let mut actionness: Vec<f64> = Vec::new();

    let flush = |header: &mut Option<(VideoKey, RateTag, f64, usize)>,
                     scores: &mut Vec<ScoreVector>,
                     actionness: &mut Vec<f64>,
                     traces: &mut Vec<ScoreTrace>|
     -> Result<()> {
        if let Some((key, rate, step, line_no)) = header.take() {
            let trace = ScoreTrace::new(
                key,
                rate,
                step,
                std::mem::take(scores),
                std::mem::take(actionness),
            )
            .map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
            traces.push(trace);
        }
        Ok(())
    };

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if is_skippable(raw_line) {
            continue;
        }
        let fields: Vec<&str> = raw_line.split_whitespace().collect();
        if fields[0] == "trace" {
            flush(&mut header, &mut scores, &mut actionness, &mut traces)?;
            if fields.len() != 4 && fields.len() != 5 {
                return Err(Error::parse(
                    &p,
                    line_no,
                    "trace header must be 'trace <video_id> <view> <rate> [<step>]'",
                ));
            }
            let view = ViewId::parse(fields[2]).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
            let key = VideoKey::new(fields[1], view).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
            let rate = RateTag::parse(fields[3]).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
            let step = if fields.len() == 5 {
                parse_f64(&p, line_no, "step", fields[4])?
            } else {
                1.0
            };
            header = Some((key, rate, step, line_no));
            continue;
        }

        if header.is_none() {
            return Err(Error::parse(&p, line_no, "data row before any trace header"));
        }
        if fields.len() != 1 + NUM_CLASSES {
            return Err(Error::parse(
                &p,
                line_no,
                format!(
                    "expected {} fields (actionness + {NUM_CLASSES} class scores), got {}",
                    1 + NUM_CLASSES,
                    fields.len()
                ),
            ));
        }
        let a = parse_f64(&p, line_no, "actionness", fields[0])?;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::parse(&p, line_no, format!("actionness out of [0,1]: {a}")));
        }
        let mut row = [0.0; NUM_CLASSES];
        for (i, f) in fields[1..].iter().enumerate() {
            row[i] = parse_f64(&p, line_no, "class score", f)?;
        }
        let vector =
            ScoreVector::normalized(row).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        scores.push(vector);
        actionness.push(a);
    }
    flush(&mut header, &mut scores, &mut actionness, &mut traces)?;
    Ok(traces)
}

pub fn write_score_traces(path: impl AsRef<Path>, traces: &[ScoreTrace]) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&ScoreTrace> = traces.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.key.video_id, a.key.view, a.rate).cmp(&(&b.key.video_id, b.key.view, b.rate))
    });
    let mut out = String::new();
    for trace in sorted {
        out.push_str(&format!(
            "trace {} {} {} {}\n",
            trace.key.video_id, trace.key.view, trace.rate, trace.step
        ));
        for (vector, &a) in trace.scores.iter().zip(&trace.actionness) {
            out.push_str(&format!("{a:.6}"));
            for s in vector.as_slice() {
                out.push_str(&format!(" {s:.6}"));
            }
            out.push('\n');
        }
    }
    write_string(path, &out)
}

// ---------------------------------------------------------------------------
// ground truth
// ---------------------------------------------------------------------------

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthInstance>> {
    let path = path.as_ref();
    let p = path_str(path);
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if is_skippable(raw_line) {
            continue;
        }
        let fields: Vec<&str> = raw_line.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                &p,
                line_no,
                format!("expected 'video_id,class,start,end', got {} fields", fields.len()),
            ));
        }
        let class_id = parse_usize(&p, line_no, "class id", fields[1])?;
        let start = parse_f64(&p, line_no, "start", fields[2])?;
        let end = parse_f64(&p, line_no, "end", fields[3])?;
        let interval =
            TimeInterval::new(start, end).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        let instance = GroundTruthInstance::new(fields[0], class_id, interval)
            .map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        out.push(instance);
    }
    Ok(out)
}

pub fn write_ground_truth(path: impl AsRef<Path>, gts: &[GroundTruthInstance]) -> Result<()> {
    let mut sorted: Vec<&GroundTruthInstance> = gts.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.video_id, a.interval.start(), a.class_id)
            .partial_cmp(&(&b.video_id, b.interval.start(), b.class_id))
            .unwrap()
    });
    let mut out = String::new();
    for gt in sorted {
        out.push_str(&format!(
            "{},{},{:.3},{:.3}\n",
            gt.video_id,
            gt.class_id,
            gt.interval.start(),
            gt.interval.end()
        ));
    }
    write_string(path.as_ref(), &out)
}

// ---------------------------------------------------------------------------
// proposal lists
// ---------------------------------------------------------------------------

pub fn read_proposals(path: impl AsRef<Path>) -> Result<Vec<(String, Proposal)>> {
    let path = path.as_ref();
    let p = path_str(path);
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if is_skippable(raw_line) {
            continue;
        }
        let fields: Vec<&str> = raw_line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                &p,
                line_no,
                format!("expected 'video_id start end p_score', got {} fields", fields.len()),
            ));
        }
        let start = parse_f64(&p, line_no, "start", fields[1])?;
        let end = parse_f64(&p, line_no, "end", fields[2])?;
        let score = parse_f64(&p, line_no, "p_score", fields[3])?;
        let interval =
            TimeInterval::new(start, end).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        let proposal =
            Proposal::new(interval, score).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        out.push((fields[0].to_string(), proposal));
    }
    Ok(out)
}

pub fn write_proposals(path: impl AsRef<Path>, proposals: &[(String, Proposal)]) -> Result<()> {
    // Preserves caller order within a video so score-descending proposal
    // lists survive the round trip; groups rows by video id.
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| proposals[a].0.cmp(&proposals[b].0).then(a.cmp(&b)));
    let mut out = String::new();
    for i in order {
        let (video_id, prop) = &proposals[i];
        out.push_str(&format!(
            "{video_id} {:.3} {:.3} {:.6}\n",
            prop.interval.start(),
            prop.interval.end(),
            prop.p_score
        ));
    }
    write_string(path.as_ref(), &out)
}

// ---------------------------------------------------------------------------
// classified predictions
// ---------------------------------------------------------------------------

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let p = path_str(path);
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if is_skippable(raw_line) {
            continue;
        }
        let fields: Vec<&str> = raw_line.split_whitespace().collect();
        if fields.len() != 5 + NUM_CLASSES {
            return Err(Error::parse(
                &p,
                line_no,
                format!(
                    "expected 'video_id label start end p_score' + {NUM_CLASSES} class scores, got {} fields",
                    fields.len()
                ),
            ));
        }
        let label = parse_usize(&p, line_no, "label", fields[1])?;
        let start = parse_f64(&p, line_no, "start", fields[2])?;
        let end = parse_f64(&p, line_no, "end", fields[3])?;
        let p_score = parse_f64(&p, line_no, "p_score", fields[4])?;
        let mut row = [0.0; NUM_CLASSES];
        for (i, f) in fields[5..].iter().enumerate() {
            row[i] = parse_f64(&p, line_no, "class score", f)?;
        }
        let c_score =
            ScoreVector::normalized(row).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        let interval =
            TimeInterval::new(start, end).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        let proposal =
            Proposal::new(interval, p_score).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        let item = ClassifiedProposal::new(proposal, c_score, label)
            .map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        out.push(Prediction {
            video_id: fields[0].to_string(),
            item,
        });
    }
    Ok(out)
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction]) -> Result<()> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].video_id.cmp(&preds[b].video_id).then(a.cmp(&b)));
    let mut out = String::new();
    for i in order {
        let pred = &preds[i];
        let cp = &pred.item;
        out.push_str(&format!(
            "{} {} {:.3} {:.3} {:.6}",
            pred.video_id,
            cp.label,
            cp.interval().start(),
            cp.interval().end(),
            cp.p_score()
        ));
        for s in cp.c_score.as_slice() {
            out.push_str(&format!(" {s:.6}"));
        }
        out.push('\n');
    }
    write_string(path.as_ref(), &out)
}

// ---------------------------------------------------------------------------
// threshold tables
// ---------------------------------------------------------------------------

pub fn read_thresholds(path: impl AsRef<Path>) -> Result<ClassThresholds> {
    let path = path.as_ref();
    let p = path_str(path);
    let text = read_to_string(path)?;
    let mut theta_c = [0.0; NUM_CLASSES];
    let mut theta_p = [0.0; NUM_CLASSES];
    let mut seen = [false; NUM_CLASSES];
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if is_skippable(raw_line) {
            continue;
        }
        let fields: Vec<&str> = raw_line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                &p,
                line_no,
                format!("expected 'class theta_c theta_p', got {} fields", fields.len()),
            ));
        }
        let class_id = parse_usize(&p, line_no, "class id", fields[0])?;
        if class_id >= NUM_CLASSES {
            return Err(Error::parse(&p, line_no, format!("class id out of range: {class_id}")));
        }
        if seen[class_id] {
            return Err(Error::parse(&p, line_no, format!("duplicate class id: {class_id}")));
        }
        seen[class_id] = true;
        theta_c[class_id] = parse_f64(&p, line_no, "theta_c", fields[1])?;
        theta_p[class_id] = parse_f64(&p, line_no, "theta_p", fields[2])?;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::parse(&p, 0, format!("missing row for class {missing}")));
    }
    ClassThresholds::new(theta_c, theta_p).map_err(|e| Error::parse(&p, 0, e.to_string()))
}

pub fn write_thresholds(path: impl AsRef<Path>, thresholds: &ClassThresholds) -> Result<()> {
    let mut out = String::new();
    for c in 0..NUM_CLASSES {
        // shortest exact round-trip formatting: thresholds are compared
        // against scores with >=, so rounding up here would break gates
        out.push_str(&format!(
            "{c} {} {}\n",
            thresholds.theta_c(c),
            thresholds.theta_p(c)
        ));
    }
    write_string(path.as_ref(), &out)
}

// ---------------------------------------------------------------------------
// submission
// ---------------------------------------------------------------------------

pub fn write_submission(path: impl AsRef<Path>, rows: &[SubmissionRow]) -> Result<()> {
    let mut sorted: Vec<&SubmissionRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then(a.interval.start().partial_cmp(&b.interval.start()).unwrap())
            .then(a.interval.end().partial_cmp(&b.interval.end()).unwrap())
            .then(a.activity_id.cmp(&b.activity_id))
    });
    let mut out = String::new();
    for row in sorted {
        out.push_str(&format!(
            "{} {} {:.3} {:.3}\n",
            row.video_id,
            row.activity_id,
            row.interval.start(),
            row.interval.end()
        ));
    }
    write_string(path.as_ref(), &out)
}

pub fn read_submission(path: impl AsRef<Path>) -> Result<Vec<SubmissionRow>> {
    let path = path.as_ref();
    let p = path_str(path);
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if is_skippable(raw_line) {
            continue;
        }
        let fields: Vec<&str> = raw_line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                &p,
                line_no,
                format!("expected 'video_id activity_id start end', got {} fields", fields.len()),
            ));
        }
        let activity_id = parse_usize(&p, line_no, "activity id", fields[1])?;
        let start = parse_f64(&p, line_no, "start", fields[2])?;
        let end = parse_f64(&p, line_no, "end", fields[3])?;
        let interval =
            TimeInterval::new(start, end).map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        let row = SubmissionRow::new(fields[0], activity_id, interval)
            .map_err(|e| Error::parse(&p, line_no, e.to_string()))?;
        out.push(row);
    }
    Ok(out)
}
