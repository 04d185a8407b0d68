use super::{ClassCounts, Event, ScoreReport};
use crate::{Error, Result};

const EDGE_TOL: f64 = 1e-9;

fn segment_activity(
    events: &[Event],
    classes: usize,
    clip_dur: f64,
    seg: f64,
) -> Result<Vec<Vec<bool>>> {
    let n = (clip_dur / seg - EDGE_TOL).ceil().max(1.0) as usize;
    let mut active = vec![vec![false; classes]; n];
    for e in events {
        if e.label >= classes {
            return Err(Error::UnknownLabel {
                label: e.label.to_string(),
            });
        }
        if e.onset < 0.0 || e.offset > clip_dur + EDGE_TOL || e.offset <= e.onset {
            return Err(Error::InvalidEvent(format!(
                "({}, {}) outside clip of {clip_dur} s",
                e.onset, e.offset
            )));
        }
        for (j, row) in active.iter_mut().enumerate() {
            let a = j as f64 * seg;
            let b = ((j + 1) as f64 * seg).min(clip_dur);
            if e.offset.min(b) - e.onset.max(a) > 0.0 {
                row[e.label] = true;
            }
        }
    }
    Ok(active)
}

/// Segment-wise counts for one clip.
pub fn segment_counts(
    pred: &[Event],
    truth: &[Event],
    classes: usize,
    clip_dur: f64,
    segment_seconds: f64,
) -> Result<Vec<ClassCounts>> {
    if !(segment_seconds > 0.0 && clip_dur > 0.0) {
        return Err(Error::config(
            "segment length and clip duration must be positive",
        ));
    }
    let p = segment_activity(pred, classes, clip_dur, segment_seconds)?;
    let t = segment_activity(truth, classes, clip_dur, segment_seconds)?;
    let mut counts = vec![ClassCounts::default(); classes];
    for (ps, ts) in p.iter().zip(&t) {
        for k in 0..classes {
            match (ps[k], ts[k]) {
                (true, true) => counts[k].tp += 1,
                (true, false) => counts[k].fp += 1,
                (false, true) => counts[k].fn_ += 1,
                _ => {}
            }
        }
    }
    Ok(counts)
}

pub fn segment_score(
    pred: &[Event],
    truth: &[Event],
    classes: usize,
    clip_dur: f64,
    segment_seconds: f64,
) -> Result<ScoreReport> {
    segment_counts(pred, truth, classes, clip_dur, segment_seconds).map(ScoreReport::from_counts)
}
