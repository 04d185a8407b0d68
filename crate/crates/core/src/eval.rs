//! Model outputs → decoded events and the three scoring families.

use std::collections::BTreeSet;

use amn_tensor::Real;

use crate::audio::HOP_SECONDS;
use crate::metrics::{
    binarize, decode_events, event_counts, segment_counts, ClassCounts, Event, EventParams,
    ScoreReport,
};
use crate::model::{FramePrediction, Model};
use crate::train::Example;
use crate::{Error, Result};

/// Decision parameters shared by tagging, segment and event scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    /// Probability threshold for clip tags and frame activity.
    pub threshold: f64,
    /// Odd median-filter length in frames; 1 disables smoothing.
    pub median_window: usize,
    pub segment_seconds: f64,
    pub event: EventParams,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            median_window: 1,
            segment_seconds: 1.0,
            event: EventParams::default(),
        }
    }
}

/// A featurized clip with its strong annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalClip {
    pub example: Example,
    pub truth: Vec<Event>,
}

impl EvalClip {
    pub fn duration(&self) -> f64 {
        self.example.features.frames_len() as f64 * HOP_SECONDS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub prediction: FramePrediction<T>,
    pub tags: BTreeSet<usize>,
    pub events: Vec<Event>,
}

/// Thresholds clip probabilities into tags and decodes frame
/// probabilities into events.
pub fn detect_from<T: Real>(
    prediction: FramePrediction<T>,
    params: &EvalParams,
) -> Result<Detection<T>> {
    let tags = prediction
        .clip_probs
        .to_f64_vec()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > params.threshold)
        .map(|(k, _)| k)
        .collect();
    let mask = binarize(&prediction.probs, params.threshold, params.median_window)?;
    let events = decode_events(&mask, HOP_SECONDS);
    Ok(Detection {
        prediction,
        tags,
        events,
    })
}

pub fn detect<T: Real>(
    model: &Model<T>,
    example: &Example,
    params: &EvalParams,
) -> Result<Detection<T>> {
    detect_from(model.predict(&example.features)?, params)
}

/// Reports for one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub tagging: ScoreReport,
    pub segment: ScoreReport,
    pub event: ScoreReport,
}

impl Scores {
    pub const FAMILIES: [&'static str; 3] = ["tagging", "segment", "event"];

    pub fn families(&self) -> [(&'static str, &ScoreReport); 3] {
        [
            ("tagging", &self.tagging),
            ("segment", &self.segment),
            ("event", &self.event),
        ]
    }

    /// Macro F1 per family, in `FAMILIES` order.
    pub fn macro_f1(&self) -> [f64; 3] {
        [
            self.tagging.macro_.f1,
            self.segment.macro_.f1,
            self.event.macro_.f1,
        ]
    }
}

fn accumulate(total: &mut [ClassCounts], add: Vec<ClassCounts>) {
    for (t, a) in total.iter_mut().zip(add) {
        *t += a;
    }
}

fn clamp_to(events: &[Event], dur: f64) -> Vec<Event> {
    events
        .iter()
        .filter(|e| e.onset < dur)
        .map(|e| Event {
            offset: e.offset.min(dur),
            ..*e
        })
        .collect()
}

/// Predicted and reference annotations of one clip.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClipPair {
    pub pred_tags: BTreeSet<usize>,
    pub pred_events: Vec<Event>,
    pub true_tags: BTreeSet<usize>,
    pub true_events: Vec<Event>,
    pub duration: f64,
}

/// Scores per-clip predictions against per-clip truth. Counts are summed
/// over clips, so events only ever match within their own clip; events
/// are clipped to the clip duration first.
pub fn score_clips(items: &[ClipPair], classes: usize, params: &EvalParams) -> Result<Scores> {
    let mut tag = vec![ClassCounts::default(); classes];
    let mut seg = vec![ClassCounts::default(); classes];
    let mut ev = vec![ClassCounts::default(); classes];
    for ClipPair {
        pred_tags,
        pred_events,
        true_tags,
        true_events,
        duration: dur,
    } in items
    {
        for k in 0..classes {
            match (pred_tags.contains(&k), true_tags.contains(&k)) {
                (true, true) => tag[k].tp += 1,
                (true, false) => tag[k].fp += 1,
                (false, true) => tag[k].fn_ += 1,
                _ => {}
            }
        }
        if let Some(&k) = pred_tags.iter().chain(true_tags).find(|&&k| k >= classes) {
            return Err(Error::UnknownLabel {
                label: k.to_string(),
            });
        }
        let p = clamp_to(pred_events, *dur);
        let t = clamp_to(true_events, *dur);
        accumulate(
            &mut seg,
            segment_counts(&p, &t, classes, *dur, params.segment_seconds)?,
        );
        accumulate(&mut ev, event_counts(&p, &t, classes, &params.event)?);
    }
    Ok(Scores {
        tagging: ScoreReport::from_counts(tag),
        segment: ScoreReport::from_counts(seg),
        event: ScoreReport::from_counts(ev),
    })
}

/// Runs the model over `clips` and scores all three families.
pub fn evaluate_model<T: Real>(
    model: &Model<T>,
    clips: &[EvalClip],
    params: &EvalParams,
) -> Result<Scores> {
    let mut items = Vec::with_capacity(clips.len());
    for c in clips {
        let d = detect(model, &c.example, params)?;
        let truth_tags = c.example.labels.iter().copied().collect();
        items.push(ClipPair {
            pred_tags: d.tags,
            pred_events: d.events,
            true_tags: truth_tags,
            true_events: c.truth.clone(),
            duration: c.duration(),
        });
    }
    score_clips(&items, model.config.classes, params)
}
