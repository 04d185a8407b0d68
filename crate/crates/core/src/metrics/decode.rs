use amn_tensor::{Real, Tensor};

use crate::{Error, Result};

/// A labelled time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub label: usize,
    pub onset: f64,
    pub offset: f64,
}

impl Event {
    pub fn new(label: usize, onset: f64, offset: f64) -> Result<Self> {
        if !(onset.is_finite() && offset.is_finite()) || onset < 0.0 || offset <= onset {
            return Err(Error::InvalidEvent(format!(
                "onset {onset} / offset {offset} for class {label}"
            )));
        }
        Ok(Self {
            label,
            onset,
            offset,
        })
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Per-frame, per-class activity `[t, c]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMask {
    pub frames: usize,
    pub classes: usize,
    pub active: Vec<bool>,
}

impl FrameMask {
    pub fn get(&self, t: usize, c: usize) -> bool {
        self.active[t * self.classes + c]
    }
}

/// Optional per-class running median (edge frames replicated), then
/// `p > threshold`.
pub fn binarize<T: Real>(
    probs: &Tensor<T>,
    threshold: f64,
    median_window: usize,
) -> Result<FrameMask> {
    if median_window.is_multiple_of(2) {
        return Err(Error::config(format!(
            "median window must be odd, got {median_window}"
        )));
    }
    if probs.rank() != 2 {
        return Err(amn_tensor::TensorError::Rank {
            op: "binarize",
            expected: 2,
            shape: probs.shape().to_vec(),
        }
        .into());
    }
    let (t, c) = (probs.shape()[0], probs.shape()[1]);
    let p = probs.to_f64_vec();
    let half = median_window / 2;
    let mut active = vec![false; t * c];
    let mut window = Vec::with_capacity(median_window);
    for k in 0..c {
        for i in 0..t {
            let v = if half == 0 {
                p[i * c + k]
            } else {
                window.clear();
                for d in 0..median_window {
                    let j = (i + d).saturating_sub(half).min(t - 1);
                    window.push(p[j * c + k]);
                }
                window.sort_by(f64::total_cmp);
                window[half]
            };
            active[i * c + k] = v > threshold;
        }
    }
    Ok(FrameMask {
        frames: t,
        classes: c,
        active,
    })
}

/// Maximal runs of active frames become events spanning
/// `[first·hop, (last+1)·hop)`. Sorted by class, then onset.
pub fn decode_events(mask: &FrameMask, hop_seconds: f64) -> Vec<Event> {
    let mut events = Vec::new();
    for k in 0..mask.classes {
        let mut start = None;
        for i in 0..=mask.frames {
            let on = i < mask.frames && mask.get(i, k);
            match (on, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    events.push(Event {
                        label: k,
                        onset: s as f64 * hop_seconds,
                        offset: i as f64 * hop_seconds,
                    });
                    start = None;
                }
                _ => {}
            }
        }
    }
    events
}
