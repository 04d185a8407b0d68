use super::{ClassCounts, Event, ScoreReport};
use crate::{Error, Result};

/// Tolerance added to collar comparisons so decimal inputs such as
/// 1.19 − 1.0 are not rejected by binary rounding.
const COLLAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventParams {
    pub onset_collar: f64,
    pub offset_collar: f64,
    /// Offset tolerance as a fraction of the reference duration; the larger
    /// of this and `offset_collar` applies.
    pub offset_fraction: f64,
}

impl Default for EventParams {
    fn default() -> Self {
        Self {
            onset_collar: 0.2,
            offset_collar: 0.2,
            offset_fraction: 0.2,
        }
    }
}

impl EventParams {
    pub fn matches(&self, pred: &Event, truth: &Event) -> bool {
        let off_tol = self
            .offset_collar
            .max(self.offset_fraction * truth.duration());
        pred.label == truth.label
            && (pred.onset - truth.onset).abs() <= self.onset_collar + COLLAR_TOL
            && (pred.offset - truth.offset).abs() <= off_tol + COLLAR_TOL
    }
}

/// One-to-one matching per class. Predictions are visited in onset order
/// and each takes the earliest-onset compatible reference; when that is
/// already taken, the previous owner is re-routed along an augmenting path
/// if possible, so the result is a maximum matching.
fn match_class(pred: &[Event], truth: &[Event], params: &EventParams) -> usize {
    let mut p: Vec<&Event> = pred.iter().collect();
    let mut t: Vec<&Event> = truth.iter().collect();
    p.sort_by(|a, b| {
        a.onset
            .total_cmp(&b.onset)
            .then(a.offset.total_cmp(&b.offset))
    });
    t.sort_by(|a, b| {
        a.onset
            .total_cmp(&b.onset)
            .then(a.offset.total_cmp(&b.offset))
    });
    let adj: Vec<Vec<usize>> = p
        .iter()
        .map(|pe| (0..t.len()).filter(|&j| params.matches(pe, t[j])).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; t.len()];
    fn augment(
        i: usize,
        adj: &[Vec<usize>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none() || augment(owner[j].unwrap(), adj, owner, seen) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut matched = 0;
    for i in 0..p.len() {
        let mut seen = vec![false; t.len()];
        if augment(i, &adj, &mut owner, &mut seen) {
            matched += 1;
        }
    }
    matched
}

/// Event-wise counts for one clip.
pub fn event_counts(
    pred: &[Event],
    truth: &[Event],
    classes: usize,
    params: &EventParams,
) -> Result<Vec<ClassCounts>> {
    let mut counts = vec![ClassCounts::default(); classes];
    for e in pred.iter().chain(truth) {
        if e.label >= classes {
            return Err(Error::UnknownLabel {
                label: e.label.to_string(),
            });
        }
    }
    for (k, c) in counts.iter_mut().enumerate() {
        let p: Vec<Event> = pred.iter().filter(|e| e.label == k).copied().collect();
        let t: Vec<Event> = truth.iter().filter(|e| e.label == k).copied().collect();
        let tp = match_class(&p, &t, params);
        *c = ClassCounts {
            tp: tp as u64,
            fp: (p.len() - tp) as u64,
            fn_: (t.len() - tp) as u64,
        };
    }
    Ok(counts)
}

pub fn event_score(
    pred: &[Event],
    truth: &[Event],
    classes: usize,
    params: &EventParams,
) -> Result<ScoreReport> {
    event_counts(pred, truth, classes, params).map(ScoreReport::from_counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(on: f64, off: f64) -> Event {
        Event::new(0, on, off).unwrap()
    }

    fn counts(pred: &[Event], truth: &[Event]) -> ClassCounts {
        event_counts(pred, truth, 1, &EventParams::default()).unwrap()[0]
    }

    #[test]
    fn late_offset_fails() {
        assert_eq!(
            counts(&[ev(1.15, 2.5)], &[ev(1.0, 2.0)]),
            ClassCounts {
                tp: 0,
                fp: 1,
                fn_: 1
            }
        );
    }

    #[test]
    fn exact_and_boundary_matches() {
        assert_eq!(counts(&[ev(1.0, 2.0)], &[ev(1.0, 2.0)]).tp, 1);
        assert_eq!(counts(&[ev(1.19, 2.19)], &[ev(1.0, 2.0)]).tp, 1);
    }

    #[test]
    fn long_reference_widens_offset_tolerance() {
        // 20% of 3 s is 0.6 s
        assert_eq!(counts(&[ev(0.0, 3.5)], &[ev(0.0, 3.0)]).tp, 1);
        assert_eq!(counts(&[ev(0.0, 3.7)], &[ev(0.0, 3.0)]).tp, 0);
    }

    #[test]
    fn rerouting_finds_the_larger_matching() {
        // first prediction fits both references; plain first-fit would take
        // the earlier one and strand the second prediction
        let truth = [ev(1.0, 2.0), ev(1.2, 2.2)];
        let pred = [ev(1.15, 1.85), ev(1.1, 2.1)];
        assert_eq!(counts(&pred, &truth).tp, 2);
    }

    #[test]
    fn classes_are_scored_independently() {
        let p = [Event::new(1, 0.0, 1.0).unwrap()];
        let t = [Event::new(0, 0.0, 1.0).unwrap()];
        let c = event_counts(&p, &t, 2, &EventParams::default()).unwrap();
        assert_eq!(
            c[0],
            ClassCounts {
                tp: 0,
                fp: 0,
                fn_: 1
            }
        );
        assert_eq!(
            c[1],
            ClassCounts {
                tp: 0,
                fp: 1,
                fn_: 0
            }
        );
    }
}
