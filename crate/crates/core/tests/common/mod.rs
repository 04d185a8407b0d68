//! Exhaustive reference scorers on random tiny instances in integer
//! centiseconds, shared by the metric tests and the acceptance suite.

#![allow(dead_code)]

use amn_core::metrics::{ClassCounts, Event};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Event on a centisecond grid, kept alongside its integer form so the
/// oracles can work in exact arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct Cs {
    pub label: usize,
    pub on: i64,
    pub off: i64,
}

impl Cs {
    pub fn event(self) -> Event {
        Event::new(self.label, self.on as f64 / 100.0, self.off as f64 / 100.0).unwrap()
    }
}

pub struct Instance {
    pub classes: usize,
    pub dur: i64,
    pub pred: Vec<Cs>,
    pub truth: Vec<Cs>,
}

pub fn random_events(rng: &mut ChaCha8Rng, classes: usize, dur: i64, max_len: i64) -> Vec<Cs> {
    (0..rng.random_range(0..=5))
        .map(|_| {
            let len = rng.random_range(1..=max_len.min(dur));
            let on = rng.random_range(0..=dur - len);
            Cs {
                label: rng.random_range(0..classes),
                on,
                off: on + len,
            }
        })
        .collect()
}

/// Predictions are partly jittered copies of the references so that
/// matches are common rather than accidental.
pub fn instance(seed: u64, max_len: i64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(1..=3);
    let dur = rng.random_range(50..=400);
    let truth = random_events(&mut rng, classes, dur, max_len);
    let mut pred = random_events(&mut rng, classes, dur, max_len);
    pred.truncate(rng.random_range(0..=pred.len()));
    for t in &truth {
        if pred.len() < 5 && rng.random_bool(0.6) {
            let on = (t.on + rng.random_range(-30..=30)).clamp(0, dur - 1);
            let off = (t.off + rng.random_range(-40..=40)).clamp(on + 1, dur);
            pred.push(Cs {
                label: t.label,
                on,
                off,
            });
        }
    }
    Instance {
        classes,
        dur,
        pred,
        truth,
    }
}

pub fn events(v: &[Cs]) -> Vec<Event> {
    v.iter().map(|c| c.event()).collect()
}

/// Onset within 20 cs and offset within max(20 cs, 20% of the reference
/// duration), in integer centiseconds.
pub fn compatible(p: &Cs, t: &Cs) -> bool {
    p.label == t.label
        && (p.on - t.on).abs() <= 20
        && 5 * (p.off - t.off).abs() <= (t.off - t.on).max(100)
}

/// Largest one-to-one matching by trying every assignment.
pub fn brute_matching(pred: &[Cs], truth: &[Cs], used: &mut Vec<bool>) -> usize {
    let Some((p, rest)) = pred.split_first() else {
        return 0;
    };
    let mut best = brute_matching(rest, truth, used);
    for j in 0..truth.len() {
        if !used[j] && compatible(p, &truth[j]) {
            used[j] = true;
            best = best.max(1 + brute_matching(rest, truth, used));
            used[j] = false;
        }
    }
    best
}

pub fn event_oracle(inst: &Instance) -> Vec<ClassCounts> {
    (0..inst.classes)
        .map(|k| {
            let p: Vec<Cs> = inst.pred.iter().filter(|e| e.label == k).copied().collect();
            let t: Vec<Cs> = inst
                .truth
                .iter()
                .filter(|e| e.label == k)
                .copied()
                .collect();
            let tp = brute_matching(&p, &t, &mut vec![false; t.len()]);
            ClassCounts {
                tp: tp as u64,
                fp: (p.len() - tp) as u64,
                fn_: (t.len() - tp) as u64,
            }
        })
        .collect()
}

/// Marks every centisecond slot an event covers, then reads segments off
/// the slot grid.
pub fn segment_activity_oracle(ev: &[Cs], classes: usize, dur: i64, seg: i64) -> Vec<Vec<bool>> {
    let mut slots = vec![vec![false; classes]; dur as usize];
    for e in ev {
        for s in e.on..e.off {
            slots[s as usize][e.label] = true;
        }
    }
    let n = (dur + seg - 1) / seg;
    (0..n)
        .map(|j| {
            let (a, b) = (j * seg, ((j + 1) * seg).min(dur));
            (0..classes)
                .map(|k| (a..b).any(|s| slots[s as usize][k]))
                .collect()
        })
        .collect()
}

pub fn segment_oracle(inst: &Instance, seg: i64) -> Vec<ClassCounts> {
    let p = segment_activity_oracle(&inst.pred, inst.classes, inst.dur, seg);
    let t = segment_activity_oracle(&inst.truth, inst.classes, inst.dur, seg);
    let mut out = vec![ClassCounts::default(); inst.classes];
    for (ps, ts) in p.iter().zip(&t) {
        for k in 0..inst.classes {
            out[k].tp += (ps[k] && ts[k]) as u64;
            out[k].fp += (ps[k] && !ts[k]) as u64;
            out[k].fn_ += (!ps[k] && ts[k]) as u64;
        }
    }
    out
}
