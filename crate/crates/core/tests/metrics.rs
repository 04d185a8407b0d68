//! Scorers against exhaustive reference implementations on random tiny
//! instances, plus the algebraic laws the scores must obey.

use std::collections::{BTreeMap, BTreeSet};

use amn_core::metrics::{
    binarize, decode_events, event_counts, event_score, segment_counts, segment_score,
    tagging_score, ClassCounts, ClipTags, Event, EventParams,
};
use amn_tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

const INSTANCES: u64 = 200;

#[test]
fn event_counts_match_exhaustive_matching() {
    let mut matched = 0;
    for seed in 0..INSTANCES {
        let inst = instance(seed, 300);
        let got = event_counts(
            &events(&inst.pred),
            &events(&inst.truth),
            inst.classes,
            &EventParams::default(),
        )
        .unwrap();
        let want = event_oracle(&inst);
        assert_eq!(got, want, "seed {seed}");
        matched += want.iter().map(|c| c.tp).sum::<u64>();
    }
    assert!(
        matched > INSTANCES / 2,
        "instances should exercise matches, got {matched}"
    );
}

#[test]
fn segment_counts_match_slot_grid() {
    for seed in 0..INSTANCES {
        let inst = instance(seed, 300);
        for seg in [100, 50, 130] {
            let got = segment_counts(
                &events(&inst.pred),
                &events(&inst.truth),
                inst.classes,
                inst.dur as f64 / 100.0,
                seg as f64 / 100.0,
            )
            .unwrap();
            assert_eq!(got, segment_oracle(&inst, seg), "seed {seed} seg {seg}");
        }
    }
}

#[test]
fn tagging_counts_match_set_arithmetic() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.random_range(1..=3);
        let mut pred = ClipTags::new();
        let mut truth = ClipTags::new();
        for clip in 0..rng.random_range(1..=5) {
            let mut draw =
                || -> BTreeSet<usize> { (0..classes).filter(|_| rng.random_bool(0.5)).collect() };
            pred.insert(format!("c{clip}"), draw());
            truth.insert(format!("c{clip}"), draw());
        }
        let got = tagging_score(&pred, &truth, classes).unwrap().per_class;
        for k in 0..classes {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for id in truth.keys() {
                match (pred[id].contains(&k), truth[id].contains(&k)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            assert_eq!(got[k], ClassCounts { tp, fp, fn_ }, "seed {seed} class {k}");
        }
    }
}

#[test]
fn self_scoring_is_perfect_for_every_family() {
    for seed in 0..INSTANCES {
        let inst = instance(seed, 300);
        if inst.truth.is_empty() {
            continue;
        }
        let t = events(&inst.truth);
        let dur = inst.dur as f64 / 100.0;
        let ev = event_score(&t, &t, inst.classes, &EventParams::default()).unwrap();
        let seg = segment_score(&t, &t, inst.classes, dur, 1.0).unwrap();
        let tags: ClipTags = BTreeMap::from([(
            "x".to_string(),
            inst.truth.iter().map(|e| e.label).collect(),
        )]);
        let tag = tagging_score(&tags, &tags, inst.classes).unwrap();
        for r in [ev, seg, tag] {
            assert_eq!(
                (r.micro.precision, r.micro.recall, r.micro.f1),
                (1.0, 1.0, 1.0),
                "seed {seed}"
            );
            assert_eq!(r.macro_.f1, 1.0, "seed {seed}");
        }
    }
}

#[test]
fn swapping_sides_swaps_errors() {
    // references no longer than 1 s keep the offset tolerance at the fixed
    // collar, which makes the match relation symmetric
    for seed in 0..INSTANCES {
        let inst = instance(seed, 100);
        let (p, t) = (events(&inst.pred), events(&inst.truth));
        let dur = inst.dur as f64 / 100.0;
        let params = EventParams::default();
        let pairs = [
            (
                event_score(&p, &t, inst.classes, &params).unwrap(),
                event_score(&t, &p, inst.classes, &params).unwrap(),
            ),
            (
                segment_score(&p, &t, inst.classes, dur, 1.0).unwrap(),
                segment_score(&t, &p, inst.classes, dur, 1.0).unwrap(),
            ),
        ];
        for (a, b) in pairs {
            for (x, y) in a.per_class.iter().zip(&b.per_class) {
                assert_eq!((x.tp, x.fp, x.fn_), (y.tp, y.fn_, y.fp), "seed {seed}");
            }
            assert_eq!(a.micro.precision, b.micro.recall);
            assert_eq!(a.micro.recall, b.micro.precision);
        }
    }
}

#[test]
fn dropping_a_false_positive_never_lowers_event_f1() {
    let params = EventParams::default();
    for seed in 0..INSTANCES {
        let inst = instance(seed, 300);
        let t = events(&inst.truth);
        let before = event_score(&events(&inst.pred), &t, inst.classes, &params).unwrap();
        for i in 0..inst.pred.len() {
            let mut rest = inst.pred.clone();
            let removed = rest.remove(i);
            let after = event_score(&events(&rest), &t, inst.classes, &params).unwrap();
            let lone = !inst.truth.iter().any(|r| compatible(&removed, r));
            if lone {
                assert_eq!(after.totals().tp, before.totals().tp, "seed {seed}");
            }
            if after.totals().tp == before.totals().tp {
                assert!(after.micro.f1 >= before.micro.f1, "seed {seed}");
                let k = removed.label;
                assert!(after.class(k).f1 >= before.class(k).f1, "seed {seed}");
            }
        }
    }
}

#[test]
fn documented_examples() {
    let ev = |on: f64, off: f64| Event::new(0, on, off).unwrap();
    let p = EventParams::default();
    let c = |pred: Event, truth: Event| event_counts(&[pred], &[truth], 1, &p).unwrap()[0];
    assert_eq!(
        c(ev(1.15, 2.5), ev(1.0, 2.0)),
        ClassCounts {
            tp: 0,
            fp: 1,
            fn_: 1
        }
    );
    assert_eq!(c(ev(1.0, 2.0), ev(1.0, 2.0)).tp, 1);
    assert_eq!(c(ev(1.19, 2.19), ev(1.0, 2.0)).tp, 1);

    let r = segment_score(&[ev(0.0, 1.0)], &[ev(0.0, 1.5)], 1, 2.0, 1.0).unwrap();
    assert_eq!(
        r.per_class[0],
        ClassCounts {
            tp: 1,
            fp: 0,
            fn_: 1
        }
    );
    assert!((r.micro.f1 - 2.0 / 3.0).abs() < 1e-12);

    let mut probs = vec![0.0; 20];
    probs[5..10].fill(0.9);
    let m = binarize(&Tensor::<f64>::from_f64([20, 1], &probs).unwrap(), 0.5, 1).unwrap();
    let e = decode_events(&m, 0.02);
    assert_eq!(e.len(), 1);
    assert!((e[0].onset - 0.10).abs() < 1e-12 && (e[0].offset - 0.20).abs() < 1e-12);
    assert!(binarize(&Tensor::<f64>::zeros([4, 1]), 0.5, 2).is_err());
}

/// Median with edge frames replicated, computed by sorting each window.
fn median_oracle(col: &[f64], w: usize) -> Vec<f64> {
    let half = w as i64 / 2;
    let n = col.len() as i64;
    (0..n)
        .map(|i| {
            let mut win: Vec<f64> = (i - half..=i + half)
                .map(|j| col[j.clamp(0, n - 1) as usize])
                .collect();
            win.sort_by(f64::total_cmp);
            win[half as usize]
        })
        .collect()
}

/// Runs of true frames read off one class column.
fn runs_oracle(col: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < col.len() {
        if col[i] {
            let s = i;
            while i < col.len() && col[i] {
                i += 1;
            }
            out.push((s, i));
        } else {
            i += 1;
        }
    }
    out
}

proptest! {
    #[test]
    fn binarize_and_decode_match_oracles(
        t in 1usize..40,
        c in 1usize..4,
        w in prop::sample::select(vec![1usize, 3, 5, 7]),
        seed in any::<u64>(),
        threshold in 0.1f64..0.9,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probs = Tensor::from_fn([t, c], |_| if rng.random_bool(0.3) { rng.random_range(0.0..1.0) } else { 0.9 });
        let mask = binarize(&probs, threshold, w).unwrap();
        let decoded = decode_events(&mask, 0.02);
        let mut want = Vec::new();
        for k in 0..c {
            let col: Vec<f64> = (0..t).map(|i| probs.get(&[i, k])).collect();
            let on: Vec<bool> = median_oracle(&col, w).iter().map(|&v| v > threshold).collect();
            for i in 0..t {
                prop_assert_eq!(mask.get(i, k), on[i]);
            }
            want.extend(runs_oracle(&on).into_iter().map(|(s, e)| (k, s, e)));
        }
        let got: Vec<(usize, usize, usize)> = decoded
            .iter()
            .map(|e| (e.label, (e.onset / 0.02).round() as usize, (e.offset / 0.02).round() as usize))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn f1_is_harmonic_mean(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
        let prf = ClassCounts { tp, fp, fn_ }.prf();
        let (p, r) = (prf.precision, prf.recall);
        let want = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        prop_assert!((prf.f1 - want).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&prf.f1));
    }
}
