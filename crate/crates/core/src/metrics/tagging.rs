use std::collections::{BTreeMap, BTreeSet};

use super::{ClassCounts, ScoreReport};
use crate::{Error, Result};

/// Clip id → set of class ids present in the clip.
pub type ClipTags = BTreeMap<String, BTreeSet<usize>>;

/// Clip-level presence scoring. Both sides must cover the same clip ids.
pub fn tagging_score(pred: &ClipTags, truth: &ClipTags, classes: usize) -> Result<ScoreReport> {
    if let Some(id) = pred
        .keys()
        .find(|k| !truth.contains_key(*k))
        .or_else(|| truth.keys().find(|k| !pred.contains_key(*k)))
    {
        return Err(Error::IdMismatch(id.clone()));
    }
    let mut counts = vec![ClassCounts::default(); classes];
    for (id, t) in truth {
        let p = &pred[id];
        for &k in p.union(t) {
            if k >= classes {
                return Err(Error::UnknownLabel {
                    label: k.to_string(),
                });
            }
            match (p.contains(&k), t.contains(&k)) {
                (true, true) => counts[k].tp += 1,
                (true, false) => counts[k].fp += 1,
                (false, true) => counts[k].fn_ += 1,
                (false, false) => unreachable!(),
            }
        }
    }
    Ok(ScoreReport::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(items: &[(&str, &[usize])]) -> ClipTags {
        items
            .iter()
            .map(|(id, ks)| (id.to_string(), ks.iter().copied().collect()))
            .collect()
    }

    #[test]
    fn perfect_predictions() {
        let t = tags(&[("a", &[0, 1]), ("b", &[2])]);
        assert_eq!(tagging_score(&t, &t, 3).unwrap().macro_.f1, 1.0);
    }

    #[test]
    fn missed_class_halves_macro() {
        let r = tagging_score(&tags(&[("x", &[0])]), &tags(&[("x", &[0, 1])]), 2).unwrap();
        assert_eq!(r.class(0).f1, 1.0);
        assert_eq!(r.class(1).f1, 0.0);
        assert!((r.macro_.f1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_predictions_have_zero_recall() {
        let r = tagging_score(
            &tags(&[("x", &[]), ("y", &[])]),
            &tags(&[("x", &[0]), ("y", &[1])]),
            2,
        )
        .unwrap();
        assert_eq!(r.micro.recall, 0.0);
        assert_eq!(r.macro_.recall, 0.0);
    }

    #[test]
    fn id_mismatch_rejected() {
        let err = tagging_score(&tags(&[("x", &[0])]), &tags(&[("y", &[0])]), 1).unwrap_err();
        assert!(matches!(err, Error::IdMismatch(_)));
    }
}
