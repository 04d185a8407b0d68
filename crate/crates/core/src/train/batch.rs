use amn_tensor::{Real, Tensor};

use crate::audio::MelSpectrogram;
use crate::{Error, Result};

/// A featurized clip with its weak (clip-level) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: MelSpectrogram,
    pub labels: Vec<usize>,
}

impl Example {
    /// Multi-hot label row.
    pub fn target<T: Real>(&self, classes: usize) -> Vec<T> {
        let mut y = vec![T::zero(); classes];
        for &k in &self.labels {
            y[k] = T::one();
        }
        y
    }
}

/// Zero-padded mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    /// `[n, t_max, bands]`
    pub features: Tensor<T>,
    pub valid_lengths: Vec<usize>,
    /// `[n, classes]` multi-hot
    pub labels: Tensor<T>,
}

/// Packs clips in the given order, padding every clip with zero frames to
/// the longest one.
pub fn collate<T: Real>(items: &[&Example], classes: usize) -> Result<Batch<T>> {
    let first = items.first().ok_or(Error::EmptyBatch)?;
    let bands = first.features.bands();
    let t_max = items
        .iter()
        .map(|e| e.features.frames_len())
        .max()
        .unwrap_or(0);
    let n = items.len();
    let mut feats = vec![T::zero(); n * t_max * bands];
    let mut labels = Vec::with_capacity(n * classes);
    let mut valid = Vec::with_capacity(n);
    for (s, e) in items.iter().enumerate() {
        if e.features.bands() != bands {
            return Err(Error::config(format!(
                "clip {} has {} bands, expected {bands}",
                e.id,
                e.features.bands()
            )));
        }
        if let Some(&k) = e.labels.iter().find(|&&k| k >= classes) {
            return Err(Error::UnknownLabel {
                label: k.to_string(),
            });
        }
        let t = e.features.frames_len();
        let dst = &mut feats[s * t_max * bands..(s * t_max + t) * bands];
        for (d, &v) in dst.iter_mut().zip(e.features.frames.data()) {
            *d = T::of(v as f64);
        }
        valid.push(t);
        labels.extend(e.target::<T>(classes));
    }
    Ok(Batch {
        features: Tensor::new([n, t_max, bands], feats)?,
        valid_lengths: valid,
        labels: Tensor::new([n, classes], labels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(t: usize, labels: Vec<usize>) -> Example {
        Example {
            id: format!("c{t}"),
            features: MelSpectrogram {
                frames: Tensor::full([t, 4], 1.5),
            },
            labels,
        }
    }

    #[test]
    fn pads_to_longest() {
        let (a, b) = (example(500, vec![0]), example(250, vec![1, 2]));
        let batch: Batch<f64> = collate(&[&a, &b], 3).unwrap();
        assert_eq!(batch.features.shape(), &[2, 500, 4]);
        assert_eq!(batch.valid_lengths, vec![500, 250]);
        assert!((250..500).all(|t| (0..4).all(|f| batch.features.get(&[1, t, f]) == 0.0)));
        assert_eq!(batch.features.get(&[1, 249, 3]), 1.5);
        assert_eq!(batch.labels.data(), &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn equal_lengths_need_no_padding() {
        let (a, b) = (example(8, vec![]), example(8, vec![0]));
        let batch: Batch<f32> = collate(&[&a, &b], 1).unwrap();
        assert_eq!(batch.valid_lengths, vec![8, 8]);
        assert!(batch.features.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn single_clip_and_empty_batch() {
        let a = example(5, vec![0]);
        let batch: Batch<f64> = collate(&[&a], 1).unwrap();
        assert_eq!(batch.features.shape(), &[1, 5, 4]);
        assert!(matches!(collate::<f64>(&[], 1), Err(Error::EmptyBatch)));
    }
}
