use amn_tensor::{Real, Tensor, TensorError, Var};

use crate::Result;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over all `n·c` entries. Entries clamped at the
/// bounds pass no gradient.
pub fn bce_loss<'g, T: Real>(probs: Var<'g, T>, labels: &Tensor<T>) -> Result<Var<'g, T>> {
    let pv = probs.value();
    if pv.shape() != labels.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "bce_loss",
            lhs: pv.shape().to_vec(),
            rhs: labels.shape().to_vec(),
        }
        .into());
    }
    let lo = T::of(PROB_CLAMP);
    let hi = T::one() - lo;
    let count = T::of(pv.numel() as f64);
    let mut total = T::zero();
    for (&p, &y) in pv.data().iter().zip(labels.data()) {
        let p = p.max(lo).min(hi);
        total -= y * p.ln() + (T::one() - y) * (T::one() - p).ln();
    }
    let y = labels.clone();
    Ok(probs.graph().op(
        "bce_loss",
        Tensor::scalar(total / count),
        &[probs],
        Box::new(move |g, _| {
            let scale = g.item() / count;
            let dx = pv
                .data()
                .iter()
                .zip(y.data())
                .map(|(&p, &y)| {
                    if p < lo || p > hi {
                        T::zero()
                    } else {
                        scale * ((T::one() - y) / (T::one() - p) - y / p)
                    }
                })
                .collect();
            vec![Some(Tensor::new(pv.shape().to_vec(), dx).expect("shape"))]
        }),
    ))
}
