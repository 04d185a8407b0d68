use amn_tensor::{Real, Tensor, TensorError, Var};

use super::Pooling;
use crate::Result;

fn dims<T: Real>(
    q: &Var<'_, T>,
    valid: &[usize],
    op: &'static str,
) -> Result<(usize, usize, usize)> {
    let s = q.shape();
    let [n, t, c] = s[..] else {
        return Err(TensorError::Rank {
            op,
            expected: 3,
            shape: s,
        }
        .into());
    };
    if valid.len() != n || valid.iter().any(|&v| v == 0 || v > t) {
        return Err(
            TensorError::invalid(op, format!("valid lengths {valid:?} do not fit {s:?}")).into(),
        );
    }
    Ok((n, t, c))
}

/// `p[s, k] = Σ q² / Σ q` over the first `valid[s]` frames of `q: [n, t, c]`;
/// zero where the denominator vanishes.
pub fn pool_linear_softmax<'g, T: Real>(q: Var<'g, T>, valid: &[usize]) -> Result<Var<'g, T>> {
    let (n, t, c) = dims(&q, valid, "pool_linear_softmax")?;
    let qv = q.value();
    let x = qv.data();
    let mut s1 = vec![T::zero(); n * c];
    let mut s2 = vec![T::zero(); n * c];
    for s in 0..n {
        for i in 0..valid[s] {
            for k in 0..c {
                let v = x[(s * t + i) * c + k];
                s1[s * c + k] += v;
                s2[s * c + k] += v * v;
            }
        }
    }
    let p: Vec<T> = s1
        .iter()
        .zip(&s2)
        .map(|(&a, &b)| if a == T::zero() { T::zero() } else { b / a })
        .collect();
    let pv = p.clone();
    let valid = valid.to_vec();
    Ok(q.graph().op(
        "pool_linear_softmax",
        Tensor::new([n, c], p)?,
        &[q],
        Box::new(move |g, _| {
            let x = qv.data();
            let mut dx = vec![T::zero(); n * t * c];
            for s in 0..n {
                for k in 0..c {
                    let den = s1[s * c + k];
                    if den == T::zero() {
                        continue;
                    }
                    let gk = g.data()[s * c + k];
                    let two = T::of(2.0);
                    for i in 0..valid[s] {
                        let o = (s * t + i) * c + k;
                        dx[o] = gk * (two * x[o] - pv[s * c + k]) / den;
                    }
                }
            }
            vec![Some(Tensor::new(qv.shape().to_vec(), dx).expect("shape"))]
        }),
    ))
}

/// Per-class maximum over the first `valid[s]` frames; the gradient goes to
/// the first maximizing frame.
pub fn pool_max<'g, T: Real>(q: Var<'g, T>, valid: &[usize]) -> Result<Var<'g, T>> {
    let (n, t, c) = dims(&q, valid, "pool_max")?;
    let qv = q.value();
    let x = qv.data();
    let mut arg = vec![0usize; n * c];
    let mut p = vec![T::zero(); n * c];
    for s in 0..n {
        for k in 0..c {
            let mut best = s * t * c + k;
            for i in 1..valid[s] {
                let o = (s * t + i) * c + k;
                if x[o] > x[best] {
                    best = o;
                }
            }
            arg[s * c + k] = best;
            p[s * c + k] = x[best];
        }
    }
    let shape = qv.shape().to_vec();
    Ok(q.graph().op(
        "pool_max",
        Tensor::new([n, c], p)?,
        &[q],
        Box::new(move |g, _| {
            let mut dx = vec![T::zero(); n * t * c];
            for (&o, &gv) in arg.iter().zip(g.data()) {
                dx[o] += gv;
            }
            vec![Some(Tensor::new(shape.clone(), dx).expect("shape"))]
        }),
    ))
}

pub fn pool<'g, T: Real>(q: Var<'g, T>, valid: &[usize], kind: Pooling) -> Result<Var<'g, T>> {
    match kind {
        Pooling::LinearSoftmax => pool_linear_softmax(q, valid),
        Pooling::Max => pool_max(q, valid),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use amn_tensor::check::finite_diff_check;
    use amn_tensor::Graph;

    fn pooled(col: &[f64], kind: Pooling) -> f64 {
        let g = Graph::new();
        let q = g.constant(Tensor::from_f64([1, col.len(), 1], col).unwrap());
        pool(q, &[col.len()], kind).unwrap().value().item()
    }

    #[test]
    fn linear_softmax_examples() {
        assert!((pooled(&[0.5, 0.5], Pooling::LinearSoftmax) - 0.5).abs() < 1e-15);
        assert_eq!(pooled(&[1.0, 0.0], Pooling::LinearSoftmax), 1.0);
        assert!((pooled(&[0.8, 0.2], Pooling::LinearSoftmax) - 0.68).abs() < 1e-9);
        assert_eq!(pooled(&[0.0, 0.0], Pooling::LinearSoftmax), 0.0);
    }

    #[test]
    fn max_examples() {
        assert_eq!(pooled(&[0.1, 0.9, 0.3], Pooling::Max), 0.9);
        assert_eq!(pooled(&[0.4; 5], Pooling::Max), 0.4);
    }

    #[test]
    fn padded_frames_are_ignored() {
        let g = Graph::<f64>::new();
        let q = g.constant(Tensor::from_f64([1, 4, 1], &[0.8, 0.2, 1.0, 1.0]).unwrap());
        let p: f64 = pool_linear_softmax(q, &[2]).unwrap().value().item();
        assert!((p - 0.68).abs() < 1e-12);
        assert_eq!(pool_max(q, &[2]).unwrap().value().item(), 0.8);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = Tensor::from_fn([2, 5, 3], |i| 0.05 + 0.9 * ((i * 37 % 17) as f64 / 17.0));
        let w = Tensor::from_fn([2, 3], |i| 1.0 + i as f64);
        for kind in [Pooling::LinearSoftmax, Pooling::Max] {
            let r = finite_diff_check(
                |g, v| {
                    let p = pool(v, &[5, 3], kind).unwrap();
                    p.mul(g.constant(w.clone())).map(|y| y.sum())
                },
                &x,
                1e-5,
                1e-4,
            );
            assert!(r.passed, "{kind}: {}", r.max_rel_err);
        }
    }
}
