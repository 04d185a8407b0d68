use crate::{Real, Result, Tensor, TensorError, Var};

/// Source index pair and weight of the right neighbour for each target frame.
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            if dst == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

impl<'g, T: Real> Var<'g, T> {
    /// Linear interpolation along the second-to-last (time) axis of
    /// `[..., t', c]` to `[..., target_t, c]`. First and last frames map onto
    /// each other exactly.
    pub fn linear_upsample_time(self, target_t: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let rank = x.rank();
        if rank < 2 {
            return Err(TensorError::Rank {
                op: "linear_upsample_time",
                expected: 2,
                shape: x.shape().to_vec(),
            });
        }
        let (src, c) = (x.shape()[rank - 2], x.shape()[rank - 1]);
        if src < 2 || target_t < src {
            return Err(TensorError::invalid(
                "linear_upsample_time",
                format!("need 2 <= t' <= target, got t'={src}, target={target_t}"),
            ));
        }
        let taps: Vec<(usize, usize, T)> = taps(src, target_t)
            .into_iter()
            .map(|(a, b, w)| (a, b, T::of(w)))
            .collect();
        let groups = x.numel() / (src * c);
        let mut out = Vec::with_capacity(groups * target_t * c);
        for gi in 0..groups {
            let block = &x.data()[gi * src * c..(gi + 1) * src * c];
            for &(lo, hi, w) in &taps {
                let (a, b) = (&block[lo * c..(lo + 1) * c], &block[hi * c..(hi + 1) * c]);
                out.extend(
                    a.iter()
                        .zip(b)
                        .map(|(&a, &b)| if w == T::zero() { a } else { a + w * (b - a) }),
                );
            }
        }
        let mut out_shape = x.shape().to_vec();
        out_shape[rank - 2] = target_t;
        let in_shape = x.shape().to_vec();
        Ok(self.graph().op(
            "linear_upsample_time",
            Tensor::from_parts(out_shape, out),
            &[self],
            Box::new(move |g, _| {
                let mut dx = vec![T::zero(); groups * src * c];
                for gi in 0..groups {
                    let gb = &g.data()[gi * target_t * c..(gi + 1) * target_t * c];
                    let db = &mut dx[gi * src * c..(gi + 1) * src * c];
                    for (i, &(lo, hi, w)) in taps.iter().enumerate() {
                        for k in 0..c {
                            let gv = gb[i * c + k];
                            db[lo * c + k] += gv * (T::one() - w);
                            db[hi * c + k] += gv * w;
                        }
                    }
                }
                vec![Some(Tensor::from_parts(in_shape.clone(), dx))]
            }),
        ))
    }
}
