use crate::{Real, Result, Tensor, TensorError, Var};

impl<'g, T: Real> Var<'g, T> {
    /// Squared Euclidean distances between rows: `[..., t, f] -> [..., t, t]`
    /// with `out[.., i, j] = Σ_f (x[.., i, f] − x[.., j, f])²`.
    pub fn pairwise_sqdist(self) -> Result<Var<'g, T>> {
        let x = self.value();
        let rank = x.rank();
        if rank < 2 {
            return Err(TensorError::Rank {
                op: "pairwise_sqdist",
                expected: 2,
                shape: x.shape().to_vec(),
            });
        }
        let (t, f) = (x.shape()[rank - 2], x.shape()[rank - 1]);
        let groups = x.numel() / (t * f);
        let mut out = vec![T::zero(); groups * t * t];
        for gi in 0..groups {
            let src = &x.data()[gi * t * f..(gi + 1) * t * f];
            let dst = &mut out[gi * t * t..(gi + 1) * t * t];
            for i in 0..t {
                let xi = &src[i * f..(i + 1) * f];
                for j in i + 1..t {
                    let xj = &src[j * f..(j + 1) * f];
                    let d: T = xi.iter().zip(xj).map(|(&a, &b)| (a - b) * (a - b)).sum();
                    dst[i * t + j] = d;
                    dst[j * t + i] = d;
                }
            }
        }
        let mut out_shape = x.shape().to_vec();
        out_shape[rank - 1] = t;
        Ok(self.graph().op(
            "pairwise_sqdist",
            Tensor::from_parts(out_shape, out),
            &[self],
            Box::new(move |g, _| {
                let two = T::of(2.0);
                let mut dx = vec![T::zero(); x.numel()];
                let mut diff = vec![T::zero(); f];
                for gi in 0..groups {
                    let src = &x.data()[gi * t * f..(gi + 1) * t * f];
                    let gg = &g.data()[gi * t * t..(gi + 1) * t * t];
                    let dst = &mut dx[gi * t * f..(gi + 1) * t * f];
                    for i in 0..t {
                        for j in i + 1..t {
                            let coef = two * (gg[i * t + j] + gg[j * t + i]);
                            if coef == T::zero() {
                                continue;
                            }
                            for ((d, &a), &b) in diff
                                .iter_mut()
                                .zip(&src[i * f..(i + 1) * f])
                                .zip(&src[j * f..(j + 1) * f])
                            {
                                *d = coef * (a - b);
                            }
                            let (lo, hi) = dst.split_at_mut(j * f);
                            for (o, &d) in lo[i * f..(i + 1) * f].iter_mut().zip(&diff) {
                                *o += d;
                            }
                            for (o, &d) in hi[..f].iter_mut().zip(&diff) {
                                *o -= d;
                            }
                        }
                    }
                }
                vec![Some(Tensor::from_parts(x.shape().to_vec(), dx))]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::{Graph, Tensor};

    #[test]
    fn hand_values() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64([1, 2, 1], &[0.0, 1.0]).unwrap());
        assert_eq!(
            x.pairwise_sqdist().unwrap().value().data(),
            &[0.0, 1.0, 1.0, 0.0]
        );
        let same = g.constant(Tensor::full([2, 3, 4], 0.7));
        assert!(same
            .pairwise_sqdist()
            .unwrap()
            .value()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }
}
