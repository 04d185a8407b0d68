use crate::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::{Real, Result, Tensor, TensorError, Var};

impl<'g, T: Real> Var<'g, T> {
    /// `[m×k]·[k×n]`, or a batched product `[B×m×k]·[B×k×n]`.
    pub fn matmul(self, rhs: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), rhs.value());
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        };
        let (batch, m, k, n) = match (a.shape(), b.shape()) {
            ([m, k], [k2, n]) if k == k2 => (1, *m, *k, *n),
            ([ba, m, k], [bb, k2, n]) if k == k2 && ba == bb => (*ba, *m, *k, *n),
            _ => return Err(mismatch()),
        };
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            gemm_nn(
                m,
                k,
                n,
                &a.data()[i * m * k..],
                &b.data()[i * k * n..],
                &mut out[i * m * n..],
                T::zero(),
            );
        }
        let out_shape = if a.rank() == 2 {
            vec![m, n]
        } else {
            vec![batch, m, n]
        };
        Ok(self.graph().op(
            "matmul",
            Tensor::from_parts(out_shape, out),
            &[self, rhs],
            Box::new(move |g, needs| {
                let da = needs[0].then(|| {
                    let mut da = vec![T::zero(); batch * m * k];
                    for i in 0..batch {
                        gemm_nt(
                            m,
                            n,
                            k,
                            &g.data()[i * m * n..],
                            &b.data()[i * k * n..],
                            &mut da[i * m * k..],
                            T::zero(),
                        );
                    }
                    Tensor::from_parts(a.shape().to_vec(), da)
                });
                let db = needs[1].then(|| {
                    let mut db = vec![T::zero(); batch * k * n];
                    for i in 0..batch {
                        gemm_tn(
                            k,
                            m,
                            n,
                            &a.data()[i * m * k..],
                            &g.data()[i * m * n..],
                            &mut db[i * k * n..],
                            T::zero(),
                        );
                    }
                    Tensor::from_parts(b.shape().to_vec(), db)
                });
                vec![da, db]
            }),
        ))
    }

    /// Affine map over the last axis: `x[..., d]·wᵀ + bias` with `w` shaped
    /// `[out×d]` and `bias` shaped `[out]`.
    pub fn linear(self, w: Var<'g, T>, bias: Var<'g, T>) -> Result<Var<'g, T>> {
        let (x, wv, bv) = (self.value(), w.value(), bias.value());
        let d = *x.shape().last().unwrap_or(&0);
        let (o, wd) = match wv.shape() {
            [o, wd] => (*o, *wd),
            s => {
                return Err(TensorError::Rank {
                    op: "linear",
                    expected: 2,
                    shape: s.to_vec(),
                })
            }
        };
        if wd != d || bv.shape() != [o] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: x.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let rows = x.numel() / d;
        let mut out = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            out.extend_from_slice(bv.data());
        }
        gemm_nt(rows, d, o, x.data(), wv.data(), &mut out, T::one());
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().unwrap() = o;
        Ok(self.graph().op(
            "linear",
            Tensor::from_parts(out_shape, out),
            &[self, w, bias],
            Box::new(move |g, needs| {
                let dx = needs[0].then(|| {
                    let mut dx = vec![T::zero(); rows * d];
                    gemm_nn(rows, o, d, g.data(), wv.data(), &mut dx, T::zero());
                    Tensor::from_parts(x.shape().to_vec(), dx)
                });
                let dw = needs[1].then(|| {
                    let mut dw = vec![T::zero(); o * d];
                    gemm_tn(o, rows, d, g.data(), x.data(), &mut dw, T::zero());
                    Tensor::from_parts(vec![o, d], dw)
                });
                let db = needs[2].then(|| {
                    let mut db = vec![T::zero(); o];
                    for row in g.data().chunks(o) {
                        for (acc, &v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    Tensor::from_parts(vec![o], db)
                });
                vec![dx, dw, db]
            }),
        ))
    }
}
