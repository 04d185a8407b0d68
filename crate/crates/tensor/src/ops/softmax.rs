use std::rc::Rc;

use crate::{Real, Result, Tensor, TensorError, Var};

fn softmax_rows<T: Real>(x: &[T], n: usize, valid: impl Fn(usize) -> usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for (r, (src, dst)) in x.chunks(n).zip(y.chunks_mut(n)).enumerate() {
        let v = valid(r);
        let m = src[..v].iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for (d, &a) in dst[..v].iter_mut().zip(&src[..v]) {
            *d = (a - m).exp();
            s += *d;
        }
        for d in &mut dst[..v] {
            *d /= s;
        }
    }
    y
}

impl<'g, T: Real> Var<'g, T> {
    /// Softmax over the last axis with max subtraction.
    pub fn softmax_lastdim(self) -> Var<'g, T> {
        let n = *self.value().shape().last().expect("softmax on scalar");
        self.softmax_masked(move |_| n)
    }

    /// Softmax over the last axis where, for slices belonging to sample `s`
    /// of the leading axis, only the first `valid[s]` entries take part; the
    /// rest get weight zero.
    pub fn masked_softmax_lastdim(self, valid: &[usize]) -> Result<Var<'g, T>> {
        let shape = self.value().shape().to_vec();
        let n = *shape.last().expect("softmax on scalar");
        if shape.len() < 2 || valid.len() != shape[0] || valid.iter().any(|&v| v == 0 || v > n) {
            return Err(TensorError::invalid(
                "masked_softmax_lastdim",
                format!("valid lengths {valid:?} do not fit shape {shape:?}"),
            ));
        }
        let rows_per_sample = shape.iter().product::<usize>() / n / shape[0];
        let valid = valid.to_vec();
        Ok(self.softmax_masked(move |r| valid[r / rows_per_sample]))
    }

    fn softmax_masked(self, valid: impl Fn(usize) -> usize) -> Var<'g, T> {
        let x = self.value();
        let n = *x.shape().last().unwrap();
        let y = Rc::new(Tensor::from_parts(
            x.shape().to_vec(),
            softmax_rows(x.data(), n, valid),
        ));
        let ys = Rc::clone(&y);
        self.graph().op(
            "softmax_lastdim",
            y,
            &[self],
            Box::new(move |g, _| {
                let mut dx = Vec::with_capacity(g.numel());
                for (gr, yr) in g.data().chunks(n).zip(ys.data().chunks(n)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    dx.extend(gr.iter().zip(yr).map(|(&gj, &yj)| yj * (gj - dot)));
                }
                vec![Some(Tensor::from_parts(g.shape().to_vec(), dx))]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::check::finite_diff_check;
    use crate::{Graph, Tensor};

    fn softmax(v: &[f64]) -> Vec<f64> {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64([v.len()], v).unwrap());
        x.softmax_lastdim().value().data().to_vec()
    }

    #[test]
    fn known_values() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let y = softmax(&[0.0, -1.0]);
        assert!((y[0] - 0.73106).abs() < 1e-5 && (y[1] - 0.26894).abs() < 1e-5);
        let y = softmax(&[1000.0, 0.0]);
        assert_eq!(y[0], 1.0);
        assert!(y[1] >= 0.0 && y[1] < 1e-300);
    }

    #[test]
    fn masked_columns_get_zero_weight() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros([2, 3, 4]));
        let y = x.masked_softmax_lastdim(&[4, 2]).unwrap().value();
        assert!(y.data()[..12].iter().all(|&v| v == 0.25));
        for row in y.data()[12..].chunks(4) {
            assert_eq!(row, &[0.5, 0.5, 0.0, 0.0]);
        }
        assert!(x.masked_softmax_lastdim(&[4]).is_err());
    }

    #[test]
    fn masked_gradient() {
        let x = Tensor::from_fn([2, 2, 3], |i| (i as f64 * 1.3).sin());
        let w = Tensor::from_fn([2, 2, 3], |i| (i as f64 * 0.4).cos());
        let r = finite_diff_check(
            |g, v| {
                v.masked_softmax_lastdim(&[3, 2])?
                    .mul(g.constant(w.clone()))
                    .map(|p| p.sum())
            },
            &x,
            1e-5,
            1e-4,
        );
        assert!(r.passed, "{r:?}");
    }
}
