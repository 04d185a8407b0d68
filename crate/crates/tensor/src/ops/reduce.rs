use crate::{Real, Result, Tensor, TensorError, Var};

/// Splits a shape around `axis` into (outer, extent, inner) element counts.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'g, T: Real> Var<'g, T> {
    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(self) -> Var<'g, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.graph().op(
            "sum",
            Tensor::scalar(x.sum()),
            &[self],
            Box::new(move |g, _| vec![Some(Tensor::full(shape.clone(), g.item()))]),
        )
    }

    pub fn mean(self) -> Var<'g, T> {
        let n = T::of(self.value().numel() as f64);
        self.sum().scale(n.recip())
    }

    /// Mean over `axis`, which is kept with extent 1.
    pub fn mean_axis(self, axis: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(TensorError::invalid(
                "mean_axis",
                format!("axis {axis} for shape {:?}", x.shape()),
            ));
        }
        let in_shape = x.shape().to_vec();
        let (outer, n, inner) = split_axis(&in_shape, axis);
        let inv = T::of(n as f64).recip();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for k in 0..n {
                let src = &x.data()[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
            for d in dst.iter_mut() {
                *d *= inv;
            }
        }
        let mut out_shape = in_shape.clone();
        out_shape[axis] = 1;
        Ok(self.graph().op(
            "mean_axis",
            Tensor::from_parts(out_shape, out),
            &[self],
            Box::new(move |g, _| {
                let mut dx = vec![T::zero(); outer * n * inner];
                for o in 0..outer {
                    let src = &g.data()[o * inner..(o + 1) * inner];
                    for k in 0..n {
                        let dst = &mut dx[(o * n + k) * inner..(o * n + k + 1) * inner];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = s * inv;
                        }
                    }
                }
                vec![Some(Tensor::from_parts(in_shape.clone(), dx))]
            }),
        ))
    }

    /// Divides every slice along the last axis by its sum.
    pub fn normalize_lastdim(self) -> Var<'g, T> {
        let x = self.value();
        let n = *x.shape().last().expect("normalize_lastdim on scalar");
        let sums: Vec<T> = x
            .data()
            .chunks(n)
            .map(|r| r.iter().copied().sum())
            .collect();
        let mut y = Vec::with_capacity(x.numel());
        for (row, &s) in x.data().chunks(n).zip(&sums) {
            y.extend(row.iter().map(|&v| v / s));
        }
        let y = std::rc::Rc::new(Tensor::from_parts(x.shape().to_vec(), y));
        let ys = std::rc::Rc::clone(&y);
        self.graph().op(
            "normalize_lastdim",
            y,
            &[self],
            Box::new(move |g, _| {
                // d y_j / d x_k = (δ_jk − y_j) / s
                let mut dx = Vec::with_capacity(g.numel());
                for ((gr, yr), &s) in g.data().chunks(n).zip(ys.data().chunks(n)).zip(&sums) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    dx.extend(gr.iter().map(|&gj| (gj - dot) / s));
                }
                vec![Some(Tensor::from_parts(g.shape().to_vec(), dx))]
            }),
        )
    }
}
