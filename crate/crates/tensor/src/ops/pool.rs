use crate::{Real, Result, Tensor, TensorError, Var};

impl<'g, T: Real> Var<'g, T> {
    /// l-norm pooling over non-overlapping `factor_t × factor_f` windows of
    /// `[b×c×t×f]`: each output cell is `(mean |x|^p)^(1/p)`.
    pub fn lp_pool(self, p: T, factor_t: usize, factor_f: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let (n, c, h, w) = match x.shape() {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => {
                return Err(TensorError::Rank {
                    op: "lp_pool",
                    expected: 4,
                    shape: s.to_vec(),
                })
            }
        };
        if !(p >= T::one()) {
            return Err(TensorError::invalid(
                "lp_pool",
                format!("p must be >= 1, got {p}"),
            ));
        }
        for (extent, factor) in [(h, factor_t), (w, factor_f)] {
            if factor == 0 || extent % factor != 0 {
                return Err(TensorError::NotDivisible {
                    op: "lp_pool",
                    extent,
                    factor,
                });
            }
        }
        let (oh, ow) = (h / factor_t, w / factor_f);
        let inv_count = T::of((factor_t * factor_f) as f64).recip();
        let mut out = vec![T::zero(); n * c * oh * ow];
        for plane in 0..n * c {
            let src = &x.data()[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
            for y in 0..h {
                for xx in 0..w {
                    dst[(y / factor_t) * ow + xx / factor_f] += src[y * w + xx].abs().powf(p);
                }
            }
            for v in dst.iter_mut() {
                *v = (*v * inv_count).powf(p.recip());
            }
        }
        let out = std::rc::Rc::new(Tensor::from_parts(vec![n, c, oh, ow], out));
        let ys = std::rc::Rc::clone(&out);
        Ok(self.graph().op(
            "lp_pool",
            out,
            &[self],
            Box::new(move |g, _| {
                // dy/dx = |x|^(p-1)·sign(x)·y^(1-p) / count
                let mut dx = vec![T::zero(); x.numel()];
                for plane in 0..n * c {
                    let src = &x.data()[plane * h * w..(plane + 1) * h * w];
                    let yv = &ys.data()[plane * oh * ow..(plane + 1) * oh * ow];
                    let gv = &g.data()[plane * oh * ow..(plane + 1) * oh * ow];
                    let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
                    for y in 0..h {
                        for xx in 0..w {
                            let o = (y / factor_t) * ow + xx / factor_f;
                            let v = src[y * w + xx];
                            if yv[o] == T::zero() || v == T::zero() {
                                continue;
                            }
                            let a = v.abs();
                            dst[y * w + xx] =
                                gv[o] * inv_count * (a / yv[o]).powf(p - T::one()) * v.signum();
                        }
                    }
                }
                vec![Some(Tensor::from_parts(x.shape().to_vec(), dx))]
            }),
        ))
    }
}
