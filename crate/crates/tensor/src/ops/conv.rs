use crate::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::{Real, Result, Tensor, TensorError, Var};

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Unfolds one sample `[c_in×h×w]` into `[c_in·kh·kw × h·w]` with zero padding.
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let (h, w) = (self.h as isize, self.w as isize);
        let (ph, pw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        let plane = self.plane();
        let mut r = 0;
        for c in 0..self.c_in {
            let src = &x[c * plane..(c + 1) * plane];
            for dy in 0..self.kh as isize {
                for dx in 0..self.kw as isize {
                    let dst = &mut cols[r * plane..(r + 1) * plane];
                    let (sx0, sx1) = ((pw - dx).max(0), (w + pw - dx).min(w));
                    for y in 0..h {
                        let row = &mut dst[(y * w) as usize..((y + 1) * w) as usize];
                        let sy = y + dy - ph;
                        if sy < 0 || sy >= h || sx0 >= sx1 {
                            row.fill(T::zero());
                            continue;
                        }
                        row[..sx0 as usize].fill(T::zero());
                        row[sx1 as usize..].fill(T::zero());
                        let s0 = (sy * w + sx0 + dx - pw) as usize;
                        row[sx0 as usize..sx1 as usize]
                            .copy_from_slice(&src[s0..s0 + (sx1 - sx0) as usize]);
                    }
                    r += 1;
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: accumulates columns back into a sample.
    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let (h, w) = (self.h as isize, self.w as isize);
        let (ph, pw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        let plane = self.plane();
        let mut r = 0;
        for c in 0..self.c_in {
            let dst = &mut dx[c * plane..(c + 1) * plane];
            for dy in 0..self.kh as isize {
                for dxo in 0..self.kw as isize {
                    let src = &cols[r * plane..(r + 1) * plane];
                    let (sx0, sx1) = ((pw - dxo).max(0), (w + pw - dxo).min(w));
                    for y in 0..h {
                        let sy = y + dy - ph;
                        if sy < 0 || sy >= h || sx0 >= sx1 {
                            continue;
                        }
                        let row = &src[(y * w + sx0) as usize..(y * w + sx1) as usize];
                        let d0 = (sy * w + sx0 + dxo - pw) as usize;
                        for (d, &s) in dst[d0..d0 + row.len()].iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

impl<'g, T: Real> Var<'g, T> {
    /// Stride-1 2-D convolution with zero padding that preserves the
    /// spatial extents. `self` is `[b×c_in×t×f]`, `weight` is
    /// `[c_out×c_in×kh×kw]` with odd `kh`, `kw`, and `bias` is `[c_out]`.
    pub fn conv2d_same(self, weight: Var<'g, T>, bias: Var<'g, T>) -> Result<Var<'g, T>> {
        let (x, wv, bv) = (self.value(), weight.value(), bias.value());
        let (n, c_in, h, w) = match x.shape() {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => {
                return Err(TensorError::Rank {
                    op: "conv2d_same",
                    expected: 4,
                    shape: s.to_vec(),
                })
            }
        };
        let (c_out, wc, kh, kw) = match wv.shape() {
            [o, c, kh, kw] => (*o, *c, *kh, *kw),
            s => {
                return Err(TensorError::Rank {
                    op: "conv2d_same",
                    expected: 4,
                    shape: s.to_vec(),
                })
            }
        };
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TensorError::EvenKernel { kh, kw });
        }
        if wc != c_in {
            return Err(TensorError::ChannelMismatch {
                op: "conv2d_same",
                input: c_in,
                expected: wc,
            });
        }
        if bv.shape() != [c_out] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d_same",
                lhs: wv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let geo = Geometry { c_in, h, w, kh, kw };
        let (k, plane) = (geo.rows(), geo.plane());
        let mut cols = vec![T::zero(); k * plane];
        let mut out = vec![T::zero(); n * c_out * plane];
        for s in 0..n {
            geo.im2col(
                &x.data()[s * c_in * plane..(s + 1) * c_in * plane],
                &mut cols,
            );
            let dst = &mut out[s * c_out * plane..(s + 1) * c_out * plane];
            for (o, row) in dst.chunks_mut(plane).enumerate() {
                row.fill(bv.data()[o]);
            }
            gemm_nn(c_out, k, plane, wv.data(), &cols, dst, T::one());
        }
        Ok(self.graph().op(
            "conv2d_same",
            Tensor::from_parts(vec![n, c_out, h, w], out),
            &[self, weight, bias],
            Box::new(move |g, needs| {
                let mut dx = needs[0].then(|| vec![T::zero(); n * c_in * plane]);
                let mut dw = needs[1].then(|| vec![T::zero(); c_out * k]);
                let mut cols = vec![T::zero(); k * plane];
                let mut dcols = vec![T::zero(); k * plane];
                for s in 0..n {
                    let gs = &g.data()[s * c_out * plane..(s + 1) * c_out * plane];
                    if let Some(dw) = dw.as_mut() {
                        geo.im2col(
                            &x.data()[s * c_in * plane..(s + 1) * c_in * plane],
                            &mut cols,
                        );
                        gemm_nt(c_out, plane, k, gs, &cols, dw, T::one());
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm_tn(k, c_out, plane, wv.data(), gs, &mut dcols, T::zero());
                        geo.col2im(&dcols, &mut dx[s * c_in * plane..(s + 1) * c_in * plane]);
                    }
                }
                let db = needs[2].then(|| {
                    let mut db = vec![T::zero(); c_out];
                    for (i, row) in g.data().chunks(plane).enumerate() {
                        db[i % c_out] += row.iter().copied().sum::<T>();
                    }
                    Tensor::from_parts(vec![c_out], db)
                });
                vec![
                    dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
                    dw.map(|d| Tensor::from_parts(wv.shape().to_vec(), d)),
                    db,
                ]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::{Graph, Tensor, TensorError};

    #[test]
    fn unit_kernel_is_identity() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn([2, 1, 3, 4], |i| i as f64 - 5.0));
        let w = g.constant(Tensor::ones([1, 1, 1, 1]));
        let b = g.constant(Tensor::zeros([1]));
        let y = x.conv2d_same(w, b).unwrap();
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn zero_input_gives_bias() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros([1, 2, 4, 5]));
        let w = g.constant(Tensor::from_fn([3, 2, 3, 3], |i| i as f64));
        let b = g.constant(Tensor::from_f64([3], &[0.5, -1.0, 2.0]).unwrap());
        let y = x.conv2d_same(w, b).unwrap().value();
        for (i, &v) in y.data().iter().enumerate() {
            assert_eq!(v, [0.5, -1.0, 2.0][i / 20]);
        }
    }

    #[test]
    fn errors() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros([1, 2, 4, 4]));
        let b = g.constant(Tensor::zeros([1]));
        let even = g.constant(Tensor::zeros([1, 2, 2, 3]));
        assert!(matches!(
            x.conv2d_same(even, b),
            Err(TensorError::EvenKernel { .. })
        ));
        let wrong = g.constant(Tensor::zeros([1, 3, 3, 3]));
        assert!(matches!(
            x.conv2d_same(wrong, b),
            Err(TensorError::ChannelMismatch { .. })
        ));
    }
}
