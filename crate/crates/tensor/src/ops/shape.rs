use super::reduce::split_axis;
use crate::{Real, Result, Tensor, TensorError, Var};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Moves data so that output axis `i` is input axis `perm[i]`.
fn permute_data<T: Real>(data: &[T], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<T>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; out_shape.len()];
    let mut off = 0usize;
    for _ in 0..data.len() {
        out.push(data[off]);
        for ax in (0..idx.len()).rev() {
            idx[ax] += 1;
            off += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    (out_shape, out)
}

impl<'g, T: Real> Var<'g, T> {
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g, T>> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let value = (*x).clone().reshape(shape)?;
        Ok(self.graph().op(
            "reshape",
            value,
            &[self],
            Box::new(move |g, _| vec![Some(g.clone().reshape(in_shape.clone()).unwrap())]),
        ))
    }

    pub fn permute(self, perm: &[usize]) -> Result<Var<'g, T>> {
        let x = self.value();
        let mut seen = vec![false; x.rank()];
        if perm.len() != x.rank()
            || perm
                .iter()
                .any(|&p| p >= x.rank() || std::mem::replace(&mut seen[p], true))
        {
            return Err(TensorError::invalid(
                "permute",
                format!("{perm:?} is not a permutation of rank {}", x.rank()),
            ));
        }
        let (out_shape, out) = permute_data(x.data(), x.shape(), perm);
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Ok(self.graph().op(
            "permute",
            Tensor::from_parts(out_shape, out),
            &[self],
            Box::new(move |g, _| {
                let (s, d) = permute_data(g.data(), g.shape(), &inverse);
                vec![Some(Tensor::from_parts(s, d))]
            }),
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        if axis >= x.rank() || len == 0 || start + len > x.shape()[axis] {
            return Err(TensorError::invalid(
                "narrow",
                format!(
                    "axis {axis} range {start}..{} of shape {:?}",
                    start + len,
                    x.shape()
                ),
            ));
        }
        let in_shape = x.shape().to_vec();
        let (outer, n, inner) = split_axis(&in_shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut out_shape = in_shape.clone();
        out_shape[axis] = len;
        Ok(self.graph().op(
            "narrow",
            Tensor::from_parts(out_shape, out),
            &[self],
            Box::new(move |g, _| {
                let mut dx = vec![T::zero(); outer * n * inner];
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    dx[base..base + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(Tensor::from_parts(in_shape.clone(), dx))]
            }),
        ))
    }

    /// Repeats an extent-1 `axis` `times` times.
    pub fn expand_axis(self, axis: usize, times: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        if axis >= x.rank() || x.shape()[axis] != 1 || times == 0 {
            return Err(TensorError::invalid(
                "expand_axis",
                format!(
                    "axis {axis} of shape {:?} cannot be repeated {times} times",
                    x.shape()
                ),
            ));
        }
        let in_shape = x.shape().to_vec();
        let (outer, _, inner) = split_axis(&in_shape, axis);
        let mut out = Vec::with_capacity(outer * times * inner);
        for o in 0..outer {
            for _ in 0..times {
                out.extend_from_slice(&x.data()[o * inner..(o + 1) * inner]);
            }
        }
        let mut out_shape = in_shape.clone();
        out_shape[axis] = times;
        Ok(self.graph().op(
            "expand_axis",
            Tensor::from_parts(out_shape, out),
            &[self],
            Box::new(move |g, _| {
                let mut dx = vec![T::zero(); outer * inner];
                for o in 0..outer {
                    for r in 0..times {
                        let src = &g.data()[(o * times + r) * inner..(o * times + r + 1) * inner];
                        for (d, &s) in dx[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                vec![Some(Tensor::from_parts(in_shape.clone(), dx))]
            }),
        ))
    }
}
