use super::elementwise::sigmoid;
use crate::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::{Real, Result, Tensor, TensorError, Var};

/// One GRU direction. Gate rows are stacked in (reset, update, candidate)
/// order: `w_ih` is `[3h×d]`, `w_hh` is `[3h×h]`, biases are `[3h]`.
#[derive(Debug, Clone, Copy)]
pub struct GruCell<V> {
    pub w_ih: V,
    pub w_hh: V,
    pub b_ih: V,
    pub b_hh: V,
}

/// Bidirectional GRU: the two directions run over the sequence in opposite
/// orders and their states are concatenated per frame.
#[derive(Debug, Clone, Copy)]
pub struct BiGru<V> {
    pub forward: GruCell<V>,
    pub backward: GruCell<V>,
}

struct DirValues<T> {
    w_ih: std::rc::Rc<Tensor<T>>,
    w_hh: std::rc::Rc<Tensor<T>>,
}

/// Activations saved per step, each laid out `[t × n × h]` in step order.
struct Trace<T> {
    r: Vec<T>,
    z: Vec<T>,
    cand: Vec<T>,
    hh_n: Vec<T>,
    h_prev: Vec<T>,
}

struct Dims {
    n: usize,
    t: usize,
    d: usize,
    h: usize,
    /// Per-sample sequence lengths; frames at or beyond a length are skipped.
    lengths: Vec<usize>,
}

impl Dims {
    /// Frame visited by sample `b` at `step`, or `None` once its sequence ended.
    fn time(&self, b: usize, step: usize, reverse: bool) -> Option<usize> {
        let len = self.lengths[b];
        if step >= len {
            None
        } else if reverse {
            Some(len - 1 - step)
        } else {
            Some(step)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_direction<T: Real>(
    dims: &Dims,
    x: &[T],
    w_ih: &[T],
    w_hh: &[T],
    b_ih: &[T],
    b_hh: &[T],
    reverse: bool,
    out: &mut [T],
    out_offset: usize,
) -> Trace<T> {
    let Dims { n, t, d, h, .. } = *dims;
    let g3 = 3 * h;
    let mut xi = Vec::with_capacity(n * t * g3);
    for _ in 0..n * t {
        xi.extend_from_slice(b_ih);
    }
    gemm_nt(n * t, d, g3, x, w_ih, &mut xi, T::one());

    let mut trace = Trace {
        r: vec![T::zero(); t * n * h],
        z: vec![T::zero(); t * n * h],
        cand: vec![T::zero(); t * n * h],
        hh_n: vec![T::zero(); t * n * h],
        h_prev: vec![T::zero(); t * n * h],
    };
    let mut state = vec![T::zero(); n * h];
    let mut hh = vec![T::zero(); n * g3];
    for step in 0..t {
        for row in hh.chunks_mut(g3) {
            row.copy_from_slice(b_hh);
        }
        gemm_nt(n, h, g3, &state, w_hh, &mut hh, T::one());
        let base = step * n * h;
        trace.h_prev[base..base + n * h].copy_from_slice(&state);
        for b in 0..n {
            let Some(tau) = dims.time(b, step, reverse) else {
                continue;
            };
            let xrow = &xi[(b * t + tau) * g3..(b * t + tau + 1) * g3];
            let hrow = &hh[b * g3..(b + 1) * g3];
            for j in 0..h {
                let r = sigmoid(xrow[j] + hrow[j]);
                let z = sigmoid(xrow[h + j] + hrow[h + j]);
                let cand = (xrow[2 * h + j] + r * hrow[2 * h + j]).tanh();
                let k = base + b * h + j;
                let hp = state[b * h + j];
                let hn = (T::one() - z) * cand + z * hp;
                trace.r[k] = r;
                trace.z[k] = z;
                trace.cand[k] = cand;
                trace.hh_n[k] = hrow[2 * h + j];
                state[b * h + j] = hn;
                out[(b * t + tau) * 2 * h + out_offset + j] = hn;
            }
        }
    }
    trace
}

struct DirGrads<T> {
    w_ih: Vec<T>,
    w_hh: Vec<T>,
    b_ih: Vec<T>,
    b_hh: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
fn backprop_direction<T: Real>(
    dims: &Dims,
    x: &[T],
    w_ih: &[T],
    w_hh: &[T],
    trace: &Trace<T>,
    grad_out: &[T],
    out_offset: usize,
    reverse: bool,
    dx: Option<&mut [T]>,
) -> DirGrads<T> {
    let Dims { n, t, d, h, .. } = *dims;
    let g3 = 3 * h;
    let mut dxi = vec![T::zero(); n * t * g3];
    let mut dw_hh = vec![T::zero(); g3 * h];
    let mut db_hh = vec![T::zero(); g3];
    let mut dh = vec![T::zero(); n * h];
    let mut dhh = vec![T::zero(); n * g3];
    let one = T::one();
    for step in (0..t).rev() {
        let base = step * n * h;
        for b in 0..n {
            let Some(tau) = dims.time(b, step, reverse) else {
                // the state passes through untouched
                dhh[b * g3..(b + 1) * g3].fill(T::zero());
                continue;
            };
            for j in 0..h {
                let k = base + b * h + j;
                let dhj = dh[b * h + j] + grad_out[(b * t + tau) * 2 * h + out_offset + j];
                let (r, z, cand, hp) = (trace.r[k], trace.z[k], trace.cand[k], trace.h_prev[k]);
                let d_cand = dhj * (one - z);
                let dz = dhj * (hp - cand);
                let da_n = d_cand * (one - cand * cand);
                let dr = da_n * trace.hh_n[k];
                let da_r = dr * r * (one - r);
                let da_z = dz * z * (one - z);
                let xrow = &mut dxi[(b * t + tau) * g3..(b * t + tau + 1) * g3];
                xrow[j] = da_r;
                xrow[h + j] = da_z;
                xrow[2 * h + j] = da_n;
                let hrow = &mut dhh[b * g3..(b + 1) * g3];
                hrow[j] = da_r;
                hrow[h + j] = da_z;
                hrow[2 * h + j] = da_n * r;
                dh[b * h + j] = dhj * z;
            }
        }
        gemm_nn(n, g3, h, &dhh, w_hh, &mut dh, T::one());
        gemm_tn(
            g3,
            n,
            h,
            &dhh,
            &trace.h_prev[base..base + n * h],
            &mut dw_hh,
            T::one(),
        );
        for row in dhh.chunks(g3) {
            for (acc, &v) in db_hh.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    let mut dw_ih = vec![T::zero(); g3 * d];
    gemm_tn(g3, n * t, d, &dxi, x, &mut dw_ih, T::zero());
    let mut db_ih = vec![T::zero(); g3];
    for row in dxi.chunks(g3) {
        for (acc, &v) in db_ih.iter_mut().zip(row) {
            *acc += v;
        }
    }
    if let Some(dx) = dx {
        gemm_nn(n * t, g3, d, &dxi, w_ih, dx, T::one());
    }
    DirGrads {
        w_ih: dw_ih,
        w_hh: dw_hh,
        b_ih: db_ih,
        b_hh: db_hh,
    }
}

impl<'g, T: Real> Var<'g, T> {
    /// Bidirectional GRU over `[t×d]` or `[n×t×d]`, returning `[.., t, 2h]`
    /// with the forward-direction state first. Initial states are zero.
    ///
    /// Gates follow `r = σ(W_ir x + b_ir + W_hr h + b_hr)`,
    /// `z = σ(W_iz x + b_iz + W_hz h + b_hz)`,
    /// `ñ = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))`,
    /// `h' = (1 − z) ⊙ ñ + z ⊙ h`.
    pub fn bigru(self, params: &BiGru<Var<'g, T>>) -> Result<Var<'g, T>> {
        self.bigru_lengths(params, None)
    }

    /// [`Var::bigru`] where sample `s` only spans its first `lengths[s]`
    /// frames: the reverse direction starts at the last valid frame and
    /// outputs beyond a sample's length are zero.
    pub fn bigru_lengths(
        self,
        params: &BiGru<Var<'g, T>>,
        lengths: Option<&[usize]>,
    ) -> Result<Var<'g, T>> {
        let x = self.value();
        let (n, t, d) = match x.shape() {
            [t, d] => (1, *t, *d),
            [n, t, d] => (*n, *t, *d),
            s => {
                return Err(TensorError::Rank {
                    op: "bigru",
                    expected: 3,
                    shape: s.to_vec(),
                })
            }
        };
        let cells = [params.forward, params.backward];
        let h = cells[0].w_hh.value().shape().last().copied().unwrap_or(0);
        for cell in &cells {
            let ok = cell.w_ih.shape() == [3 * h, d]
                && cell.w_hh.shape() == [3 * h, h]
                && cell.b_ih.shape() == [3 * h]
                && cell.b_hh.shape() == [3 * h];
            if !ok {
                return Err(TensorError::ShapeMismatch {
                    op: "bigru",
                    lhs: x.shape().to_vec(),
                    rhs: cell.w_ih.shape(),
                });
            }
        }
        let lengths = match lengths {
            None => vec![t; n],
            Some(l) if l.len() == n && l.iter().all(|&v| v <= t) => l.to_vec(),
            Some(l) => {
                return Err(TensorError::invalid(
                    "bigru",
                    format!("lengths {l:?} do not fit {n} sequences of {t} frames"),
                ))
            }
        };
        let dims = Dims {
            n,
            t,
            d,
            h,
            lengths,
        };
        let mut out = vec![T::zero(); n * t * 2 * h];
        let mut traces = Vec::with_capacity(2);
        let mut values = Vec::with_capacity(2);
        for (dir, cell) in cells.iter().enumerate() {
            let (w_ih, w_hh, b_ih, b_hh) = (
                cell.w_ih.value(),
                cell.w_hh.value(),
                cell.b_ih.value(),
                cell.b_hh.value(),
            );
            traces.push(run_direction(
                &dims,
                x.data(),
                w_ih.data(),
                w_hh.data(),
                b_ih.data(),
                b_hh.data(),
                dir == 1,
                &mut out,
                dir * h,
            ));
            values.push(DirValues { w_ih, w_hh });
        }
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().unwrap() = 2 * h;
        let inputs = [
            self,
            cells[0].w_ih,
            cells[0].w_hh,
            cells[0].b_ih,
            cells[0].b_hh,
            cells[1].w_ih,
            cells[1].w_hh,
            cells[1].b_ih,
            cells[1].b_hh,
        ];
        Ok(self.graph().op(
            "bigru",
            Tensor::from_parts(out_shape, out),
            &inputs,
            Box::new(move |g, needs| {
                let mut dx = needs[0].then(|| vec![T::zero(); x.numel()]);
                let mut grads = vec![None; 9];
                for dir in 0..2 {
                    let dg = backprop_direction(
                        &dims,
                        x.data(),
                        values[dir].w_ih.data(),
                        values[dir].w_hh.data(),
                        &traces[dir],
                        g.data(),
                        dir * h,
                        dir == 1,
                        dx.as_deref_mut(),
                    );
                    let o = 1 + 4 * dir;
                    grads[o] = Some(Tensor::from_parts(vec![3 * h, d], dg.w_ih));
                    grads[o + 1] = Some(Tensor::from_parts(vec![3 * h, h], dg.w_hh));
                    grads[o + 2] = Some(Tensor::from_parts(vec![3 * h], dg.b_ih));
                    grads[o + 3] = Some(Tensor::from_parts(vec![3 * h], dg.b_hh));
                }
                grads[0] = dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d));
                grads
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    fn params<'g>(
        g: &'g Graph<f64>,
        d: usize,
        h: usize,
        fill: impl Fn(usize) -> f64,
    ) -> BiGru<Var<'g, f64>> {
        let mut k = 0;
        let mut next = |shape: Vec<usize>| {
            let t = Tensor::from_fn(shape, |i| fill(k * 1000 + i));
            k += 1;
            g.param(t)
        };
        let mut cell = || GruCell {
            w_ih: next(vec![3 * h, d]),
            w_hh: next(vec![3 * h, h]),
            b_ih: next(vec![3 * h]),
            b_hh: next(vec![3 * h]),
        };
        BiGru {
            forward: cell(),
            backward: cell(),
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let g = Graph::<f64>::new();
        let p = params(&g, 2, 3, |_| 0.0);
        let x = g.constant(Tensor::from_fn([4, 2], |i| i as f64));
        let y = x.bigru(&p).unwrap().value();
        assert_eq!(y.shape(), &[4, 6]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_directions_agree() {
        let g = Graph::<f64>::new();
        // identical parameters for both directions
        let p = params(&g, 2, 2, |i| ((i % 1000) as f64 * 0.37).sin());
        let x = g.constant(Tensor::from_f64([1, 2], &[0.3, -0.8]).unwrap());
        let y = x.bigru(&p).unwrap().value();
        assert_eq!(y.data()[..2], y.data()[2..]);
    }

    #[test]
    fn lengths_match_truncated_sequences() {
        let g = Graph::<f64>::new();
        let p = params(&g, 2, 3, |i| ((i % 1000) as f64 * 0.61).cos() * 0.5);
        let x = Tensor::from_fn([2, 6, 2], |i| ((i * 7 % 11) as f64 - 5.0) * 0.2);
        let y = g
            .constant(x.clone())
            .bigru_lengths(&p, Some(&[6, 4]))
            .unwrap()
            .value();
        let short = Tensor::from_fn([4, 2], |i| x.data()[12 + i]);
        let ys = g.constant(short).bigru(&p).unwrap().value();
        assert_eq!(&y.data()[36..36 + 24], ys.data());
        assert!(y.data()[60..].iter().all(|&v| v == 0.0));
        let full = g.constant(x).bigru(&p).unwrap().value();
        assert_eq!(&y.data()[..36], &full.data()[..36]);
        assert!(g
            .constant(Tensor::zeros([2, 6, 2]))
            .bigru_lengths(&p, Some(&[7, 1]))
            .is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = Graph::<f64>::new();
        let p = params(&g, 3, 2, |_| 0.1);
        let x = g.constant(Tensor::zeros([4, 2]));
        assert!(x.bigru(&p).is_err());
    }
}
