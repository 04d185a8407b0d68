use crate::{Real, Result, Tensor, TensorError, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Eval,
}

/// Per-channel running mean and (unbiased) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    initialized: bool,
}

impl<T: Real> RunningStats<T> {
    /// Mean 0, variance 1: usable in eval mode straight away.
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            initialized: true,
        }
    }

    /// Placeholder that must see one training batch before eval mode.
    pub fn uninitialized(channels: usize) -> Self {
        Self {
            initialized: false,
            ..Self::new(channels)
        }
    }

    pub fn from_parts(mean: Vec<T>, var: Vec<T>) -> Self {
        assert_eq!(mean.len(), var.len());
        Self {
            mean,
            var,
            initialized: true,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }
}

impl<'g, T: Real> Var<'g, T> {
    /// Batch normalization over `[b×c×t×f]`. Train mode normalizes with the
    /// per-channel batch statistics over the b, t and f axes and folds them
    /// into `stats` with momentum 0.1; eval mode uses `stats`.
    pub fn batchnorm2d(
        self,
        gamma: Var<'g, T>,
        beta: Var<'g, T>,
        stats: &mut RunningStats<T>,
        mode: BatchNormMode,
    ) -> Result<Var<'g, T>> {
        let (x, gv, bv) = (self.value(), gamma.value(), beta.value());
        let (n, c, h, w) = match x.shape() {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => {
                return Err(TensorError::Rank {
                    op: "batchnorm2d",
                    expected: 4,
                    shape: s.to_vec(),
                })
            }
        };
        for p in [gv.shape(), bv.shape()] {
            if p != [c] {
                return Err(TensorError::ChannelMismatch {
                    op: "batchnorm2d",
                    input: c,
                    expected: p.iter().product(),
                });
            }
        }
        if stats.channels() != c {
            return Err(TensorError::ChannelMismatch {
                op: "batchnorm2d",
                input: c,
                expected: stats.channels(),
            });
        }
        let plane = h * w;
        let count = n * plane;
        let eps = T::of(BN_EPS);
        let channel = |data: &[T], ch: usize| -> Vec<T> {
            (0..n)
                .flat_map(|s| data[(s * c + ch) * plane..(s * c + ch + 1) * plane].to_vec())
                .collect()
        };
        let (mean, inv_std): (Vec<T>, Vec<T>) = match mode {
            BatchNormMode::Train => {
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let v = channel(x.data(), ch);
                    let m = v.iter().copied().sum::<T>() / T::of(count as f64);
                    let ss: T = v.iter().map(|&a| (a - m) * (a - m)).sum();
                    mean[ch] = m;
                    var[ch] = ss / T::of(count as f64);
                    let unbiased = if count > 1 {
                        ss / T::of((count - 1) as f64)
                    } else {
                        var[ch]
                    };
                    let mom = T::of(BN_MOMENTUM);
                    stats.mean[ch] = (T::one() - mom) * stats.mean[ch] + mom * m;
                    stats.var[ch] = (T::one() - mom) * stats.var[ch] + mom * unbiased;
                }
                stats.initialized = true;
                (
                    mean,
                    var.iter().map(|&v| (v + eps).sqrt().recip()).collect(),
                )
            }
            BatchNormMode::Eval => {
                if !stats.initialized {
                    return Err(TensorError::UninitializedStats);
                }
                (
                    stats.mean.clone(),
                    stats
                        .var
                        .iter()
                        .map(|&v| (v + eps).sqrt().recip())
                        .collect(),
                )
            }
        };
        let mut xhat = vec![T::zero(); x.numel()];
        let mut out = vec![T::zero(); x.numel()];
        for s in 0..n {
            for ch in 0..c {
                let r = (s * c + ch) * plane..(s * c + ch + 1) * plane;
                let (m, is, ga, be) = (mean[ch], inv_std[ch], gv.data()[ch], bv.data()[ch]);
                for ((o, xh), &v) in out[r.clone()]
                    .iter_mut()
                    .zip(&mut xhat[r.clone()])
                    .zip(&x.data()[r])
                {
                    *xh = (v - m) * is;
                    *o = ga * *xh + be;
                }
            }
        }
        let shape = x.shape().to_vec();
        Ok(self.graph().op(
            "batchnorm2d",
            Tensor::from_parts(shape.clone(), out),
            &[self, gamma, beta],
            Box::new(move |g, needs| {
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for s in 0..n {
                    for ch in 0..c {
                        let r = (s * c + ch) * plane..(s * c + ch + 1) * plane;
                        for (&gi, &xh) in g.data()[r.clone()].iter().zip(&xhat[r]) {
                            sum_g[ch] += gi;
                            sum_gx[ch] += gi * xh;
                        }
                    }
                }
                let dx = needs[0].then(|| {
                    let mut dx = vec![T::zero(); g.numel()];
                    let cnt = T::of(count as f64);
                    for s in 0..n {
                        for ch in 0..c {
                            let r = (s * c + ch) * plane..(s * c + ch + 1) * plane;
                            let scale = gv.data()[ch] * inv_std[ch];
                            for ((d, &gi), &xh) in dx[r.clone()]
                                .iter_mut()
                                .zip(&g.data()[r.clone()])
                                .zip(&xhat[r])
                            {
                                *d = match mode {
                                    BatchNormMode::Train => {
                                        scale * (gi - (sum_g[ch] + xh * sum_gx[ch]) / cnt)
                                    }
                                    BatchNormMode::Eval => scale * gi,
                                };
                            }
                        }
                    }
                    Tensor::from_parts(shape.clone(), dx)
                });
                vec![
                    dx,
                    needs[1].then(|| Tensor::from_parts(vec![c], sum_gx.clone())),
                    needs[2].then(|| Tensor::from_parts(vec![c], sum_g.clone())),
                ]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    fn run(
        x: Tensor<f64>,
        gamma: f64,
        beta: f64,
        stats: &mut RunningStats<f64>,
        mode: BatchNormMode,
    ) -> Result<Tensor<f64>> {
        let g = Graph::new();
        let c = x.shape()[1];
        let x = g.constant(x);
        let ga = g.constant(Tensor::full([c], gamma));
        let be = g.constant(Tensor::full([c], beta));
        Ok((*x.batchnorm2d(ga, be, stats, mode)?.value()).clone())
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let x = Tensor::full([2, 3, 4, 4], 7.5);
        let y = run(x, 1.0, 0.0, &mut RunningStats::new(3), BatchNormMode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_gamma_gives_beta() {
        let x = Tensor::from_fn([2, 2, 3, 3], |i| (i as f64).sin());
        let y = run(x, 0.0, 0.3, &mut RunningStats::new(2), BatchNormMode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor::from_fn([1, 1, 2, 2], |i| i as f64);
        let mut stats = RunningStats::new(1);
        run(x, 1.0, 0.0, &mut stats, BatchNormMode::Train).unwrap();
        // batch mean 1.5, unbiased variance 5/3
        assert!((stats.mean[0] - 0.15).abs() < 1e-12);
        assert!((stats.var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_requires_initialized_stats() {
        let x = Tensor::ones([1, 2, 2, 2]);
        let mut stats = RunningStats::uninitialized(2);
        assert_eq!(
            run(x.clone(), 1.0, 0.0, &mut stats, BatchNormMode::Eval).unwrap_err(),
            TensorError::UninitializedStats
        );
        run(x.clone(), 1.0, 0.0, &mut stats, BatchNormMode::Train).unwrap();
        assert!(run(x, 1.0, 0.0, &mut stats, BatchNormMode::Eval).is_ok());
    }

    #[test]
    fn eval_with_default_stats_is_near_identity() {
        let x = Tensor::from_fn([1, 1, 2, 2], |i| i as f64);
        let y = run(
            x.clone(),
            1.0,
            0.0,
            &mut RunningStats::new(1),
            BatchNormMode::Eval,
        )
        .unwrap();
        assert!(y.max_abs_diff(&x) < 1e-4);
    }
}
