use amn_tensor::{Real, Tensor};

/// AdamW moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
        }
    }
}

/// One AdamW update: decoupled decay `p ← p − lr·wd·p`, then the
/// bias-corrected adaptive step.
pub fn adamw_step<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamW<T>,
    lr: f64,
    wd: f64,
) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let (b1t, b2t) = (T::of(b1), T::of(b2));
    let (one_b1, one_b2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    let decay = T::of(1.0 - lr * wd);
    let step_size = T::of(lr / c1);
    let c2_sqrt = T::of(c2.sqrt());
    let eps = T::of(state.eps);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        debug_assert_eq!(p.shape(), g.shape());
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *pi *= decay;
            *mi = b1t * *mi + one_b1 * gi;
            *vi = b2t * *vi + one_b2 * gi * gi;
            let denom = vi.sqrt() / c2_sqrt + eps;
            *pi -= step_size * *mi / denom;
        }
    }
}

/// Reduce-on-plateau learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    best: f64,
    stalled: usize,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64) -> Self {
        Self {
            lr,
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            stalled: 0,
        }
    }

    /// Feeds one epoch's monitored loss; returns the learning rate for the
    /// next epoch.
    pub fn update(&mut self, loss: f64) -> f64 {
        if loss < self.best - self.threshold {
            self.best = loss;
            self.stalled = 0;
        } else {
            self.stalled += 1;
            if self.stalled >= self.patience {
                self.lr *= self.factor;
                self.stalled = 0;
            }
        }
        self.lr
    }

    pub fn stalled_epochs(&self) -> usize {
        self.stalled
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<Tensor<f64>> {
        vec![Tensor::from_f64([1], &[v]).unwrap()]
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = scalar(0.7);
        let mut s = AdamW::new(&p);
        adamw_step(&mut p, &scalar(0.0), &mut s, 1e-3, 0.0);
        assert_eq!(p[0].item(), 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        let mut s = AdamW::new(&p);
        adamw_step(&mut p, &scalar(1.0), &mut s, 1e-3, 0.0);
        assert!((p[0].item() - (1.0 - 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut p = scalar(2.0);
        let mut s = AdamW::new(&p);
        adamw_step(&mut p, &scalar(0.0), &mut s, 0.1, 0.01);
        assert!((p[0].item() - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn plateau_walkthroughs() {
        let mut s = Plateau::new(1e-4, 0.1, 3, 1e-6);
        for l in [1.0, 0.9, 0.8] {
            assert_eq!(s.update(l), 1e-4);
        }
        let mut s = Plateau::new(1e-4, 0.1, 3, 1e-6);
        let lrs: Vec<f64> = [1.0, 1.0, 1.0, 1.0].iter().map(|&l| s.update(l)).collect();
        assert_eq!(&lrs[..3], &[1e-4; 3]);
        assert!((lrs[3] - 1e-5).abs() < 1e-20);
        let mut s = Plateau::new(1e-4, 0.1, 3, 1e-6);
        for l in [1.0, 1.0, 1.0, 0.5, 0.5, 0.5] {
            s.update(l);
        }
        assert_eq!(s.lr, 1e-4);
    }
}
