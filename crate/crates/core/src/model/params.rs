use amn_tensor::{Real, RunningStats, Tensor};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ModelConfig;
use crate::affinity::RESOLUTIONS;
use crate::{Error, Result};

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Zeros,
    Ones,
    Uniform(f64),
    /// Stacked orthogonal `h×h` blocks.
    Orthogonal,
}

/// Named parameter shapes in canonical order, with their initializers.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let k = cfg.kernel;
    let mut cin = 1;
    for (i, &cout) in cfg.conv_channels.iter().enumerate() {
        out.push((format!("block{i}.bn.gamma"), vec![cin], Init::Ones));
        out.push((format!("block{i}.bn.beta"), vec![cin], Init::Zeros));
        let fan_in = (cin * k * k) as f64;
        out.push((
            format!("block{i}.conv.weight"),
            vec![cout, cin, k, k],
            Init::Uniform(fan_in.sqrt().recip()),
        ));
        out.push((format!("block{i}.conv.bias"), vec![cout], Init::Zeros));
        cin = cout;
    }
    for (r, &res) in RESOLUTIONS.iter().enumerate() {
        if cfg.am.placement.uses(r) {
            let b = cfg.channels_at_resolution(res);
            out.push((
                format!("am{res}.proj"),
                vec![cfg.classes, b],
                Init::Uniform((b as f64).sqrt().recip()),
            ));
        }
    }
    let d = cin * cfg.final_bands();
    let h = cfg.gru_hidden;
    for dir in ["fwd", "bwd"] {
        out.push((
            format!("gru.{dir}.w_ih"),
            vec![3 * h, d],
            Init::Uniform((d as f64).sqrt().recip()),
        ));
        out.push((format!("gru.{dir}.w_hh"), vec![3 * h, h], Init::Orthogonal));
        out.push((format!("gru.{dir}.b_ih"), vec![3 * h], Init::Zeros));
        out.push((format!("gru.{dir}.b_hh"), vec![3 * h], Init::Zeros));
    }
    let fan_in = 2 * h;
    out.push((
        "out.weight".into(),
        vec![cfg.classes, fan_in],
        Init::Uniform((fan_in as f64).sqrt().recip()),
    ));
    out.push(("out.bias".into(), vec![cfg.classes], Init::Zeros));
    out
}

/// Parameter names and shapes in canonical order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Learnable tensors plus the batch-norm running statistics, in the order
/// given by [`param_specs`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
    pub bn_stats: Vec<RunningStats<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index(name).map(|i| &self.tensors[i])
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            bn_stats: self
                .bn_stats
                .iter()
                .map(|s| {
                    let c = |v: &[T]| v.iter().map(|x| U::of(x.to_f64_lossless())).collect();
                    RunningStats::from_parts(c(&s.mean), c(&s.var))
                })
                .collect(),
        }
    }

    /// Checks names and shapes against the layout `cfg` implies.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let specs = param_specs(cfg);
        if specs.len() != self.tensors.len() || self.names.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), (n, t)) in specs.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != n || shape.as_slice() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {n} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        let mut cin = 1;
        if self.bn_stats.len() != cfg.blocks() {
            return Err(Error::Checkpoint(
                "batch-norm statistics count mismatch".into(),
            ));
        }
        for (s, &cout) in self.bn_stats.iter().zip(&cfg.conv_channels) {
            if s.channels() != cin {
                return Err(Error::Checkpoint(
                    "batch-norm statistics width mismatch".into(),
                ));
            }
            cin = cout;
        }
        Ok(())
    }
}

fn orthogonal_blocks(rng: &mut ChaCha8Rng, rows: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * h);
    for _ in 0..rows / h {
        let g = DMatrix::<f64>::from_fn(h, h, |_, _| StandardNormal.sample(rng));
        let qr = g.qr();
        let (q, r) = (qr.q(), qr.r());
        // fix column signs so the factorization is unique
        for i in 0..h {
            for j in 0..h {
                let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
                out.push(q[(i, j)] * s);
            }
        }
    }
    out
}

/// Deterministic initialization from `seed`.
pub fn init_params<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<ParamSet<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Vec::new();
    let mut tensors = Vec::new();
    for (name, shape, init) in layout(cfg) {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Uniform(a) => (0..n).map(|_| rng.random_range(-a..a)).collect(),
            Init::Orthogonal => orthogonal_blocks(&mut rng, shape[0], shape[1]),
        };
        tensors.push(Tensor::from_f64(shape, &data)?);
        names.push(name);
    }
    let mut bn_stats = Vec::new();
    let mut cin = 1;
    for &c in &cfg.conv_channels {
        bn_stats.push(RunningStats::new(cin));
        cin = c;
    }
    Ok(ParamSet {
        names,
        tensors,
        bn_stats,
    })
}
