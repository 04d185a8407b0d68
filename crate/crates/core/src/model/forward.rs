use amn_tensor::{BatchNormMode, BiGru, Graph, GruCell, Real, RunningStats, Tensor, Var};

use super::{init_params, pool, ModelConfig, ParamSet};
use crate::affinity::{
    adapt_shared, apply_grad_mode, compute_affinity, mixup_decoder, mixup_encoder_shared,
    project_to_classes,
};
use crate::audio::MelSpectrogram;
use crate::{Error, Result};

/// Frame and clip probabilities for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction<T> {
    /// `[t, c]`
    pub probs: Tensor<T>,
    /// `[c]`
    pub clip_probs: Tensor<T>,
    pub valid_frames: usize,
}

/// Graph handles produced by one forward pass.
pub struct ForwardOutput<'g, T: Real> {
    /// `[n, t, c]`
    pub probs: Var<'g, T>,
    /// `[n, c]`
    pub clip_probs: Var<'g, T>,
    /// One handle per learnable tensor, in [`ParamSet`] order.
    pub params: Vec<Var<'g, T>>,
    /// Number of affinity matrices built at resolutions 1/2 and 1/4.
    pub affinity_builds: [usize; 2],
    /// The affinity at each resolution, when one was built.
    pub affinities: [Option<Var<'g, T>>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
}

fn resolution_index(res: usize) -> Option<usize> {
    match res {
        2 => Some(0),
        4 => Some(1),
        _ => None,
    }
}

/// Smallest internal length the decoder can up-sample from.
const MIN_FRAMES: usize = 8;

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        Ok(Self { config, params })
    }

    /// Batched forward pass over `x: [n, t, bands]` whose sample `s` holds
    /// `valid[s]` real frames followed by zero padding. Train mode uses and
    /// updates batch-norm batch statistics; with `trainable`, parameters are
    /// graph leaves that receive gradients.
    pub fn forward<'g>(
        &mut self,
        g: &'g Graph<T>,
        x: &Tensor<T>,
        valid: &[usize],
        mode: BatchNormMode,
        trainable: bool,
    ) -> Result<ForwardOutput<'g, T>> {
        let ParamSet {
            tensors,
            names,
            bn_stats,
        } = &mut self.params;
        run(
            g,
            &self.config,
            names,
            tensors,
            bn_stats,
            x,
            valid,
            mode,
            trainable,
        )
    }

    /// Eval-mode forward that leaves the running statistics untouched.
    pub fn forward_eval<'g>(
        &self,
        g: &'g Graph<T>,
        x: &Tensor<T>,
        valid: &[usize],
    ) -> Result<ForwardOutput<'g, T>> {
        let mut stats = self.params.bn_stats.clone();
        run(
            g,
            &self.config,
            &self.params.names,
            &self.params.tensors,
            &mut stats,
            x,
            valid,
            BatchNormMode::Eval,
            false,
        )
    }

    /// Single-clip inference without padding.
    pub fn predict(&self, features: &MelSpectrogram) -> Result<FramePrediction<T>> {
        let (t, f) = (features.frames_len(), features.bands());
        let x = features.frames.cast::<T>().reshape([1, t, f])?;
        let g = Graph::new();
        let out = self.forward_eval(&g, &x, &[t])?;
        let c = self.config.classes;
        Ok(FramePrediction {
            probs: (*out.probs.value()).clone().reshape([t, c])?,
            clip_probs: (*out.clip_probs.value()).clone().reshape([c])?,
            valid_frames: t,
        })
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Internal length a clip of `v` frames would be padded to on its own.
fn padded_len(v: usize) -> usize {
    v.div_ceil(4).max(MIN_FRAMES / 4) * 4
}

/// Zeroes time frames at or beyond each sample's valid length in
/// `h: [n, c, t, f]`; a no-op when nothing is padded.
fn mask_time<'g, T: Real>(h: Var<'g, T>, valid: &[usize]) -> Result<Var<'g, T>> {
    let s = h.shape();
    let (n, c, t, f) = (s[0], s[1], s[2], s[3]);
    if valid.iter().all(|&v| v >= t) {
        return Ok(h);
    }
    let mask = Tensor::from_fn([n, c, t, f], |i| {
        let (sample, frame) = (i / (c * t * f), (i / f) % t);
        if frame < valid[sample] {
            T::one()
        } else {
            T::zero()
        }
    });
    Ok(h.mul(h.graph().constant(mask))?)
}

/// Doubles the time axis of `z: [n, t, c]` sample by sample: sample `s`
/// interpolates its first `span[s]` frames onto `2·span[s]` output frames
/// with end points aligned, after replicating frame `valid[s] − 1` over the
/// frames in between. Output frames past `2·span[s]` are zero, so each clip
/// is up-sampled exactly as it would be without batch padding.
fn upsample_per_sample<'g, T: Real>(
    z: Var<'g, T>,
    valid: &[usize],
    span: &[usize],
) -> Result<Var<'g, T>> {
    let (n, t) = (z.shape()[0], z.shape()[1]);
    let out_t = 2 * t;
    let mut m = vec![T::zero(); n * out_t * t];
    for s in 0..n {
        let (src, dst) = (span[s], 2 * span[s]);
        let last = valid[s].min(src) - 1;
        for i in 0..dst {
            let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            let w = pos - lo as f64;
            let row = &mut m[(s * out_t + i) * t..(s * out_t + i + 1) * t];
            row[lo.min(last)] += T::of(1.0 - w);
            row[hi.min(last)] += T::of(w);
        }
    }
    let m = z.graph().constant(Tensor::new([n, out_t, t], m)?);
    Ok(m.matmul(z)?)
}

#[allow(clippy::too_many_arguments)]
fn run<'g, T: Real>(
    g: &'g Graph<T>,
    cfg: &ModelConfig,
    names: &[String],
    tensors: &[Tensor<T>],
    bn_stats: &mut [RunningStats<T>],
    x: &Tensor<T>,
    valid: &[usize],
    mode: BatchNormMode,
    trainable: bool,
) -> Result<ForwardOutput<'g, T>> {
    let shape = x.shape();
    let [n, t, bands] = shape[..] else {
        return Err(amn_tensor::TensorError::Rank {
            op: "forward",
            expected: 3,
            shape: shape.to_vec(),
        }
        .into());
    };
    if bands != cfg.mel_bands {
        return Err(Error::config(format!(
            "expected {} bands, got {bands}",
            cfg.mel_bands
        )));
    }
    if valid.len() != n || valid.iter().any(|&v| v == 0 || v > t) {
        return Err(Error::config(format!(
            "valid lengths {valid:?} do not fit {n} clips of {t} frames"
        )));
    }
    let params: Vec<Var<'g, T>> = tensors
        .iter()
        .map(|p| {
            if trainable {
                g.param(p.clone())
            } else {
                g.constant(p.clone())
            }
        })
        .collect();
    let p = |name: &str| -> Var<'g, T> {
        let i = names
            .iter()
            .position(|x| x == name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        params[i]
    };

    // pad time to a multiple of 4 (and enough frames to up-sample from)
    let tp = padded_len(t);
    let input = if tp == t {
        x.clone()
    } else {
        let mut data = vec![T::zero(); n * tp * bands];
        for s in 0..n {
            data[s * tp * bands..(s * tp + t) * bands]
                .copy_from_slice(&x.data()[s * t * bands..(s + 1) * t * bands]);
        }
        Tensor::new([n, tp, bands], data)?
    };
    let valid_at = |res: usize| -> Vec<usize> { valid.iter().map(|&v| ceil_div(v, res)).collect() };

    let am = &cfg.am;
    let mut h = g.constant(input).reshape([n, 1, tp, bands])?;
    let mut res = 1;
    let mut builds = [0usize; 2];
    let mut affinities: [Option<Var<'g, T>>; 2] = [None, None];
    let mut enc_matrix: [Option<Var<'g, T>>; 2] = [None, None];
    let mut dec_matrix: [Option<Var<'g, T>>; 2] = [None, None];
    let mut enc_applied = [false; 2];

    let build = |h: Var<'g, T>,
                 res: usize,
                 ri: usize|
     -> Result<(Var<'g, T>, Option<Var<'g, T>>, Var<'g, T>)> {
        let v = valid_at(res);
        let x_tilde = project_to_classes(h, p(&format!("am{res}.proj")))?;
        let a = compute_affinity(x_tilde, am.tau, Some(&v))?;
        let (a_enc, a_dec) = apply_grad_mode(a, am.grad_mode);
        let enc = if am.placement.encoder[ri] {
            Some(adapt_shared(a_enc, am.encoder_adapt_normalize, Some(&v))?)
        } else {
            None
        };
        Ok((a, enc, a_dec))
    };

    for i in 0..cfg.blocks() {
        h = h.batchnorm2d(
            p(&format!("block{i}.bn.gamma")),
            p(&format!("block{i}.bn.beta")),
            &mut bn_stats[i],
            mode,
        )?;
        h = mask_time(h, &valid_at(res))?;
        h = h.conv2d_same(
            p(&format!("block{i}.conv.weight")),
            p(&format!("block{i}.conv.bias")),
        )?;
        h = h.leaky_relu(T::of(cfg.leaky_slope));
        if let Some(ri) = resolution_index(res) {
            if let (Some(m), false) = (enc_matrix[ri], enc_applied[ri]) {
                h = mixup_encoder_shared(h, m)?;
                enc_applied[ri] = true;
            }
        }
        let (ft, ff) = (cfg.time_down_factors[i], cfg.freq_down_factors[i]);
        h = h.lp_pool(T::of(cfg.lp_pool_p), ft, ff)?;
        res *= ft;
        if let Some(ri) = resolution_index(res) {
            if am.placement.uses(ri) && affinities[ri].is_none() {
                let (a, enc, dec) = build(h, res, ri)?;
                builds[ri] += 1;
                affinities[ri] = Some(a);
                enc_matrix[ri] = enc;
                dec_matrix[ri] = Some(dec);
            }
        }
    }
    // an encoder site with no conv block after its source mixes the source itself
    for ri in 0..2 {
        if let (Some(m), false) = (enc_matrix[ri], enc_applied[ri]) {
            h = mixup_encoder_shared(h, m)?;
        }
    }

    let hs = h.shape();
    let (c_last, t4, f_last) = (hs[1], hs[2], hs[3]);
    let seq = h
        .permute(&[0, 2, 1, 3])?
        .reshape([n, t4, c_last * f_last])?;
    let cell = |dir: &str| GruCell {
        w_ih: p(&format!("gru.{dir}.w_ih")),
        w_hh: p(&format!("gru.{dir}.w_hh")),
        b_ih: p(&format!("gru.{dir}.b_ih")),
        b_hh: p(&format!("gru.{dir}.b_hh")),
    };
    let rnn = seq.bigru_lengths(
        &BiGru {
            forward: cell("fwd"),
            backward: cell("bwd"),
        },
        Some(&valid_at(4)),
    )?;
    let mut z = rnn.linear(p("out.weight"), p("out.bias"))?.sigmoid();

    if let Some(a) = dec_matrix[1] {
        z = mixup_decoder(z, a)?;
    }
    let span4: Vec<usize> = valid.iter().map(|&v| padded_len(v) / 4).collect();
    let span2: Vec<usize> = span4.iter().map(|&v| 2 * v).collect();
    z = upsample_per_sample(z, &valid_at(4), &span4)?;
    if let Some(a) = dec_matrix[0] {
        z = mixup_decoder(z, a)?;
    }
    z = upsample_per_sample(z, &valid_at(2), &span2)?;
    let probs = if tp == t { z } else { z.narrow(1, 0, t)? };
    let clip_probs = pool(probs, valid, cfg.pooling)?;
    Ok(ForwardOutput {
        probs,
        clip_probs,
        params,
        affinity_builds: builds,
        affinities,
    })
}
