//! Affinity mixup: class-projected frame similarities used to mix encoder
//! and decoder features at the same time resolution.
//!
//! All functions take a leading batch axis `n`; a single clip is `n = 1`.

use std::fmt;
use std::str::FromStr;

use amn_tensor::{Real, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where mixups are applied. Resolution index 0 is 1/2, index 1 is 1/4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Placement {
    pub encoder: [bool; 2],
    pub decoder: [bool; 2],
}

pub const RESOLUTIONS: [usize; 2] = [2, 4];

impl Placement {
    pub const NONE: Placement = Placement {
        encoder: [false; 2],
        decoder: [false; 2],
    };
    pub const FULL: Placement = Placement {
        encoder: [true; 2],
        decoder: [true; 2],
    };

    pub fn is_empty(&self) -> bool {
        *self == Self::NONE
    }

    /// Whether an affinity is needed at resolution index `r`.
    pub fn uses(&self, r: usize) -> bool {
        self.encoder[r] || self.decoder[r]
    }

    fn site_name(side: &str, r: usize) -> String {
        format!("{side}@1/{}", RESOLUTIONS[r])
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        if *self == Self::FULL {
            return f.write_str("full");
        }
        let mut sites = Vec::new();
        for (side, on) in [("enc", self.encoder), ("dec", self.decoder)] {
            for (r, &used) in on.iter().enumerate() {
                if used {
                    sites.push(Self::site_name(side, r));
                }
            }
        }
        f.write_str(&sites.join("+"))
    }
}

impl FromStr for Placement {
    type Err = Error;

    /// `none`, `full`, `enc`, `dec`, or sites such as `enc@1/2+dec@1/4`
    /// (`,` also separates sites).
    fn from_str(s: &str) -> Result<Self> {
        let mut p = Placement::NONE;
        for part in s.split(['+', ',']).map(str::trim).filter(|x| !x.is_empty()) {
            match part {
                "none" => {}
                "full" | "all" => p = Placement::FULL,
                "enc" => p.encoder = [true; 2],
                "dec" => p.decoder = [true; 2],
                site => {
                    let (side, res) = site
                        .split_once('@')
                        .ok_or_else(|| Error::config(format!("unknown placement {site:?}")))?;
                    let r = match res {
                        "1/2" | "2" => 0,
                        "1/4" | "4" => 1,
                        _ => return Err(Error::config(format!("unknown resolution {res:?}"))),
                    };
                    match side {
                        "enc" => p.encoder[r] = true,
                        "dec" => p.decoder[r] = true,
                        _ => return Err(Error::config(format!("unknown placement side {side:?}"))),
                    }
                }
            }
        }
        Ok(p)
    }
}

/// Which paths the affinity gradient flows through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    #[default]
    Full,
    EncOnly,
    DecOnly,
    None,
}

impl GradMode {
    pub const ALL: [GradMode; 4] = [
        GradMode::None,
        GradMode::EncOnly,
        GradMode::DecOnly,
        GradMode::Full,
    ];

    pub fn encoder_grad(self) -> bool {
        matches!(self, GradMode::Full | GradMode::EncOnly)
    }

    pub fn decoder_grad(self) -> bool {
        matches!(self, GradMode::Full | GradMode::DecOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GradMode::Full => "full",
            GradMode::EncOnly => "enc_only",
            GradMode::DecOnly => "dec_only",
            GradMode::None => "none",
        }
    }
}

impl fmt::Display for GradMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" | "both" => Ok(GradMode::Full),
            "enc_only" | "enc" => Ok(GradMode::EncOnly),
            "dec_only" | "dec" => Ok(GradMode::DecOnly),
            "none" => Ok(GradMode::None),
            other => Err(Error::config(format!("unknown grad mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmConfig {
    pub tau: f64,
    pub placement: Placement,
    pub grad_mode: GradMode,
    pub encoder_adapt_normalize: bool,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            placement: Placement::FULL,
            grad_mode: GradMode::Full,
            encoder_adapt_normalize: true,
        }
    }
}

impl AmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

fn rank_err(op: &'static str, expected: usize, shape: Vec<usize>) -> Error {
    TensorError::Rank {
        op,
        expected,
        shape,
    }
    .into()
}

/// `x̃[s, k] = Σ_b W[k, b]·x[s, b]` for `x: [n, b, t, f]`, `w: [c, b]`.
pub fn project_to_classes<'g, T: Real>(x: Var<'g, T>, w: Var<'g, T>) -> Result<Var<'g, T>> {
    let xs = x.shape();
    let ws = w.shape();
    let [n, b, t, f] = xs[..] else {
        return Err(rank_err("project_to_classes", 4, xs));
    };
    if ws.len() != 2 || ws[1] != b {
        return Err(TensorError::ChannelMismatch {
            op: "project_to_classes",
            input: b,
            expected: ws.get(1).copied().unwrap_or(0),
        }
        .into());
    }
    let c = ws[0];
    let wb = w.reshape([1, c, b])?.expand_axis(0, n)?;
    Ok(wb
        .matmul(x.reshape([n, b, t * f])?)?
        .reshape([n, c, t, f])?)
}

/// Row-stochastic affinity `softmax(−d²/(τ√f))` over the last axis,
/// `[n, c, t, f] → [n, c, t, t]`. With `valid`, columns at or beyond the
/// sample's valid length get zero weight.
pub fn compute_affinity<'g, T: Real>(
    x_tilde: Var<'g, T>,
    tau: f64,
    valid: Option<&[usize]>,
) -> Result<Var<'g, T>> {
    if !(tau > 0.0) {
        return Err(Error::config(format!("tau must be positive, got {tau}")));
    }
    let shape = x_tilde.shape();
    if shape.len() != 4 {
        return Err(rank_err("compute_affinity", 4, shape));
    }
    let f = shape[3] as f64;
    let logits = x_tilde
        .pairwise_sqdist()?
        .scale(T::of(-1.0 / (tau * f.sqrt())));
    Ok(match valid {
        Some(v) if v.iter().any(|&l| l < shape[2]) => logits.masked_softmax_lastdim(v)?,
        _ => logits.softmax_lastdim(),
    })
}

/// Class-averaged `exp(A)`, `[n, c, t, t] → [n, 1, t, t]`, optionally
/// renormalized per row. The single matrix is shared by every encoder
/// channel.
pub fn adapt_shared<'g, T: Real>(
    a: Var<'g, T>,
    normalize: bool,
    valid: Option<&[usize]>,
) -> Result<Var<'g, T>> {
    let shape = a.shape();
    let [n, _, t, _] = shape[..] else {
        return Err(rank_err("adapt_for_encoder", 4, shape));
    };
    let mut m = a.exp().mean_axis(1)?;
    if let Some(v) = valid.filter(|v| v.iter().any(|&l| l < t)) {
        // exp(0) = 1 would otherwise leak weight onto padded columns
        let mask = Tensor::from_fn([n, 1, t, t], |i| {
            let s = i / (t * t);
            if i % t < v[s] {
                T::one()
            } else {
                T::zero()
            }
        });
        m = m.mul(a.graph().constant(mask))?;
    }
    Ok(if normalize { m.normalize_lastdim() } else { m })
}

/// Encoder adaptation replicated over `b_prime` channels: `[n, b′, t, t]`.
pub fn adapt_for_encoder<'g, T: Real>(
    a: Var<'g, T>,
    b_prime: usize,
    normalize: bool,
) -> Result<Var<'g, T>> {
    if b_prime == 0 {
        return Err(Error::config("b_prime must be at least 1"));
    }
    Ok(adapt_shared(a, normalize, None)?.expand_axis(1, b_prime)?)
}

/// `out[s, ch] = Ã[s, ch]·x′[s, ch]` with per-channel matrices
/// `Ã: [n, b′, t, t]` and `x′: [n, b′, t, f′]`.
pub fn mixup_encoder<'g, T: Real>(x_prime: Var<'g, T>, a_tilde: Var<'g, T>) -> Result<Var<'g, T>> {
    let (xs, as_) = (x_prime.shape(), a_tilde.shape());
    let [n, b, t, f] = xs[..] else {
        return Err(rank_err("mixup_encoder", 4, xs));
    };
    if as_ != [n, b, t, t] {
        return Err(TensorError::ShapeMismatch {
            op: "mixup_encoder",
            lhs: as_,
            rhs: xs,
        }
        .into());
    }
    let y = a_tilde
        .reshape([n * b, t, t])?
        .matmul(x_prime.reshape([n * b, t, f])?)?;
    Ok(y.reshape([n, b, t, f])?)
}

/// Same result as [`mixup_encoder`] with a channel-shared matrix
/// `[n, 1, t, t]`, computed as one `t×t` by `t×(b′·f′)` product per sample.
pub fn mixup_encoder_shared<'g, T: Real>(
    x_prime: Var<'g, T>,
    a_shared: Var<'g, T>,
) -> Result<Var<'g, T>> {
    let (xs, as_) = (x_prime.shape(), a_shared.shape());
    let [n, b, t, f] = xs[..] else {
        return Err(rank_err("mixup_encoder", 4, xs));
    };
    if as_ != [n, 1, t, t] {
        return Err(TensorError::ShapeMismatch {
            op: "mixup_encoder",
            lhs: as_,
            rhs: xs,
        }
        .into());
    }
    let frames = x_prime.permute(&[0, 2, 1, 3])?.reshape([n, t, b * f])?;
    let mixed = a_shared.reshape([n, t, t])?.matmul(frames)?;
    Ok(mixed.reshape([n, t, b, f])?.permute(&[0, 2, 1, 3])?)
}

/// Per-class decoder mixing `z̃[s, :, k] = A[s, k]·z′[s, :, k]` for
/// `z′: [n, t, c]`, `A: [n, c, t, t]`.
pub fn mixup_decoder<'g, T: Real>(z_prime: Var<'g, T>, a: Var<'g, T>) -> Result<Var<'g, T>> {
    let (zs, as_) = (z_prime.shape(), a.shape());
    let [n, t, c] = zs[..] else {
        return Err(rank_err("mixup_decoder", 3, zs));
    };
    if as_ != [n, c, t, t] {
        return Err(TensorError::ShapeMismatch {
            op: "mixup_decoder",
            lhs: as_,
            rhs: zs,
        }
        .into());
    }
    let cols = z_prime.permute(&[0, 2, 1])?.reshape([n * c, t, 1])?;
    let mixed = a.reshape([n * c, t, t])?.matmul(cols)?;
    Ok(mixed.reshape([n, c, t])?.permute(&[0, 2, 1])?)
}

/// The affinity as seen by the encoder and decoder paths, with gradient
/// flow cut where the mode asks for it.
pub fn apply_grad_mode<'g, T: Real>(a: Var<'g, T>, mode: GradMode) -> (Var<'g, T>, Var<'g, T>) {
    let enc = if mode.encoder_grad() { a } else { a.detach() };
    let dec = if mode.decoder_grad() { a } else { a.detach() };
    (enc, dec)
}
