//! Run configuration: defaults from a preset, then a `key = value` file,
//! then command-line flags.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use amn_core::affinity::{GradMode, Placement};
use amn_core::eval::EvalParams;
use amn_core::model::{ModelConfig, Pooling};
use amn_core::train::{Precision, TrainConfig};

/// Bad flags, config keys or values; the binary exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Narrow model, small batches: CPU-minute runs.
    Desk,
    /// Full widths and the original batch size and learning rate.
    Standard,
}

impl Preset {
    fn as_str(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Standard => "standard",
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "standard" => Ok(Preset::Standard),
            other => Err(format!(
                "unknown preset {other:?} (expected desk or standard)"
            )),
        }
    }
}

/// Every tunable of a run. The class count is not a key: it comes from the
/// dataset or checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalParams,
    /// Seeds per ablation row.
    pub seeds: usize,
    /// Worker threads; further capped by `AMN_THREADS`.
    pub threads: usize,
}

/// `(key, help)` for every accepted key, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    (
        "preset",
        "desk | standard; resets every other key to the preset's defaults",
    ),
    ("seed", "training seed (first seed of an ablation)"),
    ("seeds", "seeds per ablation row"),
    ("threads", "worker threads (capped by AMN_THREADS)"),
    (
        "model.conv_channels",
        "comma-separated channels per conv block",
    ),
    ("model.kernel", "odd conv kernel size"),
    (
        "model.time_down_factors",
        "time pooling per block, product 4",
    ),
    ("model.freq_down_factors", "frequency pooling per block"),
    ("model.lp_pool_p", "exponent of the l-norm pooling"),
    ("model.gru_hidden", "hidden units per GRU direction"),
    (
        "model.leaky_slope",
        "negative-region slope of the leaky ReLU",
    ),
    ("model.pooling", "linear_softmax | max"),
    (
        "am.placement",
        "none | full | enc | dec | sites such as enc@1/2+dec@1/4",
    ),
    ("am.tau", "affinity temperature"),
    ("am.grad_mode", "full | enc_only | dec_only | none"),
    (
        "am.encoder_adapt_normalize",
        "renormalize the shared encoder kernel (true | false)",
    ),
    ("train.lr", "initial learning rate"),
    ("train.weight_decay", "decoupled weight decay"),
    ("train.batch_size", "clips per batch"),
    ("train.max_epochs", "epoch budget"),
    (
        "train.plateau_patience",
        "epochs without improvement before decay",
    ),
    ("train.plateau_factor", "learning-rate decay factor"),
    (
        "train.plateau_threshold",
        "minimum improvement that resets patience",
    ),
    ("train.precision", "f32 | f64"),
    (
        "eval.threshold",
        "probability threshold for tags and active frames",
    ),
    ("eval.median_window", "odd median filter length in frames"),
    ("eval.segment_seconds", "segment length for segment scoring"),
    ("eval.onset_collar", "onset tolerance in seconds"),
    ("eval.offset_collar", "minimum offset tolerance in seconds"),
    (
        "eval.offset_fraction",
        "offset tolerance as a fraction of the reference duration",
    ),
];

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        // the class count is filled in from the data
        let (model, train) = match preset {
            Preset::Desk => (ModelConfig::desk(10), TrainConfig::desk()),
            Preset::Standard => (ModelConfig::default(), TrainConfig::default()),
        };
        Self {
            preset,
            model,
            train,
            eval: EvalParams::default(),
            seeds: 5,
            threads: default_threads(),
        }
    }

    /// Applies `pairs` in order. A `preset` key anywhere resets the base
    /// before the other keys apply.
    pub fn from_pairs(pairs: &[(String, String)]) -> anyhow::Result<Self> {
        let preset = match pairs.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, v)) => v.parse().map_err(usage)?,
            None => Preset::Desk,
        };
        let mut cfg = Self::preset(preset);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// File pairs first, flags after, so flags win.
    pub fn load(file: Option<&Path>, flags: &[(String, String)]) -> anyhow::Result<Self> {
        let mut pairs = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("{}: {e}", p.display())))?;
                parse_pairs(&text, &p.display().to_string())?
            }
            None => Vec::new(),
        };
        pairs.extend(flags.iter().cloned());
        Self::from_pairs(&pairs)
    }

    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let v = value.trim();
        let bad = |e: &dyn std::fmt::Display| usage(format!("{key} = {v:?}: {e}"));
        macro_rules! num {
            () => {
                v.parse().map_err(|e| bad(&e))?
            };
        }
        if key == "preset" {
            let p: Preset = v.parse().map_err(|e: String| bad(&e))?;
            if p != self.preset {
                *self = Self {
                    threads: self.threads,
                    ..Self::preset(p)
                };
            }
            return Ok(());
        }
        let m = &mut self.model;
        let t = &mut self.train;
        let e = &mut self.eval;
        match key {
            "seed" => t.seed = num!(),
            "seeds" => self.seeds = num!(),
            "threads" => self.threads = num!(),
            "model.conv_channels" => m.conv_channels = list(v).map_err(|e| bad(&e))?,
            "model.kernel" => m.kernel = num!(),
            "model.time_down_factors" => m.time_down_factors = list(v).map_err(|e| bad(&e))?,
            "model.freq_down_factors" => m.freq_down_factors = list(v).map_err(|e| bad(&e))?,
            "model.lp_pool_p" => m.lp_pool_p = num!(),
            "model.gru_hidden" => m.gru_hidden = num!(),
            "model.leaky_slope" => m.leaky_slope = num!(),
            "model.pooling" => m.pooling = v.parse::<Pooling>().map_err(|e| bad(&e))?,
            "am.placement" => m.am.placement = v.parse::<Placement>().map_err(|e| bad(&e))?,
            "am.tau" => m.am.tau = num!(),
            "am.grad_mode" => m.am.grad_mode = v.parse::<GradMode>().map_err(|e| bad(&e))?,
            "am.encoder_adapt_normalize" => m.am.encoder_adapt_normalize = num!(),
            "train.lr" => t.lr = num!(),
            "train.weight_decay" => t.weight_decay = num!(),
            "train.batch_size" => t.batch_size = num!(),
            "train.max_epochs" => t.max_epochs = num!(),
            "train.plateau_patience" => t.plateau_patience = num!(),
            "train.plateau_factor" => t.plateau_factor = num!(),
            "train.plateau_threshold" => t.plateau_threshold = num!(),
            "train.precision" => {
                t.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(bad(&"expected f32 or f64")),
                }
            }
            "eval.threshold" => e.threshold = num!(),
            "eval.median_window" => e.median_window = num!(),
            "eval.segment_seconds" => e.segment_seconds = num!(),
            "eval.onset_collar" => e.event.onset_collar = num!(),
            "eval.offset_collar" => e.event.offset_collar = num!(),
            "eval.offset_fraction" => e.event.offset_fraction = num!(),
            other => return Err(usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Value of `key` as it would be written in a config file.
    pub fn get(&self, key: &str) -> Option<String> {
        let (m, t, e) = (&self.model, &self.train, &self.eval);
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        Some(match key {
            "preset" => self.preset.as_str().into(),
            "seed" => t.seed.to_string(),
            "seeds" => self.seeds.to_string(),
            "threads" => self.threads.to_string(),
            "model.conv_channels" => join(&m.conv_channels),
            "model.kernel" => m.kernel.to_string(),
            "model.time_down_factors" => join(&m.time_down_factors),
            "model.freq_down_factors" => join(&m.freq_down_factors),
            "model.lp_pool_p" => m.lp_pool_p.to_string(),
            "model.gru_hidden" => m.gru_hidden.to_string(),
            "model.leaky_slope" => m.leaky_slope.to_string(),
            "model.pooling" => m.pooling.to_string(),
            "am.placement" => m.am.placement.to_string(),
            "am.tau" => m.am.tau.to_string(),
            "am.grad_mode" => m.am.grad_mode.to_string(),
            "am.encoder_adapt_normalize" => m.am.encoder_adapt_normalize.to_string(),
            "train.lr" => t.lr.to_string(),
            "train.weight_decay" => t.weight_decay.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.max_epochs" => t.max_epochs.to_string(),
            "train.plateau_patience" => t.plateau_patience.to_string(),
            "train.plateau_factor" => t.plateau_factor.to_string(),
            "train.plateau_threshold" => t.plateau_threshold.to_string(),
            "train.precision" => match t.precision {
                Precision::F32 => "f32".into(),
                Precision::F64 => "f64".into(),
            },
            "eval.threshold" => e.threshold.to_string(),
            "eval.median_window" => e.median_window.to_string(),
            "eval.segment_seconds" => e.segment_seconds.to_string(),
            "eval.onset_collar" => e.event.onset_collar.to_string(),
            "eval.offset_collar" => e.event.offset_collar.to_string(),
            "eval.offset_fraction" => e.event.offset_fraction.to_string(),
            _ => return None,
        })
    }

    /// Every key, one `key = value` line each; parses back to `self`.
    pub fn render(&self) -> String {
        let mut s = String::from("# effective configuration\n");
        for (k, _) in KEYS {
            let _ = writeln!(
                s,
                "{k} = {}",
                self.get(k).expect("every listed key renders")
            );
        }
        s
    }

    /// Checks everything that does not depend on the dataset.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate().map_err(|e| usage(e.to_string()))?;
        self.train.validate().map_err(|e| usage(e.to_string()))?;
        let e = &self.eval;
        if e.median_window.is_multiple_of(2) {
            return Err(usage(format!(
                "eval.median_window must be odd, got {}",
                e.median_window
            )));
        }
        if !(e.segment_seconds > 0.0) {
            return Err(usage("eval.segment_seconds must be positive"));
        }
        if self.seeds == 0 {
            return Err(usage("seeds must be at least 1"));
        }
        Ok(())
    }

    /// Worker count after the `AMN_THREADS` cap.
    pub fn worker_threads(&self) -> usize {
        let cap = std::env::var("AMN_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok());
        self.threads.min(cap.unwrap_or(usize::MAX)).max(1)
    }
}

fn list(v: &str) -> Result<Vec<usize>, std::num::ParseIntError> {
    v.split(',').map(|x| x.trim().parse()).collect()
}

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Unknown keys are rejected with their line number.
pub fn parse_pairs(text: &str, origin: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(usage(format!(
                "{origin}:{}: expected key = value, got {line:?}",
                i + 1
            )));
        };
        let k = k.trim();
        if !KEYS.iter().any(|(key, _)| *key == k) {
            return Err(usage(format!(
                "{origin}:{}: unknown config key {k:?}",
                i + 1
            )));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}
