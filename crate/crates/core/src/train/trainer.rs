use amn_tensor::{BatchNormMode, Graph, Real, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adamw_step, bce_loss, collate, AdamW, Example, Plateau};
use crate::model::{Model, ModelConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub plateau_threshold: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.01,
            batch_size: 64,
            max_epochs: 100,
            plateau_patience: 3,
            plateau_factor: 0.1,
            plateau_threshold: 1e-6,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    /// Small batches for desk-scale datasets. With only a handful of
    /// updates per epoch the default 1e-4 rate stalls before the plateau
    /// schedule decays it, so the desk rate is ten times larger.
    pub fn desk() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.plateau_patience == 0 {
            return Err(Error::config("plateau_patience must be at least 1"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::config(format!(
                "plateau_factor must lie in (0, 1), got {}",
                self.plateau_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: Model<T>,
    pub best_epoch: usize,
    pub last: Model<T>,
    pub history: Vec<EpochRecord>,
}

/// Mean clip-level cross-entropy with batch-size-1 inference.
pub fn evaluate_loss<T: Real>(model: &Model<T>, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(f64::NAN);
    }
    let c = model.config.classes;
    let mut total = 0.0;
    for e in examples {
        let pred = model.predict(&e.features)?;
        let g = Graph::new();
        let p = g.constant(pred.clip_probs.reshape([1, c])?);
        let y = Tensor::new([1, c], e.target::<T>(c))?;
        total += bce_loss(p, &y)?.value().item().to_f64_lossless();
    }
    Ok(total / examples.len() as f64)
}

/// Trains from `seed`-determined initial parameters. `on_epoch` sees each
/// finished epoch and the current model; returning `false` stops early.
/// Validation loss drives the plateau schedule and best-model selection;
/// with no validation clips the training loss is used instead.
pub fn train<T: Real>(
    train_set: &[Example],
    val_set: &[Example],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &Model<T>) -> bool,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut model = Model::<T>::new(model_cfg.clone(), cfg.seed)?;
    let classes = model_cfg.classes;
    let mut opt = AdamW::new(&model.params.tensors);
    let mut sched = Plateau::new(
        cfg.lr,
        cfg.plateau_factor,
        cfg.plateau_patience,
        cfg.plateau_threshold,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464c_4500);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model<T>)> = None;

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let batch = collate::<T>(&items, classes)?;
            let g = Graph::new();
            let out = model.forward(
                &g,
                &batch.features,
                &batch.valid_lengths,
                BatchNormMode::Train,
                true,
            )?;
            let loss = bce_loss(out.clip_probs, &batch.labels)?;
            let lv = loss.value().item().to_f64_lossless();
            if !lv.is_finite() {
                return Err(Error::Diverged { epoch, loss: lv });
            }
            loss_sum += lv * chunk.len() as f64;
            let mut grads = g.backward(loss)?;
            let grads: Vec<Tensor<T>> = out
                .params
                .iter()
                .map(|&v| grads.remove(v).expect("every parameter is a leaf"))
                .collect();
            adamw_step(
                &mut model.params.tensors,
                &grads,
                &mut opt,
                lr,
                cfg.weight_decay,
            );
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            evaluate_loss(&model, val_set)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: val_loss,
            });
        }
        sched.update(val_loss);
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        };
        history.push(record);
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
        }
        if !on_epoch(&record, &model) {
            break;
        }
    }
    let (_, best_epoch, best) =
        best.ok_or_else(|| Error::config("max_epochs must be at least 1"))?;
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model,
        history,
    })
}

/// `epoch,train_loss,val_loss,lr` with shortest round-trip number formatting.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,lr\n");
    for r in history {
        s.push_str(&format!(
            "{},{:?},{:?},{:?}\n",
            r.epoch, r.train_loss, r.val_loss, r.lr
        ));
    }
    s
}

pub fn parse_history_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut out = Vec::new();
    let err = |line: usize, msg: String| Error::Parse {
        path: "history".into(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "epoch,train_loss,val_loss,lr" => {}
        _ => {
            return Err(err(
                1,
                "expected header epoch,train_loss,val_loss,lr".into(),
            ))
        }
    }
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err(i + 1, format!("expected 4 fields, found {}", f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| err(i + 1, format!("{s:?}: {e}")))
        };
        out.push(EpochRecord {
            epoch: f[0]
                .parse()
                .map_err(|e| err(i + 1, format!("{:?}: {e}", f[0])))?,
            train_loss: num(f[1])?,
            val_loss: num(f[2])?,
            lr: num(f[3])?,
        });
    }
    Ok(out)
}
