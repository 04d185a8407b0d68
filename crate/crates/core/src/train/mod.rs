//! Multiple-instance training from clip-level labels.

mod batch;
mod loss;
mod optim;
mod trainer;

pub use batch::{collate, Batch, Example};
pub use loss::{bce_loss, PROB_CLAMP};
pub use optim::{adamw_step, AdamW, Plateau};
pub use trainer::{
    evaluate_loss, history_csv, parse_history_csv, train, EpochRecord, Precision, TrainConfig,
    TrainOutcome,
};
