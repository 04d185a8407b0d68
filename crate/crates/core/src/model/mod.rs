//! The CRNN encoder/decoder with affinity mixup.

mod checkpoint;
mod config;
mod forward;
mod params;
mod pooling;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    FORMAT_VERSION,
};
pub use config::{ModelConfig, Pooling};
pub use forward::{ForwardOutput, FramePrediction, Model};
pub use params::{init_params, param_specs, ParamSet};
pub use pooling::{pool, pool_linear_softmax, pool_max};
