//! The full headline model: embedding layer, bidirectional recurrence and a
//! sigmoid output node, plus its optimizer, training loop and on-disk format.

mod adam;
mod checkpoint;
mod config;
mod model;
mod train;

pub use adam::{adam_update, clip_global_norm, AdamConfig, AdamState, NamedParams};
pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, FORMAT_VERSION, MAGIC};
pub use config::{Features, ModelConfig, MODEL_KEYS};
pub use model::{bce_loss, forward_headline, Classifier, ModelParams, OutputLayer, Prediction, BCE_EPS};
pub use train::{eval_loss, train, train_step, train_with, EpochLog, TrainOutcome};
