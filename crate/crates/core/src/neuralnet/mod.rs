//! Convolutional text classifier: forward pass, hand-derived gradients,
//! Adam, epoch-level early stopping and gradient verification.

mod adam;
mod checkpoint;
mod config;
pub mod gradcheck;
mod model;
mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::CHECKPOINT_VERSION;
pub use config::TextCnnConfig;
pub use model::{
    argmax, init_model, ConvSlot, LabeledExample, ParamLayout, Prediction, TextCnnModel,
};
pub use train::{train_early_stopped, TrainRecord};
