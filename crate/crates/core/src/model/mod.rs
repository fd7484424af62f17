//! Residual CNN classifiers: config parsing, construction, forward passes,
//! prediction, freeze modes and checkpoints.

mod checkpoint;
mod config;
mod graph;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use config::{LayerSpec, ModelConfig, ResidualBlockSpec, TINY_RESNET};
pub use graph::{argmax, ForwardPass, FreezeMode, ModelGraph, Normalization, Parameter, Prediction};
