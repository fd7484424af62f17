//! Residual-CNN gesture recognition with built-in interpretability.
//!
//! * [`tensor`], [`kernels`], [`autodiff`]: f64 tensors and tape-based reverse mode.
//! * [`model`]: residual classifiers built from a line-oriented config, checkpoints, freeze modes.
//! * [`train`]: Adam, step learning-rate decay, augmentation, epoch loop, evaluation.
//! * [`explain`]: Integrated Gradients and occlusion sensitivity, rendered as PGM heatmaps.
//! * [`stream`]: per-frame classification smoothed by a rolling probability average.
//! * [`dataset`]: class vocabulary, manifests, PPM/PGM codecs, splits, synthetic glyph data.
//! * [`report`], [`cli`]: report artifacts and the `divesight` command line.

pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod kernels;
pub mod model;
pub mod report;
pub mod stream;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
