//! Training recipe: Adam with bias correction, epoch-indexed step decay,
//! rotation/zoom augmentation, freeze modes, and evaluation.

mod adam;
mod augment;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use augment::{augment, rotate, zoom, AugmentConfig, AugmentParams};
pub use schedule::StepLrSchedule;
pub use trainer::{evaluate, train, EpochRecord, Evaluation, TrainConfig, TrainReport};
