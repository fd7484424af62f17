use std::collections::BTreeMap;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels;
use crate::model::{argmax, FreezeMode, ModelGraph};
use crate::tensor::Tensor;

use super::adam::{adam_step, AdamState};
use super::augment::AugmentConfig;
use super::schedule::StepLrSchedule;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: FreezeMode,
    pub schedule: StepLrSchedule,
    pub augment: AugmentConfig,
    /// Drives shuffling and augmentation sampling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            mode: FreezeMode::FineTuning,
            schedule: StepLrSchedule::default(),
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean cross-entropy over the epoch.
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub test_accuracy: Option<f64>,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn final_lr(&self) -> f64 {
        self.epochs.last().map_or(0.0, |r| r.lr)
    }
}

// `Instant::now` panics on wasm32-unknown-unknown; the browser build reports zero.
mod clock {
    #[cfg(not(target_arch = "wasm32"))]
    pub type Mark = std::time::Instant;
    #[cfg(target_arch = "wasm32")]
    pub type Mark = ();

    #[cfg(not(target_arch = "wasm32"))]
    pub fn start() -> Mark {
        std::time::Instant::now()
    }
    #[cfg(target_arch = "wasm32")]
    pub fn start() -> Mark {}

    #[cfg(not(target_arch = "wasm32"))]
    pub fn elapsed(m: Mark) -> std::time::Duration {
        m.elapsed()
    }
    #[cfg(target_arch = "wasm32")]
    pub fn elapsed(_: Mark) -> std::time::Duration {
        std::time::Duration::ZERO
    }
}

/// Mini-batch training of `model` on raw `[3,H,W]` images in [0,1].
///
/// Per epoch: seeded shuffle (last partial batch kept), per-sample
/// augmentation, cross-entropy, one Adam step per batch on unfrozen
/// parameters at the schedule's rate for that epoch. `test_set`, when given,
/// is evaluated once after the last epoch.
pub fn train(
    model: &mut ModelGraph,
    train_set: &[(Tensor, usize)],
    test_set: Option<&[(Tensor, usize)]>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let started = clock::start();
    model.apply_freeze(cfg.mode);
    model.normalization = cfg.augment.normalization;
    let trainable = model.params().iter().any(|p| !p.frozen);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut images = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (img, label) = &train_set[i];
                let params = cfg.augment.sample(&mut rng);
                images.push(cfg.augment.apply(img, params)?);
                labels.push(*label);
            }
            let batch = Tensor::stack(&images)?;
            let mut pass = model.forward_tape(&batch, false, trainable)?;
            let loss_var = pass.tape.cross_entropy(pass.logits, &labels)?;
            let loss = pass.tape.value(loss_var).data()[0];
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    msg: format!("non-finite loss {loss}"),
                });
            }
            loss_sum += loss * chunk.len() as f64;
            let logits = pass.tape.value(pass.logits);
            let k = logits.shape()[1];
            correct += logits
                .data()
                .chunks_exact(k)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();

            if trainable {
                let mut grads = pass.tape.backward(loss_var)?;
                let mut named = BTreeMap::new();
                for (p, var) in model.params().iter().zip(&pass.params) {
                    if !p.frozen {
                        let g = grads.take(*var).expect("trainable leaf has a gradient");
                        named.insert(p.name.clone(), g);
                    }
                }
                drop(pass);
                adam_step(model.params_mut(), &named, &mut adam, lr)?;
            }
        }
        let n = train_set.len() as f64;
        let record = EpochRecord {
            epoch,
            lr,
            loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
        };
        log::info!(
            "epoch {epoch:>3} lr {lr:.3e} loss {:.5} train_acc {:.4}",
            record.loss,
            record.train_accuracy
        );
        records.push(record);
    }

    let test_accuracy = match test_set {
        Some(set) if !set.is_empty() => Some(evaluate(model, set)?.accuracy()),
        _ => None,
    };
    Ok(TrainReport {
        epochs: records,
        test_accuracy,
        wall_time: clock::elapsed(started),
    })
}

/// Confusion matrix plus per-class true-class probability sums.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Σ softmax probability of the true class, per true class.
    pub true_class_prob_sum: Vec<f64>,
}

impl Evaluation {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.confusion[class].iter().sum()
    }

    /// Mean true-class probability for `class`, `None` without samples.
    pub fn mean_confidence(&self, class: usize) -> Option<f64> {
        let n = self.class_count(class);
        (n > 0).then(|| self.true_class_prob_sum[class] / n as f64)
    }
}

const EVAL_BATCH: usize = 64;

/// Classifies raw `[3,H,W]` images (normalized with the model's settings).
pub fn evaluate(model: &ModelGraph, dataset: &[(Tensor, usize)]) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let k = model.num_classes();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut prob_sum = vec![0.0; k];
    for chunk in dataset.chunks(EVAL_BATCH) {
        let images = chunk
            .iter()
            .map(|(img, _)| model.normalization.apply(img))
            .collect::<Result<Vec<_>>>()?;
        let probs = kernels::softmax(&model.forward(&Tensor::stack(&images)?)?)?;
        for (row, (_, label)) in probs.data().chunks_exact(k).zip(chunk) {
            if *label >= k {
                return Err(Error::invalid(format!("label {label} outside the {k}-class vocabulary")));
            }
            confusion[*label][argmax(row)] += 1;
            prob_sum[*label] += row[*label];
        }
    }
    Ok(Evaluation {
        confusion,
        true_class_prob_sum: prob_sum,
    })
}
