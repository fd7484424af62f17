//! Prediction attribution: Integrated Gradients and occlusion sensitivity.
//!
//! Both methods explain a scalar score `F_target(x)`. For a [`ModelGraph`]
//! that score is the softmax probability of the target class; the
//! [`TargetScore`] trait lets analytic models stand in for checks.

mod ig;
mod occlusion;
mod render;

pub use ig::{integrated_gradients, AttributionMap, IgConfig};
pub use occlusion::{occlusion_map, Heatmap, OcclusionConfig};
pub use render::{render_heatmap, threshold_mask, AttributionGrid, GrayImage, RenderMode};

use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::tensor::Tensor;

/// A differentiable scalar score per image and target.
pub trait TargetScore {
    /// `[C,H,W]` of one image.
    fn input_shape(&self) -> [usize; 3];

    fn num_targets(&self) -> usize;

    /// `F_target` for every image in a `[B,C,H,W]` batch.
    fn scores(&self, batch: &Tensor, target: usize) -> Result<Vec<f64>>;

    /// Scores and `∂F_target/∂x` for every image (gradient shaped like `batch`).
    fn scores_and_gradients(&self, batch: &Tensor, target: usize) -> Result<(Vec<f64>, Tensor)>;
}

impl TargetScore for ModelGraph {
    fn input_shape(&self) -> [usize; 3] {
        ModelGraph::input_shape(self)
    }

    fn num_targets(&self) -> usize {
        self.num_classes()
    }

    fn scores(&self, batch: &Tensor, target: usize) -> Result<Vec<f64>> {
        let probs = self.probabilities(batch)?;
        let k = self.num_classes();
        Ok(probs.data().chunks_exact(k).map(|row| row[target]).collect())
    }

    fn scores_and_gradients(&self, batch: &Tensor, target: usize) -> Result<(Vec<f64>, Tensor)> {
        let mut pass = self.forward_tape(batch, true, false)?;
        let probs = pass.tape.softmax(pass.logits)?;
        let k = self.num_classes();
        let scores = pass
            .tape
            .value(probs)
            .data()
            .chunks_exact(k)
            .map(|row| row[target])
            .collect();
        // Images are independent, so the gradient of the batch sum splits per image.
        let total = pass.tape.sum_column(probs, target)?;
        let mut grads = pass.tape.backward(total)?;
        let g = grads.take(pass.input).expect("input leaf requires grad");
        Ok((scores, g))
    }
}

/// `F(x) = w · x`, an analytic reference model.
#[derive(Clone, Debug)]
pub struct LinearScore {
    pub weights: Tensor,
}

impl TargetScore for LinearScore {
    fn input_shape(&self) -> [usize; 3] {
        let s = self.weights.shape();
        [s[0], s[1], s[2]]
    }

    fn num_targets(&self) -> usize {
        1
    }

    fn scores(&self, batch: &Tensor, _target: usize) -> Result<Vec<f64>> {
        let n = self.weights.numel();
        if batch.numel() % n != 0 || batch.shape()[1..] != *self.weights.shape() {
            return Err(Error::shape(
                "linear score",
                format!("batch {:?} vs weights {:?}", batch.shape(), self.weights.shape()),
            ));
        }
        Ok(batch
            .data()
            .chunks_exact(n)
            .map(|img| img.iter().zip(self.weights.data()).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn scores_and_gradients(&self, batch: &Tensor, target: usize) -> Result<(Vec<f64>, Tensor)> {
        let scores = self.scores(batch, target)?;
        let mut g = Vec::with_capacity(batch.numel());
        for _ in 0..scores.len() {
            g.extend_from_slice(self.weights.data());
        }
        Ok((scores, Tensor::new(batch.shape().to_vec(), g)?))
    }
}

pub(crate) fn check_image(model: &impl TargetScore, image: &Tensor, target: usize) -> Result<()> {
    if image.shape() != model.input_shape() {
        return Err(Error::invalid(format!(
            "image shape {:?} does not match model input {:?}",
            image.shape(),
            model.input_shape()
        )));
    }
    if target >= model.num_targets() {
        return Err(Error::invalid(format!(
            "target {target} outside [0, {})",
            model.num_targets()
        )));
    }
    Ok(())
}
