use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{check_image, TargetScore};

/// Number of interpolation points evaluated per batched pass.
const CHUNK: usize = 32;

#[derive(Clone, Debug)]
pub struct IgConfig {
    pub steps: usize,
    /// `None` → all zeros (black in normalized space).
    pub baseline: Option<Tensor>,
    pub target: usize,
}

impl IgConfig {
    pub fn new(target: usize) -> Self {
        IgConfig {
            steps: 64,
            baseline: None,
            target,
        }
    }
}

/// Signed per-pixel attributions aligned with the input image.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMap {
    pub values: Tensor,
    pub target: usize,
    pub score_input: f64,
    pub score_baseline: f64,
    /// `|Σ values − (F(x) − F(x'))|`.
    pub completeness_gap: f64,
}

impl AttributionMap {
    pub fn recompute_gap(&self) -> f64 {
        (self.values.sum() - (self.score_input - self.score_baseline)).abs()
    }
}

/// Integrated Gradients along the straight path from the baseline, midpoint
/// Riemann rule with `α_k = (k − ½)/steps`. The gradient sum is accumulated
/// in ascending `k`.
pub fn integrated_gradients(
    model: &impl TargetScore,
    image: &Tensor,
    cfg: &IgConfig,
) -> Result<AttributionMap> {
    check_image(model, image, cfg.target)?;
    if cfg.steps == 0 {
        return Err(Error::invalid("integrated gradients needs steps >= 1"));
    }
    let baseline = match &cfg.baseline {
        Some(b) if b.shape() != image.shape() => {
            return Err(Error::invalid(format!(
                "baseline shape {:?} != image shape {:?}",
                b.shape(),
                image.shape()
            )))
        }
        Some(b) => b.clone(),
        None => Tensor::zeros_like(image),
    };
    let diff: Vec<f64> = image
        .data()
        .iter()
        .zip(baseline.data())
        .map(|(x, b)| x - b)
        .collect();

    let n = image.numel();
    let mut grad_sum = vec![0.0; n];
    let alphas: Vec<f64> = (1..=cfg.steps)
        .map(|k| (k as f64 - 0.5) / cfg.steps as f64)
        .collect();
    for chunk in alphas.chunks(CHUNK) {
        let points: Vec<Tensor> = chunk
            .iter()
            .map(|&a| {
                let data = baseline.data().iter().zip(&diff).map(|(b, d)| b + a * d).collect();
                Tensor::new(image.shape().to_vec(), data)
            })
            .collect::<Result<_>>()?;
        let (_, grads) = model.scores_and_gradients(&Tensor::stack(&points)?, cfg.target)?;
        for g in grads.data().chunks_exact(n) {
            for (acc, v) in grad_sum.iter_mut().zip(g) {
                *acc += v;
            }
        }
    }

    let inv = 1.0 / cfg.steps as f64;
    let values: Vec<f64> = diff.iter().zip(&grad_sum).map(|(d, g)| d * g * inv).collect();
    let ends = model.scores(&Tensor::stack(&[image.clone(), baseline])?, cfg.target)?;
    let mut map = AttributionMap {
        values: Tensor::new(image.shape().to_vec(), values)?,
        target: cfg.target,
        score_input: ends[0],
        score_baseline: ends[1],
        completeness_gap: 0.0,
    };
    map.completeness_gap = map.recompute_gap();
    Ok(map)
}
