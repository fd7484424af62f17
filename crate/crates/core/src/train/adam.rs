use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::Parameter;
use crate::tensor::Tensor;

/// First/second moment estimates keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of completed steps.
    pub t: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// One bias-corrected Adam update of every unfrozen parameter.
///
/// `grads` must hold a gradient for exactly the unfrozen parameters. Frozen
/// parameters and their moments are left alone. Validation happens before
/// anything is mutated.
pub fn adam_step(
    params: &mut [Parameter],
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    for p in params.iter() {
        match (p.frozen, grads.get(&p.name)) {
            (true, Some(_)) => {
                return Err(Error::invalid(format!("gradient supplied for frozen parameter '{}'", p.name)))
            }
            (false, None) => {
                return Err(Error::invalid(format!("missing gradient for trainable parameter '{}'", p.name)))
            }
            (false, Some(g)) if g.shape() != p.value.shape() => {
                return Err(Error::shape(
                    "adam_step",
                    format!("'{}' is {:?} but gradient is {:?}", p.name, p.value.shape(), g.shape()),
                ))
            }
            _ => {}
        }
    }
    if let Some(name) = grads.keys().find(|k| !params.iter().any(|p| &&p.name == k)) {
        return Err(Error::invalid(format!("gradient for unknown parameter '{name}'")));
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
    for p in params.iter_mut().filter(|p| !p.frozen) {
        let g = &grads[&p.name];
        let m = state
            .m
            .entry(p.name.clone())
            .or_insert_with(|| Tensor::zeros_like(&p.value));
        let v = state
            .v
            .entry(p.name.clone())
            .or_insert_with(|| Tensor::zeros_like(&p.value));
        for (((w, &gi), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
