use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::mlp::{MlpGrads, MlpParams};
use crate::NetError;

/// Update rule for [`opt_step`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain stochastic gradient with optional momentum.
    Sgd { momentum: f64 },
    /// Adaptive moment estimation.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    m_w: Array2<f64>,
    m_b: Array1<f64>,
    v_w: Array2<f64>,
    v_b: Array1<f64>,
}

/// Per-network optimizer state (first/second moments or momentum buffers).
#[derive(Debug, Clone)]
pub struct OptState {
    slots: Vec<Slot>,
    t: u64,
}

impl OptState {
    pub fn new(params: &MlpParams) -> Self {
        let slots = params
            .layers
            .iter()
            .map(|l| Slot {
                m_w: Array2::zeros(l.weights.dim()),
                m_b: Array1::zeros(l.biases.len()),
                v_w: Array2::zeros(l.weights.dim()),
                v_b: Array1::zeros(l.biases.len()),
            })
            .collect();
        OptState { slots, t: 0 }
    }
}

/// One optimizer step. `sign = 1.0` descends the loss, `sign = -1.0` ascends
/// it (the gradient is negated before entering the update rule).
pub fn opt_step(
    params: &mut MlpParams,
    grads: &MlpGrads,
    state: &mut OptState,
    kind: OptimizerKind,
    sign: f64,
    lr: f64,
) -> Result<(), NetError> {
    if grads.layers.len() != params.layers.len() || state.slots.len() != params.layers.len() {
        return Err(NetError::Dimension(format!(
            "{} gradient layers / {} state slots for {} parameter layers",
            grads.layers.len(),
            state.slots.len(),
            params.layers.len()
        )));
    }
    for (i, (l, g)) in params.layers.iter().zip(grads.layers.iter()).enumerate() {
        if l.weights.dim() != g.weights.dim() || l.biases.len() != g.biases.len() {
            return Err(NetError::Dimension(format!("layer {i} gradient shape mismatch")));
        }
    }

    state.t += 1;
    match kind {
        OptimizerKind::Sgd { momentum } => {
            for (i, layer) in params.layers.iter_mut().enumerate() {
                let slot = &mut state.slots[i];
                let g = &grads.layers[i];
                if momentum == 0.0 {
                    layer.weights.zip_mut_with(&g.weights, |p, &gv| *p -= lr * sign * gv);
                    layer.biases.zip_mut_with(&g.biases, |p, &gv| *p -= lr * sign * gv);
                } else {
                    slot.m_w.zip_mut_with(&g.weights, |m, &gv| *m = momentum * *m + sign * gv);
                    slot.m_b.zip_mut_with(&g.biases, |m, &gv| *m = momentum * *m + sign * gv);
                    layer.weights.zip_mut_with(&slot.m_w, |p, &m| *p -= lr * m);
                    layer.biases.zip_mut_with(&slot.m_b, |p, &m| *p -= lr * m);
                }
            }
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            let bc1 = 1.0 - beta1.powi(state.t as i32);
            let bc2 = 1.0 - beta2.powi(state.t as i32);
            for (i, layer) in params.layers.iter_mut().enumerate() {
                let slot = &mut state.slots[i];
                let g = &grads.layers[i];
                slot.m_w.zip_mut_with(&g.weights, |m, &gv| {
                    *m = beta1 * *m + (1.0 - beta1) * sign * gv
                });
                slot.v_w.zip_mut_with(&g.weights, |v, &gv| {
                    *v = beta2 * *v + (1.0 - beta2) * gv * gv
                });
                slot.m_b.zip_mut_with(&g.biases, |m, &gv| {
                    *m = beta1 * *m + (1.0 - beta1) * sign * gv
                });
                slot.v_b.zip_mut_with(&g.biases, |v, &gv| {
                    *v = beta2 * *v + (1.0 - beta2) * gv * gv
                });
                for ((p, m), v) in layer
                    .weights
                    .iter_mut()
                    .zip(slot.m_w.iter())
                    .zip(slot.v_w.iter())
                {
                    *p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
                }
                for ((p, m), v) in layer
                    .biases
                    .iter_mut()
                    .zip(slot.m_b.iter())
                    .zip(slot.v_b.iter())
                {
                    *p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}
