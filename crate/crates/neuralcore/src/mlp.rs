use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::NetError;

/// One affine layer; weights are (in, out) so a batch maps as `x.dot(w) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// A feed-forward network with a rectifier between layers and a linear final
/// layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Symmetric uniform initialization scaled by fan-in, biases zero,
    /// deterministic per seed.
    pub fn init(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((fan_in, fan_out), |_| {
                        rng.gen_range(-bound..=bound)
                    }),
                    biases: Array1::zeros(fan_out),
                }
            })
            .collect();
        MlpParams { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                biases: Array1::zeros(w[1]),
            })
            .collect();
        MlpParams { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weights.ncols()));
        d
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].weights.ncols() != pair[1].weights.nrows() {
                return Err(NetError::Dimension(format!(
                    "layer {} out dim {} does not chain into layer {} in dim {}",
                    i,
                    pair[0].weights.ncols(),
                    i + 1,
                    pair[1].weights.nrows()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.biases.len() != l.weights.ncols() {
                return Err(NetError::Dimension(format!(
                    "layer {i} bias len {} vs out dim {}",
                    l.biases.len(),
                    l.weights.ncols()
                )));
            }
            if l.weights.iter().chain(l.biases.iter()).any(|v| !v.is_finite()) {
                return Err(NetError::NonFinite("layer parameters"));
            }
        }
        Ok(())
    }
}

/// Activations cached by [`forward`], sufficient for exact backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `[0]` is the batch itself.
    pub layer_inputs: Vec<Array2<f64>>,
    /// Affine outputs of each layer before the rectifier.
    pub pre_activations: Vec<Array2<f64>>,
    /// Network output (no activation after the final layer).
    pub output: Array2<f64>,
}

/// Forward pass through an MLP, returning outputs plus the cache needed by
/// [`backward`].
pub fn forward(mlp: &MlpParams, x: &Array2<f64>) -> Result<ForwardCache, NetError> {
    if x.ncols() != mlp.input_dim() {
        return Err(NetError::Dimension(format!(
            "input has {} columns, first layer expects {}",
            x.ncols(),
            mlp.input_dim()
        )));
    }
    let n_layers = mlp.layers.len();
    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut pre_activations = Vec::with_capacity(n_layers);
    let mut a = x.clone();
    for (i, layer) in mlp.layers.iter().enumerate() {
        let z = a.dot(&layer.weights) + &layer.biases;
        layer_inputs.push(a);
        a = if i + 1 < n_layers {
            z.mapv(|v| v.max(0.0))
        } else {
            z.clone()
        };
        pre_activations.push(z);
    }
    Ok(ForwardCache {
        layer_inputs,
        pre_activations,
        output: a,
    })
}

/// Gradients matching an [`MlpParams`] layer for layer.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &MlpParams) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.dim()),
                    biases: Array1::zeros(l.biases.len()),
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.mapv_inplace(|v| v * s);
            l.biases.mapv_inplace(|v| v * s);
        }
    }
}

/// Exact reverse-mode pass. `upstream` is dLoss/dOutput; returns parameter
/// gradients and dLoss/dInput.
pub fn backward(
    mlp: &MlpParams,
    cache: &ForwardCache,
    upstream: &Array2<f64>,
) -> Result<(MlpGrads, Array2<f64>), NetError> {
    let n_layers = mlp.layers.len();
    if cache.layer_inputs.len() != n_layers || cache.pre_activations.len() != n_layers {
        return Err(NetError::StaleCache(format!(
            "cache covers {} layers, network has {}",
            cache.layer_inputs.len(),
            n_layers
        )));
    }
    if upstream.dim() != cache.output.dim() {
        return Err(NetError::StaleCache(format!(
            "upstream shape {:?} vs cached output {:?}",
            upstream.dim(),
            cache.output.dim()
        )));
    }
    for (i, layer) in mlp.layers.iter().enumerate() {
        if cache.layer_inputs[i].ncols() != layer.weights.nrows() {
            return Err(NetError::StaleCache(format!(
                "cached input {i} has {} columns, layer expects {}",
                cache.layer_inputs[i].ncols(),
                layer.weights.nrows()
            )));
        }
    }

    let mut grads = MlpGrads::zeros_like(mlp);
    let mut delta = upstream.clone();
    for i in (0..n_layers).rev() {
        if i + 1 < n_layers {
            // rectifier gate: gradient flows only where the pre-activation was positive
            let z = &cache.pre_activations[i];
            delta.zip_mut_with(z, |d, &zv| {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        let a_in = &cache.layer_inputs[i];
        grads.layers[i].weights = a_in.t().dot(&delta);
        grads.layers[i].biases = delta.sum_axis(ndarray::Axis(0));
        delta = delta.dot(&mlp.layers[i].weights.t());
    }
    Ok((grads, delta))
}
