use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::Array2;

use crate::mlp::MlpParams;
use crate::NetError;

/// The full model: feature extractor, task head, and one bias head per
/// protected variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub fe: MlpParams,
    pub msi_head: MlpParams,
    pub be_heads: Vec<MlpParams>,
    pub bias_names: Vec<String>,
}

impl ModelBundle {
    /// Build a bundle with seeded initialization. Each module draws from its
    /// own sub-seed so that adding or removing bias heads does not perturb the
    /// feature extractor or task head weights.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        input_dim: usize,
        fe_hidden: &[usize],
        feature_dim: usize,
        head_hidden: &[usize],
        n_classes: usize,
        bias_heads: &[(String, usize)],
        seed: u64,
    ) -> Self {
        let mut fe_dims = vec![input_dim];
        fe_dims.extend_from_slice(fe_hidden);
        fe_dims.push(feature_dim);

        let head_dims = |out: usize| {
            let mut d = vec![feature_dim];
            d.extend_from_slice(head_hidden);
            d.push(out);
            d
        };

        let module_seed = |name: &str| {
            let mut h = DefaultHasher::new();
            seed.hash(&mut h);
            name.hash(&mut h);
            h.finish()
        };

        ModelBundle {
            fe: MlpParams::init(&fe_dims, module_seed("fe")),
            msi_head: MlpParams::init(&head_dims(n_classes), module_seed("msi")),
            be_heads: bias_heads
                .iter()
                .map(|(name, k)| MlpParams::init(&head_dims(*k), module_seed(&format!("be_{name}"))))
                .collect(),
            bias_names: bias_heads.iter().map(|(n, _)| n.clone()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        self.fe.validate()?;
        self.msi_head.validate()?;
        if self.be_heads.len() != self.bias_names.len() {
            return Err(NetError::Dimension(format!(
                "{} bias heads vs {} bias names",
                self.be_heads.len(),
                self.bias_names.len()
            )));
        }
        let d_f = self.fe.output_dim();
        if self.msi_head.input_dim() != d_f {
            return Err(NetError::Dimension(format!(
                "task head expects {} features, extractor yields {d_f}",
                self.msi_head.input_dim()
            )));
        }
        for (name, head) in self.bias_names.iter().zip(self.be_heads.iter()) {
            head.validate()?;
            if head.input_dim() != d_f {
                return Err(NetError::Dimension(format!(
                    "bias head '{name}' expects {} features, extractor yields {d_f}",
                    head.input_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.fe.output_dim()
    }

    /// Bit-level hash of all parameters of one module, for asserting that a
    /// training phase left it untouched.
    pub fn module_hash(params: &MlpParams) -> u64 {
        let mut h = DefaultHasher::new();
        for l in &params.layers {
            for v in l.weights.iter().chain(l.biases.iter()) {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn param_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        Self::module_hash(&self.fe).hash(&mut h);
        Self::module_hash(&self.msi_head).hash(&mut h);
        for head in &self.be_heads {
            Self::module_hash(head).hash(&mut h);
        }
        h.finish()
    }
}

/// One training batch: inputs, task labels, and one categorical vector per
/// protected variable, all sharing the same row count.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub bias_values: Vec<Vec<usize>>,
    pub tile_ids: Vec<String>,
}

impl Batch {
    pub fn validate(&self) -> Result<(), NetError> {
        let n = self.inputs.nrows();
        if self.labels.len() != n || self.tile_ids.len() != n {
            return Err(NetError::Dimension(format!(
                "batch components disagree: {n} inputs, {} labels, {} tile ids",
                self.labels.len(),
                self.tile_ids.len()
            )));
        }
        for (i, b) in self.bias_values.iter().enumerate() {
            if b.len() != n {
                return Err(NetError::Dimension(format!(
                    "bias vector {i} has {} entries for {n} rows",
                    b.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
