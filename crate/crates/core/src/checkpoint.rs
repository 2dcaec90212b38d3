//! Versioned JSON checkpoints.
//!
//! Weights are stored row-major. Floats are written in shortest round-trip
//! form and parsed exactly, so serialize → load → serialize is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::smiles::FeaturizationScheme;
use crate::train::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub featurization: FeaturizationScheme,
    pub input_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub n_classes: usize,
    /// One row-major array per graph convolution, shape `d_l × d_{l+1}`.
    pub layer_weights: Vec<Vec<f64>>,
    /// Row-major, shape `d_L × n_classes`.
    pub classifier_weights: Vec<f64>,
    pub train_config: TrainConfig,
    pub seed: u64,
    /// Free-form run metadata (tool version, config hash, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, serde_json::Value>,
}

fn row_major(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

impl Checkpoint {
    pub fn new(params: &ModelParams, featurization: FeaturizationScheme, train_config: TrainConfig) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            featurization,
            input_dim: params.input_dim(),
            layer_sizes: params.layer_sizes(),
            n_classes: params.n_classes(),
            layer_weights: params.layer_weights().iter().map(row_major).collect(),
            classifier_weights: row_major(params.classifier()),
            seed: train_config.seed,
            train_config,
            provenance: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        if self.layer_weights.len() != self.layer_sizes.len() {
            return Err(Error::Config("layer weight count does not match layer sizes".into()));
        }
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.layer_sizes);
        let shape = |rows: usize, cols: usize, data: &[f64]| {
            Array2::from_shape_vec((rows, cols), data.to_vec())
                .map_err(|e| Error::Config(format!("checkpoint weight shape: {e}")))
        };
        let layers = dims
            .windows(2)
            .zip(&self.layer_weights)
            .map(|(d, w)| shape(d[0], d[1], w))
            .collect::<Result<Vec<_>>>()?;
        let classifier = shape(*dims.last().unwrap(), self.n_classes, &self.classifier_weights)?;
        let params = ModelParams::new(layers, classifier)?;
        if params.input_dim() != self.featurization.feature_dim() {
            return Err(Error::Config(format!(
                "checkpoint input width {} does not match its featurization ({})",
                params.input_dim(),
                self.featurization.feature_dim()
            )));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
