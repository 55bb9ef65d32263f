use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DatasetHeader;
use crate::linalg;
use crate::rng::{domain, stream};

/// Logits are clamped to this magnitude so the sigmoid stays inside (0, 1).
pub const LOGIT_CLAMP: f64 = 36.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_out × fan_in`.
    pub weights: DMatrix<f64>,
    pub biases: DVector<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: DMatrix::zeros(fan_out, fan_in),
            biases: DVector::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

/// ReLU hidden layers and a single sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub seed: u64,
    pub dataset: Option<DatasetHeader>,
}

/// Same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model.layers.iter().map(|l| Layer::zeros(l.fan_in(), l.fan_out())).collect(),
        }
    }

    pub fn iter_values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Output {
    pub probability: f64,
    pub clamped: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!("invalid layer sizes {sizes:?}")));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(Error::InvalidConfig("the output layer must have one node".into()));
    }
    Ok(())
}

pub fn standard_sizes(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}

impl MlpModel {
    /// Uniform `±√(6/(fan_in+fan_out))` weights and zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        validate_sizes(sizes)?;
        let mut rng = stream(seed, domain::INIT, 0);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let mut layer = Layer::zeros(w[0], w[1]);
                for v in layer.weights.iter_mut() {
                    *v = rng.random_range(-limit..=limit);
                }
                layer
            })
            .collect();
        Ok(Self {
            layers,
            seed,
            dataset: None,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            seed: 0,
            dataset: None,
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].fan_in()];
        s.extend(self.layers.iter().map(|l| l.fan_out()));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        Ok(self.forward_detailed(features)?.probability)
    }

    pub fn forward_detailed(&self, features: &[f64]) -> Result<Output> {
        if features.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.input_len(),
                actual: features.len(),
            });
        }
        let mut a = DVector::from_column_slice(features);
        let last = self.layers.len() - 1;
        for layer in &self.layers[..last] {
            a = (&layer.weights * &a + &layer.biases).map(|z| z.max(0.0));
        }
        let out = &self.layers[last];
        let z = (&out.weights * &a + &out.biases)[0];
        let clamped = z.abs() > LOGIT_CLAMP;
        Ok(Output {
            probability: sigmoid(z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)),
            clamped,
        })
    }

    /// Batched forward pass over columns; returns per-layer pre-activations and activations.
    fn forward_batch(&self, inputs: DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = Vec::with_capacity(self.layers.len() + 1);
        act.push(inputs);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * act.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &layer.biases;
            }
            let a = if i == last {
                z.map(|v| sigmoid(v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)))
            } else {
                z.map(|v| v.max(0.0))
            };
            pre.push(z);
            act.push(a);
        }
        (pre, act)
    }

    /// Outputs for many inputs at once.
    pub fn predict(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.forward_batch(self.stack(inputs)?).1.last().unwrap().iter().copied().collect())
    }

    fn stack(&self, inputs: &[&[f64]]) -> Result<DMatrix<f64>> {
        let n = self.input_len();
        let mut x = DMatrix::zeros(n, inputs.len());
        for (j, f) in inputs.iter().enumerate() {
            if f.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: f.len() });
            }
            x.column_mut(j).copy_from_slice(f);
        }
        Ok(x)
    }

    /// Mean squared error over the batch and its gradient. The rectifier's
    /// subgradient at 0 is 0, as is the gradient through a clamped logit.
    pub fn loss_and_gradient(&self, inputs: &[&[f64]], targets: &[f64]) -> Result<(f64, Gradients)> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "batch has {} inputs and {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let b = inputs.len();
        let (pre, act) = self.forward_batch(self.stack(inputs)?);
        let out = act.last().unwrap();
        let mut loss = 0.0;
        let mut delta = DMatrix::zeros(1, b);
        for j in 0..b {
            let y = out[(0, j)];
            let diff = y - targets[j];
            loss += diff * diff;
            let z = pre.last().unwrap()[(0, j)];
            let slope = if z.abs() > LOGIT_CLAMP { 0.0 } else { y * (1.0 - y) };
            delta[(0, j)] = 2.0 * diff / b as f64 * slope;
        }
        loss /= b as f64;
        let mut grads = Gradients::zeros_like(self);
        for i in (0..self.layers.len()).rev() {
            let g = &mut grads.layers[i];
            g.weights = &delta * act[i].transpose();
            g.biases = delta.column_sum();
            if i > 0 {
                let mut back = self.layers[i].weights.transpose() * &delta;
                back.zip_apply(&pre[i - 1], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
        }
        Ok((loss, grads))
    }

    pub fn to_record(&self) -> ModelRecord {
        ModelRecord {
            layer_sizes: self.layer_sizes(),
            weights: self.layers.iter().map(|l| linalg::row_major(&l.weights)).collect(),
            biases: self.layers.iter().map(|l| l.biases.iter().copied().collect()).collect(),
            hidden_activation: "relu".into(),
            output_activation: "sigmoid".into(),
            seed: self.seed,
            dataset: self.dataset.clone(),
        }
    }

    pub fn from_record(r: &ModelRecord) -> Result<Self> {
        validate_sizes(&r.layer_sizes)?;
        if r.hidden_activation != "relu" || r.output_activation != "sigmoid" {
            return Err(Error::InvalidInput(format!(
                "unsupported activations {}/{}",
                r.hidden_activation, r.output_activation
            )));
        }
        let n = r.layer_sizes.len() - 1;
        if r.weights.len() != n || r.biases.len() != n {
            return Err(Error::InvalidInput("weight or bias list length differs from layer count".into()));
        }
        let mut layers = Vec::with_capacity(n);
        for (i, w) in r.layer_sizes.windows(2).enumerate() {
            if r.weights[i].len() != w[0] * w[1] || r.biases[i].len() != w[1] {
                return Err(Error::InvalidInput(format!("layer {i} has wrong parameter counts")));
            }
            layers.push(Layer {
                weights: linalg::from_row_major(w[1], w[0], &r.weights[i]),
                biases: DVector::from_vec(r.biases[i].clone()),
            });
        }
        Ok(Self {
            layers,
            seed: r.seed,
            dataset: r.dataset.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = self.to_json()?;
        crate::features::write_atomically(path, |w| Ok(std::io::Write::write_all(w, json.as_bytes())?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub layer_sizes: Vec<usize>,
    /// Row-major `fan_out × fan_in` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub hidden_activation: String,
    pub output_activation: String,
    pub seed: u64,
    pub dataset: Option<DatasetHeader>,
}
