use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, LabeledExample, Split};
use crate::rng::{domain, stream};

use super::adam::AdamState;
use super::metrics::{evaluate_scores, labels};
use super::model::{standard_sizes, MlpModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![30, 20, 10],
            learning_rate: 1e-3,
            adam_epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in history {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv<R: std::io::Read>(input: R) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<EpochRecord>, _>>()?)
}

fn loss_and_accuracy(model: &MlpModel, examples: &[&LabeledExample], threshold: f64) -> Result<(f64, f64)> {
    let scores = super::metrics::scores(model, examples)?;
    let m = evaluate_scores(&scores, &labels(examples), threshold)?;
    Ok((m.mse, m.accuracy))
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let train_set = dataset.split(Split::Train);
    let val_set = dataset.split(Split::Validation);
    let mut outcome = train_on(&train_set, &val_set, config)?;
    outcome.model.dataset = Some(dataset.header.clone());
    Ok(outcome)
}

/// Mini-batch Adam with early stopping on validation loss; training stops
/// once `patience` consecutive epochs fail to improve it.
pub fn train_on(train_set: &[&LabeledExample], val_set: &[&LabeledExample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidInput(format!(
            "training needs both splits (train {}, validation {})",
            train_set.len(),
            val_set.len()
        )));
    }
    let input = train_set[0].features.len();
    let mut model = MlpModel::init(&standard_sizes(input, &config.hidden_layers), config.seed)?;
    let mut adam = AdamState::new(&model, config.learning_rate, config.adam_epsilon);
    let mut rng = stream(config.seed, domain::TRAIN, 0);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut stale = 0usize;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let inputs: Vec<&[f64]> = chunk.iter().map(|&i| train_set[i].features.as_slice()).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| train_set[i].target()).collect();
            let (_, grads) = model.loss_and_gradient(&inputs, &targets)?;
            adam.step(&mut model, &grads);
        }
        let (train_loss, train_acc) = loss_and_accuracy(&model, train_set, config.threshold)?;
        let (val_loss, val_acc) = loss_and_accuracy(&model, val_set, config.threshold)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }
    log::debug!("training stopped after {} epochs; best epoch {}", history.len(), best.1);
    Ok(TrainOutcome {
        model: best.2,
        history,
        best_epoch: best.1,
        best_val_loss: best.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub hidden_layers: Vec<Vec<usize>>,
    pub batch_sizes: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            learning_rates: vec![1e-3],
            hidden_layers: vec![vec![30, 20, 10]],
            batch_sizes: vec![32],
        }
    }
}

impl HyperGrid {
    pub fn expand(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for h in &self.hidden_layers {
            for &lr in &self.learning_rates {
                for &b in &self.batch_sizes {
                    out.push(TrainConfig {
                        hidden_layers: h.clone(),
                        learning_rate: lr,
                        batch_size: b,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: usize,
    pub configs: Vec<TrainConfig>,
    pub val_losses: Vec<f64>,
    pub outcome: TrainOutcome,
}

/// Trains every configuration and keeps the lowest validation loss; ties go
/// to fewer parameters, then the lower learning rate.
pub fn grid_search(dataset: &Dataset, configs: &[TrainConfig]) -> Result<GridResult> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let outcomes: Vec<TrainOutcome> = configs.par_iter().map(|c| train(dataset, c)).collect::<Result<_>>()?;
    let key = |i: usize| (outcomes[i].best_val_loss, outcomes[i].model.parameter_count(), configs[i].learning_rate);
    let best = (0..configs.len())
        .min_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.total_cmp(&kb.2))
        })
        .unwrap();
    let val_losses = outcomes.iter().map(|o| o.best_val_loss).collect();
    Ok(GridResult {
        best,
        configs: configs.to_vec(),
        val_losses,
        outcome: outcomes.into_iter().nth(best).unwrap(),
    })
}
