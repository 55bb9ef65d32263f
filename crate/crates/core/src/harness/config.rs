use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::default_cutoff;
use crate::gaussian::StatePrior;
use crate::maxlik::MaxLikSettings;
use crate::mlp::{HyperGrid, TrainConfig};
use crate::quadrature::PhaseIntervals;
use crate::sampler::{sampler_registry, SamplerSettings, DEFAULT_SAMPLER};

/// Data-budget study: several values of k, fresh states per batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSettings {
    pub ks: Vec<usize>,
    pub states_per_batch: usize,
    pub batches: usize,
    pub nn_detector: String,
    pub benchmark_detector: String,
    /// Threshold MaxLik compares `W(0)` against; the corpus cutoff when absent.
    pub maxlik_cutoff: Option<f64>,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            ks: vec![1000, 100, 30, 10],
            states_per_batch: 100,
            batches: 6,
            nn_detector: "nn".into(),
            benchmark_detector: "maxlik".into(),
            maxlik_cutoff: None,
        }
    }
}

/// The simulated stand-in for the measured two-mode state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalogSettings {
    pub squeezing_db: f64,
    pub eta: f64,
    pub loss: f64,
    /// 1-based mode the photon is subtracted from, along its x quadrature.
    pub subtract_mode: usize,
    /// Repetitions per phase slot of the base file.
    pub repetitions: usize,
}

impl Default for AnalogSettings {
    fn default() -> Self {
        Self {
            squeezing_db: 3.0,
            eta: 1.11,
            loss: 0.12,
            subtract_mode: 1,
            repetitions: 2500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSettings {
    pub loss_grid: Vec<f64>,
    pub replicas: usize,
    /// Repetitions per phase slot drawn into each replica.
    pub replica_repetitions: usize,
    pub trainings: usize,
    pub consensus: f64,
    pub training_corpus_size: usize,
    pub training_prior: StatePrior,
    pub training_cutoff: f64,
    pub nn_detector: String,
    pub benchmark_detector: String,
    pub benchmark_maxlik: MaxLikSettings,
    pub analog: AnalogSettings,
}

impl Default for RobustnessSettings {
    fn default() -> Self {
        Self {
            loss_grid: vec![0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.10, 0.12],
            replicas: 100,
            replica_repetitions: 1000,
            trainings: 30,
            consensus: 0.95,
            training_corpus_size: 4000,
            training_prior: StatePrior {
                s_max_db: 3.0,
                eta_min: 1.11,
                eta_max: 1.11,
                loss_min: 0.12,
                loss_max: 0.12,
                ..StatePrior::default()
            },
            training_cutoff: 0.0,
            nn_detector: "nn".into(),
            benchmark_detector: "maxlik-product".into(),
            benchmark_maxlik: MaxLikSettings {
                cutoff_photons: 3,
                ..MaxLikSettings::default()
            },
            analog: AnalogSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode_count: usize,
    pub corpus_size: usize,
    /// Joint repetitions per phase slot.
    pub repetitions: usize,
    /// Labeling cutoff on `W_min`; `-0.1/(2π)^m` when absent.
    pub cutoff: Option<f64>,
    pub band_filter: bool,
    pub split_ratio: f64,
    pub prior: StatePrior,
    pub phase_intervals: PhaseIntervals,
    pub sampler: String,
    pub sampler_settings: SamplerSettings,
    pub train: TrainConfig,
    pub grid: Option<HyperGrid>,
    pub maxlik: MaxLikSettings,
    pub compare: CompareSettings,
    pub robustness: RobustnessSettings,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode_count: 3,
            corpus_size: 4000,
            repetitions: 1000,
            cutoff: None,
            band_filter: true,
            split_ratio: 0.8,
            prior: StatePrior::default(),
            phase_intervals: PhaseIntervals::default(),
            sampler: DEFAULT_SAMPLER.into(),
            sampler_settings: SamplerSettings::default(),
            train: TrainConfig::default(),
            grid: None,
            maxlik: MaxLikSettings::default(),
            compare: CompareSettings::default(),
            robustness: RobustnessSettings::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn effective_cutoff(&self) -> f64 {
        self.cutoff.unwrap_or_else(|| default_cutoff(self.mode_count))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.mode_count == 0 || self.corpus_size == 0 || self.repetitions == 0 {
            return bad("mode_count, corpus_size and repetitions must be positive".into());
        }
        if let Some(c) = self.cutoff {
            if !c.is_finite() || c > 0.0 {
                return bad(format!("cutoff {c} must be finite and non-positive"));
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} must lie in (0, 1)", self.split_ratio));
        }
        self.prior.validate()?;
        self.phase_intervals.validate()?;
        self.sampler_settings.validate()?;
        let samplers = sampler_registry();
        if !samplers.contains(&self.sampler) {
            return Err(Error::UnknownStrategy {
                kind: "sampler",
                name: self.sampler.clone(),
                available: samplers.names().join(", "),
            });
        }
        self.train.validate()?;
        self.maxlik.validate()?;

        let c = &self.compare;
        if c.ks.is_empty() || c.ks.contains(&0) || c.states_per_batch == 0 || c.batches == 0 {
            return bad("comparison budgets, states_per_batch and batches must be positive".into());
        }

        let r = &self.robustness;
        if r.loss_grid.is_empty() || r.loss_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return bad("loss grid values must lie in [0, 1]".into());
        }
        if r.replicas == 0 || r.replica_repetitions == 0 || r.trainings == 0 || r.training_corpus_size == 0 {
            return bad("robustness counts must be positive".into());
        }
        if !(r.consensus > 0.5 && r.consensus <= 1.0) {
            return bad(format!("consensus threshold {} must lie in (0.5, 1]", r.consensus));
        }
        if r.training_cutoff > 0.0 || !r.training_cutoff.is_finite() {
            return bad("training_cutoff must be finite and non-positive".into());
        }
        r.training_prior.validate()?;
        r.benchmark_maxlik.validate()?;
        let a = &r.analog;
        if a.subtract_mode == 0 || a.subtract_mode > 2 {
            return bad(format!("analog subtract_mode {} must be 1 or 2", a.subtract_mode));
        }
        if r.replica_repetitions > a.repetitions {
            return bad(format!(
                "replicas of {} repetitions cannot be drawn from {}",
                r.replica_repetitions, a.repetitions
            ));
        }
        Ok(())
    }
}
