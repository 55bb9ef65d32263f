//! Loss injection on a two-mode measured (or simulated) batch, read out by an
//! ensemble of networks and by MaxLik.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detector_registry, DetectorContext, NegativityDetector};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianStateSpec, SymplecticOrthogonal};
use crate::maxlik::MONOTONE_SLACK;
use crate::mlp::{evaluate, train, MlpModel, TrainConfig};
use crate::quadrature::{draw_phase_protocol, inject_loss_replacement, QuadratureBatch};
use crate::rng::{derive_seed, domain, stream};
use crate::sampler::{sample_joint_quadratures, sampler_registry};
use crate::wigner::{NonGaussianOp, WignerForm};
use crate::features::Split;

use super::compare::mean_and_std;
use super::config::{AnalogSettings, ExperimentConfig};
use super::generate::{generate_corpus, Corpus};

const ANALOG_MODES: usize = 2;

/// Two equally squeezed thermal modes on a balanced beam splitter, with loss,
/// then a photon subtracted along x of one mode.
pub fn analog_form(a: &AnalogSettings) -> Result<WignerForm> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let u = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(h, 0.0),
            Complex64::new(0.0, h),
            Complex64::new(-h, 0.0),
            Complex64::new(0.0, h),
        ],
    );
    let spec = GaussianStateSpec {
        mode_count: ANALOG_MODES,
        eta: vec![a.eta; ANALOG_MODES],
        squeezing_db: vec![a.squeezing_db; ANALOG_MODES],
        o1: SymplecticOrthogonal::identity(ANALOG_MODES),
        o2: Some(SymplecticOrthogonal::from_unitary(&u)?),
        loss: a.loss,
        seed: None,
    };
    let mut g = vec![0.0; 2 * ANALOG_MODES];
    g[a.subtract_mode - 1] = 1.0;
    WignerForm::build(spec.assemble_covariance()?, NonGaussianOp::subtract(g)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogSummary {
    /// `(2π)² W(0)` of the joint state.
    pub joint_scaled_min: f64,
    /// `(2π) W(0)` of each reduced single-mode state.
    pub mode_scaled_min: Vec<f64>,
    /// Product of the reduced values, what a mode-by-mode reconstruction sees.
    pub product_scaled_min: f64,
}

pub fn analog_summary(a: &AnalogSettings) -> Result<AnalogSummary> {
    let form = analog_form(a)?;
    let mode_scaled_min: Vec<f64> = (0..ANALOG_MODES)
        .map(|i| Ok(form.reduced(&[i])?.scaled_min()))
        .collect::<Result<_>>()?;
    Ok(AnalogSummary {
        joint_scaled_min: form.scaled_min(),
        product_scaled_min: mode_scaled_min.iter().product(),
        mode_scaled_min,
    })
}

/// The simulated base file: `analog.repetitions` joint records per slot.
pub fn simulate_analog(cfg: &ExperimentConfig) -> Result<QuadratureBatch> {
    let a = &cfg.robustness.analog;
    let form = analog_form(a)?;
    let mut rng = stream(cfg.seed, domain::ANALOG, 0);
    let protocol = draw_phase_protocol(ANALOG_MODES, &cfg.phase_intervals, &mut rng);
    let sampler = sampler_registry().create(&cfg.sampler, &cfg.sampler_settings)?;
    let (batch, _) = sample_joint_quadratures(&form, &protocol, a.repetitions, sampler.as_ref(), &mut rng, "analog")?;
    Ok(batch)
}

/// The experiment-like training setting: two modes, the robustness prior and
/// cutoff, on a corpus seed separate from the main one.
pub fn training_config(cfg: &ExperimentConfig) -> ExperimentConfig {
    let r = &cfg.robustness;
    ExperimentConfig {
        mode_count: ANALOG_MODES,
        corpus_size: r.training_corpus_size,
        cutoff: Some(r.training_cutoff),
        prior: r.training_prior.clone(),
        seed: derive_seed(cfg.seed, domain::ROBUSTNESS, 0),
        ..cfg.clone()
    }
}

pub struct Ensemble {
    pub models: Vec<MlpModel>,
    pub validation_accuracy: Vec<f64>,
    pub corpus: Corpus,
}

/// One corpus, `trainings` networks differing in initialization and shuffling.
pub fn train_ensemble(cfg: &ExperimentConfig) -> Result<Ensemble> {
    let tcfg = training_config(cfg);
    let corpus = generate_corpus(&tcfg)?;
    let trainings = cfg.robustness.trainings;
    let outcomes: Vec<(MlpModel, f64)> = (0..trainings)
        .into_par_iter()
        .map(|t| {
            let config = TrainConfig {
                seed: derive_seed(cfg.seed, domain::ROBUSTNESS, 1 + t as u64),
                ..tcfg.train.clone()
            };
            let outcome = train(&corpus.dataset, &config)?;
            let val = corpus.dataset.split(Split::Validation);
            let acc = evaluate(&outcome.model, &val, config.threshold)?.accuracy;
            log::info!("robustness training {}/{trainings}: validation accuracy {acc:.3}", t + 1);
            Ok((outcome.model, acc))
        })
        .collect::<Result<_>>()?;
    let (models, validation_accuracy) = outcomes.into_iter().unzip();
    Ok(Ensemble {
        models,
        validation_accuracy,
        corpus,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub loss: f64,
    /// Per training: fraction of replicas classified negative.
    pub f_n: Vec<f64>,
    /// Per training: fraction of replicas classified positive.
    pub f_p: Vec<f64>,
    pub consensus_negative: usize,
    pub consensus_positive: usize,
    pub inconclusive: usize,
    pub consensus_negative_pct: f64,
    pub consensus_positive_pct: f64,
    /// Benchmark `W(0)` over replicas, in units of `(2π)^{-2}`.
    pub maxlik_scaled_mean: f64,
    pub maxlik_scaled_std: f64,
    pub maxlik_negative_fraction: f64,
    pub maxlik_non_monotone: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub trainings: usize,
    pub replicas: usize,
    pub consensus: f64,
    pub benchmark: String,
    pub levels: Vec<LevelReport>,
}

impl RobustnessReport {
    /// First loss level at which the benchmark mean is no longer negative.
    pub fn maxlik_sign_change(&self) -> Option<f64> {
        let first = self.levels.first()?;
        if first.maxlik_scaled_mean >= 0.0 {
            return None;
        }
        self.levels.iter().find(|l| l.maxlik_scaled_mean >= 0.0).map(|l| l.loss)
    }

    /// First loss level at which positive consensus outnumbers negative
    /// consensus, provided the ensemble starts out negative.
    pub fn nn_flip(&self) -> Option<f64> {
        let first = self.levels.first()?;
        if first.consensus_negative <= first.consensus_positive {
            return None;
        }
        self.levels
            .iter()
            .find(|l| l.consensus_positive > l.consensus_negative)
            .map(|l| l.loss)
    }

    pub fn write_levels_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "loss",
            "consensus_negative_pct",
            "consensus_positive_pct",
            "inconclusive",
            "mean_f_n",
            "maxlik_scaled_mean",
            "maxlik_scaled_std",
            "maxlik_negative_fraction",
        ])?;
        for l in &self.levels {
            let (mean_fn, _) = mean_and_std(&l.f_n);
            w.write_record([
                l.loss.to_string(),
                l.consensus_negative_pct.to_string(),
                l.consensus_positive_pct.to_string(),
                l.inconclusive.to_string(),
                mean_fn.to_string(),
                l.maxlik_scaled_mean.to_string(),
                l.maxlik_scaled_std.to_string(),
                l.maxlik_negative_fraction.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trainings_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["loss", "training", "f_n", "f_p"])?;
        for l in &self.levels {
            for (t, (n, p)) in l.f_n.iter().zip(&l.f_p).enumerate() {
                w.write_record([l.loss.to_string(), t.to_string(), n.to_string(), p.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Splits the `trainings` per-model fractions into consensus counts.
pub fn consensus_counts(f_n: &[f64], threshold: f64) -> (usize, usize, usize) {
    let neg = f_n.iter().filter(|&&f| f >= threshold).count();
    let pos = f_n.iter().filter(|&&f| 1.0 - f >= threshold).count();
    (neg, pos, f_n.len() - neg - pos)
}

/// Replica `r` at every loss level starts from the same subsample, so the
/// levels differ only by the injected vacuum fraction.
pub fn run_robustness(cfg: &ExperimentConfig, base: &QuadratureBatch, models: &[MlpModel]) -> Result<RobustnessReport> {
    cfg.validate()?;
    let r = &cfg.robustness;
    if base.mode_count != ANALOG_MODES {
        return Err(Error::DimensionMismatch {
            expected: ANALOG_MODES,
            actual: base.mode_count,
        });
    }
    if models.is_empty() {
        return Err(Error::InvalidConfig("robustness needs at least one trained model".into()));
    }
    base.validate()?;
    let registry = detector_registry();
    let mut context = DetectorContext {
        mode_count: ANALOG_MODES,
        model: None,
        threshold: cfg.train.threshold,
        maxlik: r.benchmark_maxlik,
        cutoff: 0.0,
    };
    let benchmark = registry.create(&r.benchmark_detector, &context)?;
    let nets: Vec<Box<dyn NegativityDetector>> = models
        .iter()
        .map(|m| {
            context.model = Some(Arc::new(m.clone()));
            registry.create(&r.nn_detector, &context)
        })
        .collect::<Result<_>>()?;

    let subsamples: Vec<QuadratureBatch> = (0..r.replicas)
        .into_par_iter()
        .map(|i| base.subsample(r.replica_repetitions, &mut stream(cfg.seed, domain::REPLICA, i as u64)))
        .collect::<Result<_>>()?;

    let mut levels = Vec::with_capacity(r.loss_grid.len());
    for (li, &loss) in r.loss_grid.iter().enumerate() {
        // Per replica: one verdict per network, then the benchmark assessment.
        let per_replica: Vec<(Vec<bool>, f64, bool, bool)> = subsamples
            .par_iter()
            .enumerate()
            .map(|(i, sub)| {
                let unit = (1u64 << 32) + (li * r.replicas + i) as u64;
                let replica = inject_loss_replacement(sub, loss, &mut stream(cfg.seed, domain::REPLICA, unit))?;
                let verdicts = nets.iter().map(|n| Ok(n.assess(&replica)?.negative)).collect::<Result<Vec<_>>>()?;
                let b = benchmark.assess(&replica)?;
                Ok((verdicts, b.score, b.negative, b.is_monotone(MONOTONE_SLACK)))
            })
            .collect::<Result<_>>()?;
        let n = per_replica.len() as f64;
        let f_n: Vec<f64> = (0..nets.len())
            .map(|t| per_replica.iter().filter(|p| p.0[t]).count() as f64 / n)
            .collect();
        let f_p: Vec<f64> = (0..nets.len())
            .map(|t| per_replica.iter().filter(|p| !p.0[t]).count() as f64 / n)
            .collect();
        let (cn, cp, inconclusive) = consensus_counts(&f_n, r.consensus);
        let scaled: Vec<f64> = per_replica.iter().map(|p| p.1 * (2.0 * PI).powi(ANALOG_MODES as i32)).collect();
        let (mean, std) = mean_and_std(&scaled);
        let t = nets.len() as f64;
        levels.push(LevelReport {
            loss,
            consensus_negative: cn,
            consensus_positive: cp,
            inconclusive,
            consensus_negative_pct: 100.0 * cn as f64 / t,
            consensus_positive_pct: 100.0 * cp as f64 / t,
            f_n,
            f_p,
            maxlik_scaled_mean: mean,
            maxlik_scaled_std: std,
            maxlik_negative_fraction: per_replica.iter().filter(|p| p.2).count() as f64 / n,
            maxlik_non_monotone: per_replica.iter().filter(|p| !p.3).count(),
        });
        log::info!(
            "loss {loss:.3}: consensus negative {cn}, positive {cp}; benchmark (2π)²W(0) = {mean:.4} ± {std:.4}"
        );
    }
    Ok(RobustnessReport {
        trainings: nets.len(),
        replicas: r.replicas,
        consensus: r.consensus,
        benchmark: benchmark.name().to_string(),
        levels,
    })
}
