//! One simulated state: Gaussian parameters, optional photon operation,
//! homodyne protocol and joint samples.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::features::{bin_quadratures, LabeledExample};
use crate::gaussian::{sample_state_spec, GaussianStateSpec, StatePrior};
use crate::quadrature::{draw_phase_protocol, PhaseIntervals, PhaseProtocol, QuadratureBatch};
use crate::rng::StreamRng;
use crate::sampler::{sample_joint_quadratures, sampler_registry, QuadratureSampler, SamplerSettings, SamplingReport};
use crate::wigner::{NonGaussianOp, PhotonOp, WignerForm};

use super::config::ExperimentConfig;

/// Attempts per state before a run of degenerate subtractions is fatal.
pub const MAX_RESAMPLES: usize = 1000;

pub struct SimulatedState {
    pub id: String,
    pub spec: GaussianStateSpec,
    pub form: WignerForm,
    pub protocol: PhaseProtocol,
    pub batch: QuadratureBatch,
    pub sampling: SamplingReport,
    /// Draws discarded because the subtraction had vanishing probability.
    pub resamples: usize,
}

/// With probability `p`, a photon addition or subtraction (even odds) on a
/// uniformly random unit mode vector in `R^{2m}`.
pub fn draw_operation<R: Rng + ?Sized>(modes: usize, p: f64, rng: &mut R) -> Result<NonGaussianOp> {
    if rng.random::<f64>() >= p {
        return Ok(NonGaussianOp::None);
    }
    let kind = if rng.random::<bool>() { PhotonOp::Add } else { PhotonOp::Subtract };
    let g = loop {
        let g: Vec<f64> = (0..2 * modes).map(|_| rng.sample(StandardNormal)).collect();
        if g.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
            break g;
        }
    };
    NonGaussianOp::normalized(kind, g)
}

pub struct StateGenerator {
    pub modes: usize,
    pub repetitions: usize,
    pub prior: StatePrior,
    pub intervals: PhaseIntervals,
    pub cutoff: f64,
    sampler: Box<dyn QuadratureSampler>,
}

impl StateGenerator {
    pub fn new(
        modes: usize,
        repetitions: usize,
        prior: StatePrior,
        intervals: PhaseIntervals,
        cutoff: f64,
        sampler: &str,
        settings: &SamplerSettings,
    ) -> Result<Self> {
        prior.validate()?;
        intervals.validate()?;
        Ok(Self {
            modes,
            repetitions,
            prior,
            intervals,
            cutoff,
            sampler: sampler_registry().create(sampler, settings)?,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::new(
            cfg.mode_count,
            cfg.repetitions,
            cfg.prior.clone(),
            cfg.phase_intervals,
            cfg.effective_cutoff(),
            &cfg.sampler,
            &cfg.sampler_settings,
        )
    }

    pub fn sampler(&self) -> &dyn QuadratureSampler {
        self.sampler.as_ref()
    }

    /// Draws a physical state; degenerate subtractions are redrawn.
    pub fn draw_form(&self, rng: &mut StreamRng) -> Result<(GaussianStateSpec, WignerForm, usize)> {
        for resamples in 0..MAX_RESAMPLES {
            let spec = sample_state_spec(self.modes, &self.prior, rng)?;
            let op = draw_operation(self.modes, self.prior.p_degauss, rng)?;
            match WignerForm::build(spec.assemble_covariance()?, op) {
                Ok(form) => return Ok((spec, form, resamples)),
                Err(Error::DegenerateSubtraction { denominator, .. }) => {
                    log::info!("resampling a state with subtraction probability {denominator:.3e}");
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::InvalidConfig(format!(
            "{MAX_RESAMPLES} consecutive degenerate subtractions; check the state prior"
        )))
    }

    pub fn simulate(&self, id: impl Into<String>, rng: &mut StreamRng) -> Result<SimulatedState> {
        let id = id.into();
        let (spec, form, resamples) = self.draw_form(rng)?;
        let protocol = draw_phase_protocol(self.modes, &self.intervals, rng);
        let (batch, sampling) = sample_joint_quadratures(&form, &protocol, self.repetitions, self.sampler(), rng, &id)?;
        Ok(SimulatedState {
            id,
            spec,
            form,
            protocol,
            batch,
            sampling,
            resamples,
        })
    }

    pub fn label(&self, state: &SimulatedState) -> Result<LabeledExample> {
        let binned = bin_quadratures(&state.batch, self.modes)?;
        Ok(LabeledExample::new(state.id.clone(), binned.features, state.form.wigner_min(), self.cutoff))
    }
}
