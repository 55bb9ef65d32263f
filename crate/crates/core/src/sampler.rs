//! Exact rejection samplers for the analytic homodyne marginals.
//!
//! Both samplers work in whitened, diagonalized coordinates. With `Σ = LLᵀ`
//! and `LᵀM̃L = U diag(b) Uᵀ`, the point `x = LUy` has density
//! `½(Σᵢ bᵢyᵢ² + c̃) φ(y)` where `φ` is the standard normal density.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{PhaseProtocol, QuadratureBatch, QuadratureEntry, PHASE_SLOTS};
use crate::registry::Registry;
use crate::wigner::{MarginalForm, QuadratureAxis, WignerForm};

/// Draws from a marginal. Points are returned row-major, `count × d`.
pub trait QuadratureSampler: Send + Sync {
    fn name(&self) -> &str;

    fn sample(&self, marginal: &MarginalForm, count: usize, rng: &mut dyn RngCore) -> Result<SampleDraw>;
}

#[derive(Debug, Clone, Default)]
pub struct SampleDraw {
    pub dimension: usize,
    pub points: Vec<f64>,
    pub proposals: u64,
    pub restarts: u32,
}

impl SampleDraw {
    pub fn count(&self) -> usize {
        self.points.len().checked_div(self.dimension).unwrap_or(0)
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.count() as f64 / self.proposals as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    /// Covariance inflation of the Gaussian proposal.
    pub envelope_scale: f64,
    pub safety_factor: f64,
    pub probe_points: usize,
    /// Expected acceptance below this raises `EnvelopeFailure`.
    pub min_acceptance: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            envelope_scale: 2.0,
            safety_factor: 1.2,
            probe_points: 100_000,
            min_acceptance: 1e-4,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.envelope_scale > 1.0 && self.envelope_scale.is_finite()) {
            return Err(Error::InvalidConfig("envelope_scale must exceed 1".into()));
        }
        if !(self.safety_factor >= 1.0 && self.safety_factor.is_finite()) {
            return Err(Error::InvalidConfig("safety_factor must be at least 1".into()));
        }
        if self.probe_points == 0 {
            return Err(Error::InvalidConfig("probe_points must be positive".into()));
        }
        if !(self.min_acceptance > 0.0 && self.min_acceptance < 1.0) {
            return Err(Error::InvalidConfig("min_acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// The marginal in diagonal whitened coordinates.
struct Whitened {
    eigen: Vec<f64>,
    constant: f64,
    /// Maps `y` back to measured quadratures.
    transform: DMatrix<f64>,
}

impl Whitened {
    fn new(marginal: &MarginalForm) -> Self {
        let l = marginal.cholesky();
        let b = crate::linalg::symmetrize(&(l.transpose() * marginal.quadratic() * l));
        let eig = b.symmetric_eigen();
        Self {
            eigen: eig.eigenvalues.iter().copied().collect(),
            constant: marginal.constant(),
            transform: l * eig.eigenvectors,
        }
    }

    fn dimension(&self) -> usize {
        self.eigen.len()
    }

    fn polynomial(&self, y: &[f64]) -> f64 {
        self.eigen.iter().zip(y).map(|(b, v)| b * v * v).sum::<f64>() + self.constant
    }

    fn emit(&self, y: &[f64], out: &mut Vec<f64>) {
        let x = &self.transform * DVector::from_column_slice(y);
        out.extend(x.iter());
    }
}

fn fill_normal(y: &mut [f64], rng: &mut dyn RngCore) {
    for v in y.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Dominates the target by `½(Σ bᵢ⁺yᵢ² + c̃⁺) φ(y)`, a finite mixture of a
/// standard normal and normals with one coordinate Maxwell-distributed.
/// The expected acceptance is exactly `1/Z` where `Z = ½(Σ bᵢ⁺ + c̃⁺)`.
#[derive(Debug, Clone)]
pub struct MixtureSampler {
    settings: SamplerSettings,
}

impl MixtureSampler {
    pub fn new(settings: SamplerSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self { settings })
    }

    /// Envelope mass `Z ≥ 1` for this marginal.
    pub fn envelope_mass(marginal: &MarginalForm) -> f64 {
        let w = Whitened::new(marginal);
        0.5 * (w.eigen.iter().map(|b| b.max(0.0)).sum::<f64>() + w.constant.max(0.0))
    }
}

impl QuadratureSampler for MixtureSampler {
    fn name(&self) -> &str {
        "mixture"
    }

    fn sample(&self, marginal: &MarginalForm, count: usize, rng: &mut dyn RngCore) -> Result<SampleDraw> {
        let w = Whitened::new(marginal);
        let d = w.dimension();
        let weights: Vec<f64> = w.eigen.iter().map(|b| b.max(0.0)).chain([w.constant.max(0.0)]).collect();
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0) || 2.0 / mass < self.settings.min_acceptance {
            return Err(Error::EnvelopeFailure { rate: 2.0 / mass });
        }
        let mut draw = SampleDraw {
            dimension: d,
            points: Vec::with_capacity(count * d),
            ..Default::default()
        };
        let mut y = vec![0.0; d];
        while draw.points.len() < count * d {
            draw.proposals += 1;
            let mut pick = rng.random::<f64>() * mass;
            let mut component = d;
            for (i, wt) in weights[..d].iter().enumerate() {
                if pick < *wt {
                    component = i;
                    break;
                }
                pick -= wt;
            }
            fill_normal(&mut y, rng);
            if component < d {
                let r: f64 = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum::<f64>().sqrt();
                y[component] = if rng.random::<bool>() { r } else { -r };
            }
            let envelope: f64 = weights[..d].iter().zip(&y).map(|(b, v)| b * v * v).sum::<f64>() + weights[d];
            let target = w.polynomial(&y);
            if rng.random::<f64>() * envelope < target {
                w.emit(&y, &mut draw.points);
            }
        }
        Ok(draw)
    }
}

/// Proposal `N(0, c·Σ)` with a probe-estimated envelope constant. If a later
/// proposal exceeds the envelope, the constant is raised and sampling restarts
/// so the accepted set stays exact.
#[derive(Debug, Clone)]
pub struct GaussianEnvelopeSampler {
    settings: SamplerSettings,
}

const MAX_RESTARTS: u32 = 50;

impl GaussianEnvelopeSampler {
    pub fn new(settings: SamplerSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self { settings })
    }

    fn ratio(&self, w: &Whitened, y: &[f64]) -> f64 {
        let c = self.settings.envelope_scale;
        let d = w.dimension() as f64;
        let r2: f64 = y.iter().map(|v| v * v).sum();
        0.5 * w.polynomial(y) * c.powf(d / 2.0) * (-0.5 * r2 * (1.0 - 1.0 / c)).exp()
    }

    fn propose(&self, y: &mut [f64], rng: &mut dyn RngCore) {
        fill_normal(y, rng);
        let s = self.settings.envelope_scale.sqrt();
        y.iter_mut().for_each(|v| *v *= s);
    }
}

impl QuadratureSampler for GaussianEnvelopeSampler {
    fn name(&self) -> &str {
        "gaussian-envelope"
    }

    fn sample(&self, marginal: &MarginalForm, count: usize, rng: &mut dyn RngCore) -> Result<SampleDraw> {
        let w = Whitened::new(marginal);
        let d = w.dimension();
        let mut y = vec![0.0; d];
        let mut peak = self.ratio(&w, &y);
        for _ in 0..self.settings.probe_points {
            self.propose(&mut y, rng);
            peak = peak.max(self.ratio(&w, &y));
        }
        let mut bound = peak * self.settings.safety_factor;
        let mut draw = SampleDraw {
            dimension: d,
            points: Vec::with_capacity(count * d),
            ..Default::default()
        };
        'restart: loop {
            if 1.0 / bound < self.settings.min_acceptance {
                return Err(Error::EnvelopeFailure { rate: 1.0 / bound });
            }
            draw.points.clear();
            while draw.points.len() < count * d {
                draw.proposals += 1;
                self.propose(&mut y, rng);
                let r = self.ratio(&w, &y);
                if r > bound {
                    draw.restarts += 1;
                    if draw.restarts > MAX_RESTARTS {
                        return Err(Error::EnvelopeFailure { rate: 1.0 / bound });
                    }
                    log::debug!("envelope exceeded ({r:.4} > {bound:.4}); restarting");
                    bound = r * self.settings.safety_factor;
                    continue 'restart;
                }
                if rng.random::<f64>() * bound < r {
                    w.emit(&y, &mut draw.points);
                }
            }
            return Ok(draw);
        }
    }
}

pub type SamplerRegistry = Registry<dyn QuadratureSampler, SamplerSettings>;

pub const DEFAULT_SAMPLER: &str = "mixture";

pub fn sampler_registry() -> SamplerRegistry {
    let mut r = SamplerRegistry::new("sampler");
    r.register("mixture", |s| Ok(Box::new(MixtureSampler::new(*s)?)));
    r.register("gaussian-envelope", |s| Ok(Box::new(GaussianEnvelopeSampler::new(*s)?)));
    r
}

#[derive(Debug, Clone, Default)]
pub struct SamplingReport {
    pub proposals: u64,
    pub accepted: u64,
    pub restarts: u32,
}

impl SamplingReport {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// `k` joint measurements of all modes for each of the three phase settings.
pub fn sample_joint_quadratures(
    form: &WignerForm,
    protocol: &PhaseProtocol,
    k: usize,
    sampler: &dyn QuadratureSampler,
    rng: &mut dyn RngCore,
    state_id: &str,
) -> Result<(QuadratureBatch, SamplingReport)> {
    let m = form.mode_count();
    if protocol.mode_count() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: protocol.mode_count(),
        });
    }
    let mut batch = QuadratureBatch::new(state_id, m);
    batch.entries.reserve(k * m * PHASE_SLOTS);
    let mut report = SamplingReport::default();
    for slot in 0..PHASE_SLOTS {
        let axes: Vec<QuadratureAxis> = (0..m)
            .map(|mode| QuadratureAxis {
                mode,
                phase: protocol.phases[mode][slot],
            })
            .collect();
        let marginal = form.marginal(&axes)?;
        let draw = sampler.sample(&marginal, k, rng)?;
        report.proposals += draw.proposals;
        report.accepted += draw.count() as u64;
        report.restarts += draw.restarts;
        for rep in 0..k {
            for (mode, value) in draw.point(rep).iter().enumerate() {
                batch.entries.push(QuadratureEntry {
                    repetition: rep as u32,
                    mode: (mode + 1) as u16,
                    phase_index: (slot + 1) as u8,
                    phase: axes[mode].phase,
                    value: *value,
                    is_vacuum_replacement: false,
                });
            }
        }
    }
    Ok((batch, report))
}
