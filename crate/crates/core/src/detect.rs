//! Negativity detectors: the trained network and MaxLik tomography behind one
//! interface, selected by name.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::bin_quadratures;
use crate::maxlik::{maxlik_reconstruct, maxlik_reconstruct_product, MaxLikSettings};
use crate::mlp::MlpModel;
use crate::quadrature::QuadratureBatch;
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub negative: bool,
    /// Network output probability, or the reconstructed `W(0)` for MaxLik.
    pub score: f64,
    /// Per-reconstruction log-likelihood traces (MaxLik only).
    pub log_likelihood: Vec<Vec<f64>>,
}

impl Assessment {
    /// Every recorded likelihood trace is non-decreasing up to `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.log_likelihood.iter().all(|t| t.windows(2).all(|w| w[1] >= w[0] - slack))
    }
}

pub trait NegativityDetector: Send + Sync {
    fn name(&self) -> &str;

    fn assess(&self, batch: &QuadratureBatch) -> Result<Assessment>;
}

#[derive(Debug, Clone)]
pub struct DetectorContext {
    pub mode_count: usize,
    pub model: Option<Arc<MlpModel>>,
    pub threshold: f64,
    pub maxlik: MaxLikSettings,
    /// MaxLik calls a state negative when `W(0)` is below this.
    pub cutoff: f64,
}

impl DetectorContext {
    pub fn new(mode_count: usize) -> Self {
        Self {
            mode_count,
            model: None,
            threshold: 0.5,
            maxlik: MaxLikSettings::default(),
            cutoff: 0.0,
        }
    }
}

pub struct NnDetector {
    model: Arc<MlpModel>,
    modes: usize,
    threshold: f64,
}

impl NnDetector {
    pub fn new(model: Arc<MlpModel>, modes: usize, threshold: f64) -> Result<Self> {
        let expected = crate::features::feature_len(modes);
        if model.input_len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: model.input_len(),
            });
        }
        Ok(Self { model, modes, threshold })
    }
}

impl NegativityDetector for NnDetector {
    fn name(&self) -> &str {
        "nn"
    }

    fn assess(&self, batch: &QuadratureBatch) -> Result<Assessment> {
        let features = bin_quadratures(batch, self.modes)?.features;
        let score = self.model.forward(&features)?;
        Ok(Assessment {
            negative: score > self.threshold,
            score,
            log_likelihood: Vec::new(),
        })
    }
}

pub struct MaxLikDetector {
    modes: usize,
    settings: MaxLikSettings,
    cutoff: f64,
    product: bool,
}

impl MaxLikDetector {
    pub fn joint(modes: usize, settings: MaxLikSettings, cutoff: f64) -> Self {
        Self {
            modes,
            settings,
            cutoff,
            product: false,
        }
    }

    /// Reconstructs every mode on its own and multiplies the parities.
    pub fn product(modes: usize, settings: MaxLikSettings, cutoff: f64) -> Self {
        Self {
            product: true,
            ..Self::joint(modes, settings, cutoff)
        }
    }
}

impl NegativityDetector for MaxLikDetector {
    fn name(&self) -> &str {
        if self.product {
            "maxlik-product"
        } else {
            "maxlik"
        }
    }

    fn assess(&self, batch: &QuadratureBatch) -> Result<Assessment> {
        let (score, log_likelihood) = if self.product {
            let r = maxlik_reconstruct_product(batch, self.modes, &self.settings)?;
            (r.wmin(), r.modes.into_iter().map(|m| m.log_likelihood).collect())
        } else {
            let r = maxlik_reconstruct(batch, self.modes, &self.settings)?;
            (r.wmin(), vec![r.log_likelihood])
        };
        Ok(Assessment {
            negative: score < self.cutoff,
            score,
            log_likelihood,
        })
    }
}

pub type DetectorRegistry = Registry<dyn NegativityDetector, DetectorContext>;

pub fn detector_registry() -> DetectorRegistry {
    let mut r = DetectorRegistry::new("detector");
    r.register("nn", |c: &DetectorContext| {
        let model = c
            .model
            .clone()
            .ok_or_else(|| Error::InvalidConfig("the nn detector needs a trained model".into()))?;
        Ok(Box::new(NnDetector::new(model, c.mode_count, c.threshold)?))
    });
    r.register("maxlik", |c: &DetectorContext| {
        Ok(Box::new(MaxLikDetector::joint(c.mode_count, c.maxlik, c.cutoff)))
    });
    r.register("maxlik-product", |c: &DetectorContext| {
        Ok(Box::new(MaxLikDetector::product(c.mode_count, c.maxlik, c.cutoff)))
    });
    r
}
