use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{in_cutoff_band, split_dataset, Dataset, DatasetHeader, LabeledExample};
use crate::rng::{derive_seed, domain, stream};

use super::config::ExperimentConfig;
use super::pipeline::StateGenerator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub requested: usize,
    pub kept: usize,
    pub band_filtered: usize,
    pub degenerate_resamples: usize,
    pub positives: usize,
    pub sampler: String,
    pub min_acceptance: f64,
    pub mean_acceptance: f64,
    pub empty_groups: usize,
}

pub struct Corpus {
    pub dataset: Dataset,
    pub stats: CorpusStats,
}

struct Unit {
    example: LabeledExample,
    resamples: usize,
    acceptance: f64,
    empty_groups: usize,
}

/// Simulates `corpus_size` states (state `i` on its own stream), drops the
/// cutoff band and splits train/validation. Independent of the worker count.
pub fn generate_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    cfg.validate()?;
    let generator = StateGenerator::from_config(cfg)?;
    let cutoff = generator.cutoff;
    let units: Vec<Unit> = (0..cfg.corpus_size)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, domain::STATE, i as u64);
            let state = generator.simulate(format!("s{i:06}"), &mut rng)?;
            let binned = crate::features::bin_quadratures(&state.batch, cfg.mode_count)?;
            Ok(Unit {
                example: LabeledExample::new(state.id, binned.features, state.form.wigner_min(), cutoff),
                resamples: state.resamples,
                acceptance: state.sampling.acceptance_rate(),
                empty_groups: binned.empty_groups.len(),
            })
        })
        .collect::<Result<_>>()?;

    let degenerate_resamples = units.iter().map(|u| u.resamples).sum();
    let empty_groups = units.iter().map(|u| u.empty_groups).sum();
    let min_acceptance = units.iter().map(|u| u.acceptance).fold(f64::INFINITY, f64::min);
    let mean_acceptance = units.iter().map(|u| u.acceptance).sum::<f64>() / units.len() as f64;
    let examples: Vec<LabeledExample> = units
        .into_iter()
        .map(|u| u.example)
        .filter(|e| !(cfg.band_filter && in_cutoff_band(e.w_min, cutoff)))
        .collect();
    if degenerate_resamples > 0 {
        log::info!("{degenerate_resamples} degenerate subtractions were redrawn");
    }

    let stats = CorpusStats {
        requested: cfg.corpus_size,
        kept: examples.len(),
        band_filtered: cfg.corpus_size - examples.len(),
        degenerate_resamples,
        positives: examples.iter().filter(|e| e.label).count(),
        sampler: cfg.sampler.clone(),
        min_acceptance,
        mean_acceptance,
        empty_groups,
    };
    let mut header = DatasetHeader::new(cfg.mode_count, cutoff, cfg.seed);
    header.provenance = serde_json::json!({
        "repetitions": cfg.repetitions,
        "prior": cfg.prior,
        "phase_intervals": cfg.phase_intervals,
        "split_ratio": cfg.split_ratio,
        "split_seed": derive_seed(cfg.seed, domain::SPLIT, 0),
        "state_seeds": format!("stream({}, {}, i) for i < {}", cfg.seed, domain::STATE, cfg.corpus_size),
        "stats": stats,
    });
    let mut dataset = Dataset::new(header, examples)?;
    split_dataset(&mut dataset, cfg.split_ratio, &mut stream(cfg.seed, domain::SPLIT, 0))?;
    Ok(Corpus { dataset, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{feature_len, Split};

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            mode_count: 2,
            corpus_size: 60,
            repetitions: 40,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn corpus_is_filtered_split_and_deterministic() {
        let cfg = small();
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let d = &a.dataset;
        assert_eq!(d.len() + a.stats.band_filtered, 60);
        let c = cfg.effective_cutoff();
        assert!(d.examples.iter().all(|e| !in_cutoff_band(e.w_min, c) && e.features.len() == feature_len(2)));
        assert!(d.examples.iter().all(|e| e.split != Split::Unassigned));
        assert_eq!(a.stats.positives, d.examples.iter().filter(|e| e.label).count());
    }

    #[test]
    fn worker_count_does_not_change_the_corpus() {
        let cfg = small();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = serial.install(|| generate_corpus(&cfg)).unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let b = wide.install(|| generate_corpus(&cfg)).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }
}
