use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detector_registry, DetectorContext, NegativityDetector};
use crate::error::{Error, Result};
use crate::features::in_cutoff_band;
use crate::maxlik::MONOTONE_SLACK;
use crate::mlp::MlpModel;
use crate::rng::{domain, stream};

use super::config::ExperimentConfig;
use super::pipeline::{SimulatedState, StateGenerator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub k: usize,
    pub batch: usize,
    pub fraction_correct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub method: String,
    pub k: usize,
    pub mean: f64,
    /// Sample standard deviation over batches.
    pub std: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub summary: Vec<ComparisonSummary>,
    pub reconstructions: usize,
    /// Reconstructions whose likelihood trace ever decreased.
    pub non_monotone: usize,
    /// Candidate states discarded for falling in the cutoff band.
    pub band_rejected: usize,
}

impl ComparisonReport {
    pub fn summary_for(&self, method: &str, k: usize) -> Option<&ComparisonSummary> {
        self.summary.iter().find(|s| s.method == method && s.k == k)
    }
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Unit ids of batch `b` start here, so batches never share states.
const BATCH_STRIDE: u64 = 1 << 32;

/// `count` fresh states outside the cutoff band, drawn in candidate order.
/// States carry the largest budget in `compare.ks`.
pub fn fresh_states(cfg: &ExperimentConfig, batch: usize, count: usize) -> Result<(Vec<SimulatedState>, usize)> {
    let repetitions = cfg.compare.ks.iter().copied().max().unwrap_or(cfg.repetitions);
    let generator = StateGenerator::from_config(&ExperimentConfig {
        repetitions,
        ..cfg.clone()
    })?;
    let cutoff = generator.cutoff;
    let mut kept = Vec::with_capacity(count);
    let mut rejected = 0;
    let mut next = 0u64;
    while kept.len() < count {
        let chunk = (count - kept.len()).max(8) as u64;
        let drawn: Vec<SimulatedState> = (next..next + chunk)
            .into_par_iter()
            .map(|j| {
                let mut rng = stream(cfg.seed, domain::COMPARE, batch as u64 * BATCH_STRIDE + j);
                generator.simulate(format!("b{batch}-c{j:05}"), &mut rng)
            })
            .collect::<Result<_>>()?;
        next += chunk;
        for s in drawn {
            if kept.len() == count {
                break;
            }
            if cfg.band_filter && in_cutoff_band(s.form.wigner_min(), cutoff) {
                rejected += 1;
            } else {
                kept.push(s);
            }
        }
    }
    Ok((kept, rejected))
}

/// Classifies fresh states at each budget in `compare.ks`. For every budget
/// both detectors see the same batch: the first `k` repetitions of each slot.
pub fn run_comparison(cfg: &ExperimentConfig, model: Arc<MlpModel>) -> Result<ComparisonReport> {
    cfg.validate()?;
    let settings = &cfg.compare;
    let cutoff = cfg.effective_cutoff();
    let registry = detector_registry();
    let context = DetectorContext {
        mode_count: cfg.mode_count,
        model: Some(model),
        threshold: cfg.train.threshold,
        maxlik: cfg.maxlik,
        cutoff: settings.maxlik_cutoff.unwrap_or(cutoff),
    };
    let detectors: Vec<Box<dyn NegativityDetector>> = [&settings.nn_detector, &settings.benchmark_detector]
        .iter()
        .map(|name| registry.create(name, &context))
        .collect::<Result<_>>()?;
    if detectors[0].name() == detectors[1].name() {
        return Err(Error::InvalidConfig("the comparison needs two different detectors".into()));
    }

    let mut rows = Vec::new();
    let (mut reconstructions, mut non_monotone, mut band_rejected) = (0, 0, 0);
    for batch in 0..settings.batches {
        let (states, rejected) = fresh_states(cfg, batch, settings.states_per_batch)?;
        band_rejected += rejected;
        // verdicts[state][k][detector] = (correct, traces, non-monotone traces)
        let verdicts: Vec<Vec<Vec<(bool, usize, usize)>>> = states
            .par_iter()
            .map(|s| {
                let truth = s.form.wigner_min() < cutoff;
                settings
                    .ks
                    .iter()
                    .map(|&k| {
                        let reduced = s.batch.truncated(k);
                        detectors
                            .iter()
                            .map(|d| {
                                let a = d.assess(&reduced)?;
                                let bad = usize::from(!a.is_monotone(MONOTONE_SLACK));
                                Ok((a.negative == truth, a.log_likelihood.len(), bad))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for (ki, &k) in settings.ks.iter().enumerate() {
            for (di, d) in detectors.iter().enumerate() {
                let correct = verdicts.iter().filter(|v| v[ki][di].0).count();
                rows.push(ComparisonRow {
                    method: d.name().to_string(),
                    k,
                    batch,
                    fraction_correct: correct as f64 / states.len() as f64,
                });
                reconstructions += verdicts.iter().map(|v| v[ki][di].1).sum::<usize>();
                non_monotone += verdicts.iter().map(|v| v[ki][di].2).sum::<usize>();
            }
        }
        log::info!("comparison batch {}/{} done", batch + 1, settings.batches);
    }
    let summary = summarize(&rows);
    Ok(ComparisonReport {
        rows,
        summary,
        reconstructions,
        non_monotone,
        band_rejected,
    })
}

pub fn summarize(rows: &[ComparisonRow]) -> Vec<ComparisonSummary> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(m, k)| m == &r.method && *k == r.k) {
            keys.push((r.method.clone(), r.k));
        }
    }
    keys.into_iter()
        .map(|(method, k)| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.k == k)
                .map(|r| r.fraction_correct)
                .collect();
            let (mean, std) = mean_and_std(&values);
            ComparisonSummary {
                method,
                k,
                mean,
                std,
                batches: values.len(),
            }
        })
        .collect()
}

pub fn write_rows_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for (i, r) in csv::Reader::from_reader(input).deserialize().enumerate() {
        rows.push(r.map_err(|e| Error::MalformedRow {
            line: i + 2,
            reason: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(summary: &[ComparisonSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_by_hand() {
        let (m, s) = mean_and_std(&[0.8, 0.9, 1.0]);
        assert!((m - 0.9).abs() < 1e-15);
        assert!((s - 0.1).abs() < 1e-12);
        assert_eq!(mean_and_std(&[0.5]), (0.5, 0.0));
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let rows = vec![
            ComparisonRow { method: "nn".into(), k: 1000, batch: 0, fraction_correct: 0.93 },
            ComparisonRow { method: "maxlik".into(), k: 10, batch: 5, fraction_correct: 0.1 + 0.2 },
        ];
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("method,k,batch,fraction_correct\n"));
        assert_eq!(read_rows_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn summary_groups_by_method_and_budget() {
        let row = |m: &str, k, b, f| ComparisonRow { method: m.into(), k, batch: b, fraction_correct: f };
        let rows = vec![row("nn", 10, 0, 0.6), row("nn", 10, 1, 0.8), row("maxlik", 10, 0, 0.5), row("maxlik", 10, 1, 0.5)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert!((s[0].mean - 0.7).abs() < 1e-12 && s[0].batches == 2);
        assert_eq!(s[1].std, 0.0);
    }

    #[test]
    fn tiny_comparison_runs_both_detectors_on_each_budget() {
        let cfg = ExperimentConfig {
            mode_count: 1,
            repetitions: 60,
            maxlik: crate::maxlik::MaxLikSettings { cutoff_photons: 3, iterations: 5, ..Default::default() },
            compare: super::super::config::CompareSettings {
                ks: vec![60, 20],
                states_per_batch: 4,
                batches: 2,
                ..Default::default()
            },
            ..ExperimentConfig::default()
        };
        let model = Arc::new(MlpModel::init(&[15, 6, 1], 3).unwrap());
        let report = run_comparison(&cfg, model).unwrap();
        assert_eq!(report.rows.len(), 2 * 2 * 2);
        assert_eq!(report.reconstructions, 2 * 2 * 4);
        assert_eq!(report.non_monotone, 0);
        assert!(report.summary_for("maxlik", 20).is_some());
        let again = run_comparison(&cfg, Arc::new(MlpModel::init(&[15, 6, 1], 3).unwrap())).unwrap();
        assert_eq!(again, report);
    }
}
