//! Experiment driver: corpus generation, the data-budget comparison, the loss
//! robustness study, classifier curves and ingestion of external data.

pub mod compare;
pub mod config;
pub mod curves;
pub mod generate;
pub mod ingest;
pub mod output;
pub mod pipeline;
pub mod robustness;

pub use compare::{run_comparison, ComparisonReport, ComparisonRow};
pub use config::{AnalogSettings, CompareSettings, ExperimentConfig, RobustnessSettings};
pub use curves::{model_curves, Curves};
pub use generate::{generate_corpus, Corpus, CorpusStats};
pub use ingest::{ingest_csv, IngestReport, IngestSchema};
pub use output::{Manifest, OutputSink};
pub use pipeline::{SimulatedState, StateGenerator};
pub use robustness::{run_robustness, simulate_analog, train_ensemble, RobustnessReport};
