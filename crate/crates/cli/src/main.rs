use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvneg::features::{Dataset, LabeledExample, Split};
use cvneg::harness::compare::{write_rows_csv, write_summary_csv};
use cvneg::harness::curves::{write_pr_csv, write_roc_csv, GRID_POINTS};
use cvneg::harness::robustness::analog_summary;
use cvneg::harness::{
    generate_corpus, ingest_csv, model_curves, run_comparison, run_robustness, simulate_analog, train_ensemble,
    ExperimentConfig, IngestSchema, Manifest, OutputSink,
};
use cvneg::mlp::train::write_history_csv;
use cvneg::mlp::{evaluate, grid_search, train, MlpModel};
use cvneg::quadrature::QuadratureBatch;
use cvneg::{Error, Result};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "cvneg", version, about = "Wigner negativity from homodyne histograms")]
struct Cli {
    /// Experiment configuration (JSON); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a labeled corpus of binned quadrature histograms.
    Generate(GenerateArgs),
    /// Train a classifier on a corpus.
    Train(TrainArgs),
    /// Confusion counts and accuracy of a model on a corpus.
    Evaluate(EvalArgs),
    /// Network versus MaxLik at several data budgets.
    Compare(CompareArgs),
    /// Network consensus and MaxLik under injected loss.
    Robustness(RobustnessArgs),
    /// ROC and precision-recall curves.
    Curves(EvalArgs),
    /// Convert an external quadrature CSV to the batch format.
    Ingest(IngestArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    /// Joint repetitions per phase slot.
    #[arg(long)]
    repetitions: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Search the configured hyperparameter grid.
    #[arg(long)]
    grid: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    All,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "validation")]
    split: SplitArg,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct RobustnessArgs {
    /// Base quadrature file; the simulated analog is used when absent.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Trained two-mode models; an ensemble is trained when absent.
    #[arg(long, num_args = 1..)]
    models: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Schema JSON; the flags below override its fields.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    mode_column: Option<String>,
    #[arg(long)]
    phase_column: Option<String>,
    #[arg(long)]
    value_column: Option<String>,
    #[arg(long)]
    repetition_column: Option<String>,
    #[arg(long)]
    mode_base: Option<u16>,
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long)]
    state_id: Option<String>,
}

struct Run {
    config: ExperimentConfig,
    sink: OutputSink,
    command: &'static str,
    timestamp: String,
    inputs: Vec<String>,
}

impl Run {
    fn finish(self, summary: serde_json::Value) -> Result<PathBuf> {
        let manifest = Manifest {
            command: self.command.into(),
            timestamp: self.timestamp,
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.config.seed,
            config: serde_json::to_value(&self.config)?,
            inputs: self.inputs,
            outputs: Vec::new(),
            summary,
        };
        self.sink.finish(manifest)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Generate(_) => "generate",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Compare(_) => "compare",
        Command::Robustness(_) => "robustness",
        Command::Curves(_) => "curves",
        Command::Ingest(_) => "ingest",
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn selected(dataset: &Dataset, split: SplitArg) -> Vec<&LabeledExample> {
    match split {
        SplitArg::Train => dataset.split(Split::Train),
        SplitArg::Validation => dataset.split(Split::Validation),
        SplitArg::All => dataset.examples.iter().collect(),
    }
}

fn load_pair(args: &EvalArgs, run: &mut Run) -> Result<(MlpModel, Dataset)> {
    let model = MlpModel::load(&args.model)?;
    let dataset = Dataset::load(&args.dataset)?;
    run.inputs.push(args.model.display().to_string());
    run.inputs.push(args.dataset.display().to_string());
    Ok((model, dataset))
}

fn nonempty(examples: Vec<&LabeledExample>) -> Result<Vec<&LabeledExample>> {
    if examples.is_empty() {
        return Err(Error::InvalidInput("the selected split is empty".into()));
    }
    Ok(examples)
}

/// The model remembers the corpus it was trained on; its mode count and
/// cutoff take precedence over the configuration.
fn adopt_model_corpus(cfg: &mut ExperimentConfig, model: &MlpModel) {
    if let Some(h) = &model.dataset {
        cfg.mode_count = h.mode_count;
        cfg.cutoff = Some(h.cutoff);
    }
}

fn execute(cli: Cli) -> Result<PathBuf> {
    let config = load_config(&cli)?;
    config.validate()?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::InvalidConfig("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let command = command_name(&cli.command);
    let timestamp = chrono::Local::now().format("%Y%m%d-%H%M%S-%3f").to_string();
    let sink = OutputSink::new(&cli.out_dir, command, &timestamp)?;
    let mut run = Run {
        config,
        sink,
        command,
        timestamp,
        inputs: Vec::new(),
    };

    match cli.command {
        Command::Generate(args) => {
            let cfg = &mut run.config;
            cfg.mode_count = args.modes.unwrap_or(cfg.mode_count);
            cfg.corpus_size = args.size.unwrap_or(cfg.corpus_size);
            cfg.repetitions = args.repetitions.unwrap_or(cfg.repetitions);
            cfg.validate()?;
            let corpus = generate_corpus(cfg)?;
            run.sink.write("dataset.csv", |w| corpus.dataset.write(w))?;
            log::info!(
                "{} states kept of {}, {} positive",
                corpus.stats.kept,
                corpus.stats.requested,
                corpus.stats.positives
            );
            run.finish(serde_json::to_value(&corpus.stats)?)
        }
        Command::Train(args) => {
            let dataset = Dataset::load(&args.dataset)?;
            run.inputs.push(args.dataset.display().to_string());
            let (outcome, grid) = match (&run.config.grid, args.grid) {
                (Some(g), true) => {
                    let result = grid_search(&dataset, &g.expand(&run.config.train))?;
                    let chosen = result.configs[result.best].clone();
                    let losses = result.val_losses.clone();
                    (result.outcome, json!({ "chosen": chosen, "val_losses": losses }))
                }
                (None, true) => return Err(Error::InvalidConfig("--grid needs a `grid` entry in the configuration".into())),
                _ => (train(&dataset, &run.config.train)?, serde_json::Value::Null),
            };
            run.sink.write("model.json", |w| {
                use std::io::Write;
                write!(w, "{}", outcome.model.to_json()?)?;
                Ok(())
            })?;
            run.sink.write("history.csv", |w| write_history_csv(&outcome.history, w))?;
            let val = dataset.split(Split::Validation);
            let metrics = evaluate(&outcome.model, &val, run.config.train.threshold)?;
            log::info!("best epoch {}, validation accuracy {:.4}", outcome.best_epoch, metrics.accuracy);
            run.finish(json!({
                "best_epoch": outcome.best_epoch,
                "best_val_loss": outcome.best_val_loss,
                "validation": metrics,
                "grid": grid,
            }))
        }
        Command::Evaluate(args) => {
            let (model, dataset) = load_pair(&args, &mut run)?;
            let examples = nonempty(selected(&dataset, args.split))?;
            let metrics = evaluate(&model, &examples, run.config.train.threshold)?;
            run.sink.write_json("metrics.json", &metrics)?;
            log::info!("accuracy {:.4} on {} examples", metrics.accuracy, metrics.total);
            run.finish(serde_json::to_value(&metrics)?)
        }
        Command::Curves(args) => {
            let (model, dataset) = load_pair(&args, &mut run)?;
            let examples = nonempty(selected(&dataset, args.split))?;
            let curves = model_curves(&model, &examples, GRID_POINTS)?;
            run.sink.write("roc.csv", |w| write_roc_csv(&curves.roc, w))?;
            run.sink.write("pr.csv", |w| write_pr_csv(&curves.pr, w))?;
            run.sink.write_json("curves.json", &curves.summary)?;
            log::info!("AUC {:.4}", curves.summary.auc_exact);
            run.finish(serde_json::to_value(&curves.summary)?)
        }
        Command::Compare(args) => {
            let model = MlpModel::load(&args.model)?;
            run.inputs.push(args.model.display().to_string());
            adopt_model_corpus(&mut run.config, &model);
            let report = run_comparison(&run.config, Arc::new(model))?;
            run.sink.write("comparison.csv", |w| write_rows_csv(&report.rows, w))?;
            run.sink.write("summary.csv", |w| write_summary_csv(&report.summary, w))?;
            run.finish(json!({
                "summary": report.summary,
                "reconstructions": report.reconstructions,
                "non_monotone": report.non_monotone,
                "band_rejected": report.band_rejected,
            }))
        }
        Command::Robustness(args) => {
            let base = match &args.base {
                Some(p) => {
                    run.inputs.push(p.display().to_string());
                    QuadratureBatch::read_csv(std::fs::File::open(p)?, None)?
                }
                None => {
                    let b = simulate_analog(&run.config)?;
                    run.sink.write("base.csv", |w| b.write_csv(w))?;
                    b
                }
            };
            let (models, accuracy) = if args.models.is_empty() {
                let ensemble = train_ensemble(&run.config)?;
                for (i, m) in ensemble.models.iter().enumerate() {
                    run.sink.write(&format!("model_{i:02}.json"), |w| {
                        use std::io::Write;
                        write!(w, "{}", m.to_json()?)?;
                        Ok(())
                    })?;
                }
                (ensemble.models, ensemble.validation_accuracy)
            } else {
                let models = args.models.iter().map(|p| MlpModel::load(p)).collect::<Result<Vec<_>>>()?;
                run.inputs.extend(args.models.iter().map(|p| p.display().to_string()));
                (models, Vec::new())
            };
            let report = run_robustness(&run.config, &base, &models)?;
            run.sink.write("levels.csv", |w| report.write_levels_csv(w))?;
            run.sink.write("trainings.csv", |w| report.write_trainings_csv(w))?;
            run.sink.write_json("report.json", &report)?;
            let analog = args.base.is_none().then(|| analog_summary(&run.config.robustness.analog)).transpose()?;
            run.finish(json!({
                "maxlik_sign_change": report.maxlik_sign_change(),
                "nn_flip": report.nn_flip(),
                "validation_accuracy": accuracy,
                "analog": analog,
            }))
        }
        Command::Ingest(args) => {
            let mut schema = match &args.schema {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                    .map_err(|e| Error::InvalidConfig(format!("schema: {e}")))?,
                None => IngestSchema {
                    intervals: run.config.phase_intervals,
                    ..IngestSchema::default()
                },
            };
            override_schema(&mut schema, &args);
            run.inputs.push(args.input.display().to_string());
            let (batch, report) = ingest_csv(open(&args.input)?, &schema)?;
            run.sink.write("batch.csv", |w| batch.write_csv(w))?;
            log::info!("{} entries over {} modes", report.rows, report.mode_count);
            run.finish(json!({ "schema": schema, "report": report }))
        }
    }
}

fn override_schema(schema: &mut IngestSchema, args: &IngestArgs) {
    if let Some(v) = &args.mode_column {
        schema.mode_column = v.clone();
    }
    if let Some(v) = &args.phase_column {
        schema.phase_column = v.clone();
    }
    if let Some(v) = &args.value_column {
        schema.value_column = v.clone();
    }
    if args.repetition_column.is_some() {
        schema.repetition_column = args.repetition_column.clone();
    }
    if let Some(v) = args.mode_base {
        schema.mode_base = v;
    }
    if let Some(v) = args.delimiter {
        schema.delimiter = v;
    }
    if let Some(v) = &args.state_id {
        schema.state_id = v.clone();
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    Ok(std::fs::File::open(path)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
