use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use marble::agents::{MlModel, PosteriorModel};
use marble::eval::{
    compute_metrics, default_scenarios, labels_of, most_skewed, run_ablation, run_imbalance_suite, write_json,
    write_summary_csv, ImbalanceScenario, SummaryRow,
};
use marble::features::{ingest_csv, IngestOptions};
use marble::{AccidentRecord, CoordinationMode, Engine, EngineConfig, FeatureRegistry, Outcome};

#[derive(Parser)]
#[command(name = "marble", version, about = "Multi-agent accident severity prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict severities for a CSV and write one trace line per record.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Rule)]
        mode: Mode,
        /// Predictions CSV; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predictions on a labeled CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = EvalMode::Rule)]
        mode: EvalMode,
        #[arg(long, default_value = "marble-eval")]
        out_dir: PathBuf,
    },
    /// Remove each agent in turn, and the weighted coordinator, and score.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "marble-ablation")]
        out_dir: PathBuf,
    },
    /// Resample to several label distributions and compare coordinators.
    Imbalance {
        #[command(flatten)]
        common: Common,
        /// JSON list of `{"name", "distribution": {"1": p1, ..}}`; the six
        /// built-in scenarios when omitted.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Records per scenario; defaults to the input size.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value = "marble-imbalance")]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Feature-to-domain assignment; the built-in table when omitted.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Labeled CSV for the ML agent. Without it the labeled rows of
    /// `--input` are used, and without labels the ML agent is left out.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    no_ml: bool,
    #[arg(long, default_value_t = 1000)]
    bad_row_budget: usize,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Rule,
    Llm,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EvalMode {
    Rule,
    Llm,
    Both,
}

impl From<Mode> for CoordinationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Rule => CoordinationMode::RuleBased,
            Mode::Llm => CoordinationMode::LlmBased,
        }
    }
}

fn mode_label(m: CoordinationMode) -> &'static str {
    match m {
        CoordinationMode::RuleBased => "rule_based",
        CoordinationMode::LlmBased => "llm_based",
        CoordinationMode::MajorityVote => "majority_vote",
    }
}

struct Setup {
    engine: Engine,
    records: Vec<AccidentRecord>,
}

fn setup(c: &Common) -> marble::Result<Setup> {
    let cfg = EngineConfig::from_path(&c.config)?;
    let registry = match &c.registry {
        Some(p) => FeatureRegistry::from_path(p)?,
        None => FeatureRegistry::default(),
    };
    let opts = IngestOptions {
        bad_row_budget: c.bad_row_budget,
        ..IngestOptions::default()
    };
    let data = ingest_csv(&c.input, &registry, &opts)?;
    for e in &data.row_errors {
        eprintln!("skipped {e}");
    }
    let ml: Option<Arc<dyn PosteriorModel>> = if c.no_ml {
        None
    } else if let Some(t) = &c.train {
        let train = ingest_csv(t, &registry, &opts)?;
        Some(Arc::new(MlModel::train(&train.records)?))
    } else {
        let labeled: Vec<_> = data.records.iter().filter(|r| r.label.is_some()).cloned().collect();
        if labeled.is_empty() {
            eprintln!("no labeled rows; running without the ML agent");
            None
        } else {
            Some(Arc::new(MlModel::train(&labeled)?))
        }
    };
    let mut engine = Engine::from_config(cfg, registry, ml)?;
    if let Some(n) = c.workers {
        engine = engine.with_workers(n);
    }
    Ok(Setup {
        engine,
        records: data.records,
    })
}

fn write_predictions(out: &mut dyn Write, records: &[AccidentRecord], outcomes: &[Outcome]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "prediction", "confidence", "source", "rule"])?;
    for (r, o) in records.iter().zip(outcomes) {
        match o {
            Outcome::Decided(d) => w.write_record([
                r.id.clone(),
                d.prediction.to_string(),
                format!("{:.4}", d.confidence),
                d.source.to_string(),
                d.rule_fired.to_string(),
            ])?,
            Outcome::Abstained => w.write_record([r.id.as_str(), "abstain", "", "", ""])?,
        }
    }
    w.flush()
}

fn ensure_dir(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)
}

fn run(cli: Cli) -> marble::Result<()> {
    match cli.command {
        Command::Predict {
            common,
            trace,
            mode,
            output,
        } => {
            let s = setup(&common)?;
            let engine = s.engine.with_mode(mode.into());
            let outcomes = engine.run_batch(&s.records, &trace)?;
            match output {
                Some(p) => write_predictions(&mut std::fs::File::create(p)?, &s.records, &outcomes)?,
                None => write_predictions(&mut std::io::stdout().lock(), &s.records, &outcomes)?,
            }
        }
        Command::Eval { common, mode, out_dir } => {
            let s = setup(&common)?;
            ensure_dir(&out_dir)?;
            let labels = labels_of(&s.records).map_err(marble::Error::from)?;
            let modes = match mode {
                EvalMode::Rule => vec![CoordinationMode::RuleBased],
                EvalMode::Llm => vec![CoordinationMode::LlmBased],
                EvalMode::Both => vec![CoordinationMode::RuleBased, CoordinationMode::LlmBased],
            };
            let mut rows = Vec::new();
            for m in modes {
                let engine = s.engine.with_mode(m);
                let label = mode_label(m);
                let outcomes = engine.run_batch(&s.records, out_dir.join(format!("trace_{label}.jsonl")))?;
                let preds: Vec<_> = outcomes.iter().map(Outcome::prediction).collect();
                let report = compute_metrics(&preds, &labels).map_err(marble::Error::from)?;
                write_json(out_dir.join(format!("metrics_{label}.json")), &report)?;
                println!("{label}: accuracy {:.4}  macro F1 {:.4}", report.accuracy, report.f1);
                rows.push(SummaryRow::new("eval", "full", label, &report));
            }
            write_summary_csv(out_dir.join("summary.csv"), &rows)?;
        }
        Command::Ablate { common, out_dir } => {
            let s = setup(&common)?;
            ensure_dir(&out_dir)?;
            let report = run_ablation(&s.engine, &s.records).map_err(marble::Error::from)?;
            write_json(out_dir.join("ablation.json"), &report)?;
            write_summary_csv(
                out_dir.join("summary.csv"),
                &report.summary_rows(mode_label(s.engine.config().coordination_mode)),
            )?;
            for (k, m) in &report.reports {
                let drop = report.relative_drop.get(k).map(|d| format!("  drop {:+.2}%", d * 100.0)).unwrap_or_default();
                println!("{k:<16} accuracy {:.4}{drop}", m.accuracy);
            }
        }
        Command::Imbalance {
            common,
            scenarios,
            seed,
            size,
            out_dir,
        } => {
            let scenarios = match scenarios {
                Some(p) => ImbalanceScenario::load(p)?,
                None => default_scenarios(),
            };
            let s = setup(&common)?;
            ensure_dir(&out_dir)?;
            let size = size.unwrap_or(s.records.len());
            let report =
                run_imbalance_suite(&s.engine, &s.records, &scenarios, size, seed).map_err(marble::Error::from)?;
            write_json(out_dir.join("imbalance.json"), &report)?;
            write_summary_csv(out_dir.join("summary.csv"), &report.summary_rows())?;
            for (k, r) in &report.scenarios {
                println!(
                    "{k:<20} rule F1 {:.4}  llm F1 {:.4}  llm fallback {:.1}%",
                    r.rule_based.f1,
                    r.llm_based.f1,
                    r.llm_fallback_rate * 100.0
                );
            }
            if let (Some(first), Some(worst)) = (scenarios.first(), most_skewed(&scenarios)) {
                if let Some((rb, llm)) = report.f1_degradation(&first.name, &worst.name) {
                    println!("F1 lost {} -> {}: rule {rb:.4}, llm {llm:.4}", first.name, worst.name);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("marble: {e}");
            ExitCode::FAILURE
        }
    }
}
