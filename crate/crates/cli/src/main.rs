use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use titan_core::action::{action_samples, evaluate_action, train_action, ActionConfig, ActionModel};
use titan_core::ego::{ego_samples, train_ego, EgoConfig, EgoNetwork, EgoVariant};
use titan_core::error::{Error, Result};
use titan_core::experiment::{
    baseline_box_records, baseline_ego_records, ego_records, fol_records, run_experiment, with_forecast_futures, Corpus,
    EgoFutures, ExperimentConfig,
};
use titan_core::fol::{fol_samples, train_fol, ActionSource, FolAblation, FolConfig, FolNetwork};
use titan_core::metrics::{evaluate, write_report_dir, Report};
use titan_core::records::{read_jsonl, write_jsonl, BoxRecord, EgoRecord};
use titan_core::synth::generate_corpus;
use titan_core::training::TrainLog;

#[derive(Parser)]
#[command(name = "titan", version, about = "Synthetic driving scenes, forecasting models and their evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment config (TOML). Defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorpusArg {
    /// Corpus directory written by `generate`.
    #[arg(long, visible_alias = "truth")]
    corpus: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus using the config's `[corpus]` table.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the action classifier.
    TrainAction {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpus: CorpusArg,
    },
    /// Train one FOL variant.
    TrainFol {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpus: CorpusArg,
        /// Ablation name, e.g. `vanilla`, `EP+IP`.
        #[arg(long, default_value = "EP+IP+AP")]
        ablation: String,
    },
    /// Train one ego variant.
    TrainEgo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long, default_value = "AIM")]
        variant: String,
    },
    /// Forecast boxes on the test split with FOL checkpoints and baselines.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpus: CorpusArg,
        /// Action checkpoint. Without it, ground-truth actions are used.
        #[arg(long)]
        action: Option<PathBuf>,
        /// FOL checkpoints; repeat for several.
        #[arg(long = "fol")]
        fol: Vec<PathBuf>,
        /// Baselines to add: `const-vel`, `const-vel-scaled` or `none`. All by default.
        #[arg(long = "baseline")]
        baseline: Vec<String>,
    },
    /// Forecast ego motion on the test split.
    PredictEgo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpus: CorpusArg,
        /// Ego checkpoints; repeat for several.
        #[arg(long = "ego")]
        ego: Vec<PathBuf>,
        /// Box predictions to use as agent futures. Without it, true futures are used.
        #[arg(long)]
        boxes: Option<PathBuf>,
        /// Which method in `--boxes` supplies the futures.
        #[arg(long, default_value = "EP+IP+AP")]
        chain: String,
        /// Action checkpoint. Without it, ground-truth actions are used.
        #[arg(long)]
        action: Option<PathBuf>,
        /// Baselines to add: `const-vel`, `const-acc` or `none`. All by default.
        #[arg(long = "baseline")]
        baseline: Vec<String>,
    },
    /// Score prediction files against the test split, writing report.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpus: CorpusArg,
        /// Box predictions (JSONL).
        #[arg(long, visible_alias = "pred")]
        boxes: Option<PathBuf>,
        /// Ego predictions (JSONL).
        #[arg(long)]
        ego: Option<PathBuf>,
        /// Action checkpoint to score with per-frame mAP.
        #[arg(long)]
        action: Option<PathBuf>,
    },
    /// Render report.json into markdown tables and SVG plots.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, visible_alias = "in")]
        report: PathBuf,
    },
    /// Run every stage, reusing valid checkpoints under `--out`.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::TrainAction { .. } => "train-action",
            Command::TrainFol { .. } => "train-fol",
            Command::TrainEgo { .. } => "train-ego",
            Command::Predict { .. } => "predict",
            Command::PredictEgo { .. } => "predict-ego",
            Command::Eval { .. } => "eval",
            Command::Report { .. } => "report",
            Command::Run { .. } => "run",
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Invalid(format!("cannot create {}: {e}", dir.display())))?;
    }
    Ok(())
}

/// Method names selected by `--baseline` flags; all of them when none are given.
fn pick(flags: &[String], known: &[(&str, &'static str)]) -> Result<Vec<&'static str>> {
    if flags.is_empty() {
        return Ok(known.iter().map(|k| k.1).collect());
    }
    let mut out = Vec::new();
    for f in flags {
        if f == "none" {
            continue;
        }
        match known.iter().find(|k| k.0 == f || k.1 == f) {
            Some(k) => out.push(k.1),
            None => {
                let names: Vec<&str> = known.iter().map(|k| k.0).collect();
                return Err(Error::Invalid(format!("unknown baseline `{f}` (expected one of {}, none)", names.join(", "))));
            }
        }
    }
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn write_log(out: &Path, log: &TrainLog) -> Result<()> {
    let path = out.with_extension("log.json");
    write(&path, &serde_json::to_string_pretty(log).expect("log serializes"))
}

fn progress(stage: &str) -> impl FnMut(&titan_core::training::EpochLog) + '_ {
    move |e| match e.val_loss {
        Some(v) => eprintln!("[{stage}] epoch {} train {:.4} val {:.4}", e.epoch, e.train_loss, v),
        None => eprintln!("[{stage}] epoch {} train {:.4}", e.epoch, e.train_loss),
    }
}

fn load_action(path: &Option<PathBuf>) -> Result<Option<ActionModel>> {
    path.as_deref().map(|p| ActionModel::from_checkpoint(&read(p)?)).transpose()
}

fn source(model: &Option<ActionModel>) -> ActionSource<'_> {
    model.as_ref().map_or(ActionSource::GroundTruth, ActionSource::Predicted)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate { common } => {
            let mut config = load_config(&common)?;
            if let Some(seed) = common.seed {
                config.corpus.seed = seed;
            }
            let manifest = generate_corpus(&config.corpus, &common.out)?;
            eprintln!(
                "[generate] {} train / {} val / {} test clips in {}",
                manifest.train.len(),
                manifest.val.len(),
                manifest.test.len(),
                common.out.display()
            );
        }
        Command::TrainAction { common, corpus } => {
            let config = load_config(&common)?;
            let corpus = Corpus::load(&corpus.corpus)?;
            let action_cfg = ActionConfig {
                hidden: config.action.hidden,
                layers: config.action.layers,
                ..Default::default()
            };
            let (model, log) = train_action(
                &action_samples(&corpus.train, config.stride),
                &action_samples(&corpus.val, config.stride),
                action_cfg,
                &config.action.train,
                config.seed,
                progress("train-action"),
            )?;
            write(&common.out, &model.to_checkpoint())?;
            write_log(&common.out, &log)?;
        }
        Command::TrainFol { common, corpus, ablation } => {
            let config = load_config(&common)?;
            let corpus = Corpus::load(&corpus.corpus)?;
            let fol_cfg = FolConfig {
                hidden: config.fol.hidden,
                ablation: FolAblation::parse(&ablation)?,
                residual: config.fol.residual,
            };
            let (net, log) = train_fol(
                &fol_samples(&corpus.train, config.stride, ActionSource::GroundTruth),
                &fol_samples(&corpus.val, config.stride, ActionSource::GroundTruth),
                fol_cfg,
                &config.fol.train,
                config.seed,
                progress("train-fol"),
            )?;
            write(&common.out, &net.to_checkpoint())?;
            write_log(&common.out, &log)?;
        }
        Command::TrainEgo { common, corpus, variant } => {
            let config = load_config(&common)?;
            let corpus = Corpus::load(&corpus.corpus)?;
            let ego_cfg = EgoConfig {
                hidden: config.ego.hidden,
                variant: EgoVariant::parse(&variant)?,
            };
            let (net, log) = train_ego(
                &ego_samples(&corpus.train, config.ego.stride, ActionSource::GroundTruth),
                &ego_samples(&corpus.val, config.ego.stride, ActionSource::GroundTruth),
                ego_cfg,
                &config.ego.train,
                config.seed,
                progress("train-ego"),
            )?;
            write(&common.out, &net.to_checkpoint())?;
            write_log(&common.out, &log)?;
        }
        Command::Predict {
            common,
            corpus,
            action,
            fol,
            baseline,
        } => {
            let config = load_config(&common)?;
            let corpus = Corpus::load(&corpus.corpus)?;
            let action = load_action(&action)?;
            let samples = fol_samples(&corpus.test, config.stride, source(&action));
            let mut records = Vec::new();
            for path in &fol {
                let net = FolNetwork::from_checkpoint(&read(path)?)?;
                records.extend(fol_records(&net, &samples, &net.ablation().name())?);
            }
            let keep = pick(&baseline, &[("const-vel", "Const-Vel"), ("const-vel-scaled", "Const-Vel (w/ scaling)")])?;
            records.extend(baseline_box_records(&samples)?.into_iter().filter(|r| keep.contains(&r.method.as_str())));
            if records.is_empty() {
                return Err(Error::Invalid("nothing to predict: pass --fol or a baseline".into()));
            }
            ensure_parent(&common.out)?;
            write_jsonl(&records, &common.out)?;
        }
        Command::PredictEgo {
            common,
            corpus,
            ego,
            boxes,
            chain,
            action,
            baseline,
        } => {
            let config = load_config(&common)?;
            let corpus = Corpus::load(&corpus.corpus)?;
            let action = load_action(&action)?;
            let samples = ego_samples(&corpus.test, config.stride, source(&action));
            let inputs = match &boxes {
                Some(path) => {
                    let chain = FolAblation::parse(&chain)?.name();
                    let forecasts: Vec<BoxRecord> =
                        read_jsonl::<BoxRecord>(path)?.into_iter().filter(|r| r.method == chain).collect();
                    if forecasts.is_empty() {
                        return Err(Error::Invalid(format!("{} has no `{chain}` forecasts", path.display())));
                    }
                    with_forecast_futures(&samples, &forecasts)
                }
                None => samples.clone(),
            };
            let mut records = Vec::new();
            for path in &ego {
                let net = EgoNetwork::from_checkpoint(&read(path)?)?;
                records.extend(ego_records(&net, &inputs, net.variant().name())?);
            }
            let keep = pick(&baseline, &[("const-vel", "Const-Vel"), ("const-acc", "Const-Acc")])?;
            records.extend(baseline_ego_records(&samples)?.into_iter().filter(|r| keep.contains(&r.method.as_str())));
            if records.is_empty() {
                return Err(Error::Invalid("nothing to predict: pass --ego or a baseline".into()));
            }
            ensure_parent(&common.out)?;
            write_jsonl(&records, &common.out)?;
        }
        Command::Eval {
            common,
            corpus,
            boxes,
            ego,
            action,
        } => {
            let config = load_config(&common)?;
            let corpus = Corpus::load(&corpus.corpus)?;
            let boxes: Vec<BoxRecord> = boxes.as_deref().map(read_jsonl).transpose()?.unwrap_or_default();
            let ego: Vec<EgoRecord> = ego.as_deref().map(read_jsonl).transpose()?.unwrap_or_default();
            let action = load_action(&action)?;
            let map = action
                .as_ref()
                .map(|m| evaluate_action(m, &action_samples(&corpus.test, config.stride)))
                .transpose()?;
            let report = evaluate(&corpus.test, config.stride, &boxes, &ego, map.as_ref())?;
            write(&common.out, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
        }
        Command::Report { common, report } => {
            let text = read(&report)?;
            let report: Report = serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                field: "report".into(),
                msg: e.to_string(),
            })?;
            for path in write_report_dir(&report, &common.out)? {
                println!("{}", path.display());
            }
        }
        Command::Run { common } => {
            let mut config = load_config(&common)?;
            config.out_dir = common.out.clone();
            let summary = run_experiment(&config, |stage, msg| eprintln!("[{stage}] {msg}"))?;
            eprintln!(
                "[run] trained {}, reused {}",
                summary.trained.len(),
                summary.reused.len()
            );
            if config.eval.ego_futures == EgoFutures::Truth {
                eprintln!("[run] ego variants were fed true agent futures");
            }
            println!("{}", common.out.join("report").join("report.md").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (stage, inner) = match e {
                Error::Stage { stage, source } => (stage, *source),
                e => (stage.to_string(), e),
            };
            eprintln!("[{stage}] error: {inner}");
            match inner {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
