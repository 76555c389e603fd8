//! Experiment configuration and the generate → train → predict → eval chain.
//!
//! Every stage writes its artifacts under the output directory and records
//! them in `manifest.json`. A rerun reuses any checkpoint whose stage
//! fingerprint and content hash still match, so deleting one checkpoint
//! retrains only that stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{action_samples, evaluate_action, train_action, ActionConfig, ActionModel};
use crate::baselines::{BoxBaseline, EgoBaseline};
use crate::ego::{ego_samples, train_ego, EgoConfig, EgoNetwork, EgoSample, EgoVariant};
use crate::error::{Error, Result};
use crate::fol::{fol_samples, train_fol, ActionSource, FolAblation, FolConfig, FolNetwork, FolSample};
use crate::metrics::{evaluate, write_report_dir, Report};
use crate::records::{write_jsonl, BoxRecord, EgoRecord};
use crate::scene::{BBox, Clip};
use crate::synth::{generate_corpus, CorpusManifest, GeneratorConfig, Split};
use crate::training::{EpochLog, Hyper, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionStage {
    pub hidden: usize,
    pub layers: usize,
    pub train: Hyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FolStage {
    pub hidden: usize,
    pub residual: bool,
    pub ablations: Vec<FolAblation>,
    /// The ablation whose forecasts feed the ego stage at test time.
    pub chain: FolAblation,
    pub train: Hyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoStage {
    pub hidden: usize,
    pub variants: Vec<EgoVariant>,
    /// Window stride of the ego training samples.
    pub stride: usize,
    pub train: Hyper,
}

/// Where the ego stage gets agent futures at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EgoFutures {
    Forecast,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalStage {
    /// Feed ground-truth instead of predicted actions into the test chain.
    pub ground_truth_actions: bool,
    pub ego_futures: EgoFutures,
    pub baselines: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds weight init and minibatch order of every stage.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Path of a generator TOML file replacing `[corpus]`; empty for none.
    /// Relative paths resolve against the config file's directory.
    pub corpus_file: String,
    pub corpus: GeneratorConfig,
    /// Window stride for action and FOL samples and for evaluation.
    pub stride: usize,
    pub action: ActionStage,
    pub fol: FolStage,
    pub ego: EgoStage,
    pub eval: EvalStage,
}

fn hyper(learning_rate: f64, batch_size: usize, epochs: usize) -> Hyper {
    Hyper {
        learning_rate,
        batch_size,
        epochs,
        grad_clip: 0.0,
        keep_best: false,
        warmup_steps: 0,
        final_lr_fraction: 1.0,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/titan"),
            corpus_file: String::new(),
            corpus: GeneratorConfig::default(),
            stride: 5,
            action: ActionStage {
                hidden: ActionConfig::default().hidden,
                layers: ActionConfig::default().layers,
                train: hyper(1e-4, 8, 100),
            },
            fol: FolStage {
                hidden: 512,
                residual: false,
                ablations: crate::fol::FOL_ABLATIONS
                    .iter()
                    .map(|n| FolAblation::parse(n).expect("listed ablation"))
                    .collect(),
                chain: FolAblation::FULL,
                train: hyper(1e-4, 16, 80),
            },
            ego: EgoStage {
                hidden: 128,
                variants: crate::ego::EGO_VARIANTS
                    .iter()
                    .map(|n| EgoVariant::parse(n).expect("listed variant"))
                    .collect(),
                stride: 5,
                train: hyper(1e-4, 64, 100),
            },
            eval: EvalStage {
                ground_truth_actions: false,
                ego_futures: EgoFutures::Forecast,
                baselines: true,
            },
        }
    }
}

fn suggest<'a>(key: &str, known: impl Iterator<Item = &'a String>) -> Option<&'a String> {
    known
        .map(|k| (strsim::jaro_winkler(key, k), k))
        .filter(|(s, _)| *s > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k)
}

fn type_name(v: &toml::Value) -> &'static str {
    v.type_str()
}

/// Checks `user` against the shape of `defaults` and overlays it.
fn merge(path: &str, defaults: &mut toml::Table, user: &toml::Table, errs: &mut Vec<String>) {
    for (key, value) in user {
        let at = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        let Some(slot) = defaults.get_mut(key) else {
            let hint = suggest(key, defaults.keys()).map_or_else(String::new, |k| format!(" (did you mean `{k}`?)"));
            errs.push(format!("{at}: unknown key{hint}"));
            continue;
        };
        match (slot, value) {
            (toml::Value::Table(d), toml::Value::Table(u)) => merge(&at, d, u, errs),
            (toml::Value::Table(_), v) => errs.push(format!("{at}: expected a table, got {}", type_name(v))),
            (toml::Value::Integer(_), toml::Value::Integer(i)) if *i < 0 => {
                errs.push(format!("{at}: must be non-negative, got {i}"))
            }
            (toml::Value::Float(_), toml::Value::Integer(i)) => {
                *defaults.get_mut(key).expect("present") = toml::Value::Float(*i as f64)
            }
            (slot, v) => {
                if std::mem::discriminant(slot) != std::mem::discriminant(v) {
                    errs.push(format!("{at}: expected {}, got {}", type_name(slot), type_name(v)));
                } else {
                    *slot = v.clone();
                }
            }
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML config, filling defaults. `base` resolves relative
    /// `corpus_file` paths. All problems are reported together.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        let mut merged = match toml::Value::try_from(ExperimentConfig::default()).expect("default config serializes") {
            toml::Value::Table(t) => t,
            _ => unreachable!("config serializes to a table"),
        };
        let mut errs = Vec::new();
        merge("", &mut merged, &user, &mut errs);
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let mut config: ExperimentConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        if !config.corpus_file.is_empty() {
            let path = base.join(&config.corpus_file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(vec![format!("corpus_file: cannot read {}: {e}", path.display())]))?;
            config.corpus = GeneratorConfig::from_toml(&text).map_err(|e| match e {
                Error::Config(v) => Error::Config(v.into_iter().map(|m| format!("corpus_file: {m}")).collect()),
                other => other,
            })?;
            config.corpus_file = path.display().to_string();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Err(Error::Config(v)) = self.corpus.validate() {
            errs.extend(v.into_iter().map(|m| format!("corpus.{m}")));
        }
        errs.extend(self.action.train.validate("action.train"));
        errs.extend(self.fol.train.validate("fol.train"));
        errs.extend(self.ego.train.validate("ego.train"));
        if self.stride == 0 {
            errs.push("stride: must be positive".into());
        }
        if self.ego.stride == 0 {
            errs.push("ego.stride: must be positive".into());
        }
        for (name, width) in [
            ("action.hidden", self.action.hidden),
            ("action.layers", self.action.layers),
            ("fol.hidden", self.fol.hidden),
            ("ego.hidden", self.ego.hidden),
        ] {
            if width == 0 {
                errs.push(format!("{name}: must be positive"));
            }
        }
        if !self.fol.ablations.contains(&self.fol.chain) && !self.ego.variants.is_empty() {
            errs.push(format!("fol.chain: `{}` is not among fol.ablations", self.fol.chain));
        }
        if self.corpus.num_clips < 7 {
            errs.push("corpus.num_clips: need at least 7 clips for a train/val/test split".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// SHA-256 of the normalized config.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("value serializes")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Git-style object hash: SHA-256 over `blob <len>\0<content>`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

fn fingerprint(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex(&h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    /// Hash of everything the checkpoint depends on.
    pub fingerprint: String,
    /// Checkpoint path relative to the output directory.
    pub checkpoint: String,
    pub hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub corpus_hash: String,
    pub checkpoints: BTreeMap<String, StageEntry>,
    /// Other outputs: relative path → content hash.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Option<Manifest> {
        let text = std::fs::read_to_string(dir.join("manifest.json")).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// What a run did.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub trained: Vec<String>,
    pub reused: Vec<String>,
    pub report: Report,
    pub manifest: Manifest,
}

pub struct Corpus {
    pub manifest: CorpusManifest,
    pub train: Vec<Clip>,
    pub val: Vec<Clip>,
    pub test: Vec<Clip>,
}

impl Corpus {
    pub fn load(root: &Path) -> Result<Corpus> {
        let manifest = CorpusManifest::load(root)?;
        Ok(Corpus {
            train: manifest.load_split(root, Split::Train)?,
            val: manifest.load_split(root, Split::Val)?,
            test: manifest.load_split(root, Split::Test)?,
            manifest,
        })
    }
}

/// Hash over the corpus manifest and every clip file.
fn corpus_hash(root: &Path, manifest: &CorpusManifest) -> Result<String> {
    let mut h = Sha256::new();
    let path = root.join("manifest.json");
    h.update(std::fs::read(&path).map_err(|e| Error::io(&path, e))?);
    for split in Split::ALL {
        for id in manifest.ids(split) {
            let path = CorpusManifest::clip_path(root, split, id);
            h.update(std::fs::read(&path).map_err(|e| Error::io(&path, e))?);
        }
    }
    Ok(hex(&h.finalize()))
}

fn file_name(stage: &str) -> String {
    format!("{}.json", stage.replace(':', "_").replace('+', "-"))
}

/// Mean boxes and spreads of a FOL network's forecasts.
pub fn fol_records(net: &FolNetwork, samples: &[FolSample], method: &str) -> Result<Vec<BoxRecord>> {
    let forecasts = net.forecast_all(samples)?;
    Ok(samples
        .iter()
        .zip(forecasts)
        .map(|(s, f)| BoxRecord {
            method: method.to_string(),
            clip_id: s.clip_id.clone(),
            t_start: s.t_start,
            track_id: s.track_id,
            boxes: f.steps.iter().map(|g| g.mean_box().to_array()).collect(),
            sigma: f
                .steps
                .iter()
                .map(|g| [g.center.sigma[0], g.center.sigma[1], g.size.sigma[0], g.size.sigma[1]])
                .collect(),
            rho: f.steps.iter().map(|g| [g.center.rho, g.size.rho]).collect(),
        })
        .collect())
}

pub fn baseline_box_records(samples: &[FolSample]) -> Result<Vec<BoxRecord>> {
    let mut out = Vec::new();
    for b in BoxBaseline::ALL {
        for s in samples {
            out.push(BoxRecord {
                method: b.name().to_string(),
                clip_id: s.clip_id.clone(),
                t_start: s.t_start,
                track_id: s.track_id,
                boxes: b.predict(&s.obs_boxes)?.iter().map(|x| x.to_array()).collect(),
                sigma: Vec::new(),
                rho: Vec::new(),
            });
        }
    }
    Ok(out)
}

pub fn ego_records(net: &EgoNetwork, samples: &[EgoSample], method: &str) -> Result<Vec<EgoRecord>> {
    let preds = net.predict_all(samples)?;
    Ok(samples
        .iter()
        .zip(preds)
        .map(|(s, p)| EgoRecord {
            method: method.to_string(),
            clip_id: s.clip_id.clone(),
            t_start: s.t_start,
            steps: p.steps,
            importance: if p.importance.steps.iter().all(Vec::is_empty) {
                Vec::new()
            } else {
                p.importance.steps
            },
        })
        .collect())
}

pub fn baseline_ego_records(samples: &[EgoSample]) -> Result<Vec<EgoRecord>> {
    let mut out = Vec::new();
    for b in EgoBaseline::ALL {
        for s in samples {
            out.push(EgoRecord {
                method: b.name().to_string(),
                clip_id: s.clip_id.clone(),
                t_start: s.t_start,
                steps: b.predict(&s.ego_obs)?.iter().map(|e| [e.alpha, e.omega]).collect(),
                importance: Vec::new(),
            });
        }
    }
    Ok(out)
}

/// Replaces each sample's agent futures with the forecasts in `records`.
pub fn with_forecast_futures(samples: &[EgoSample], records: &[BoxRecord]) -> Vec<EgoSample> {
    let mut by_window: BTreeMap<(String, usize), BTreeMap<u32, Vec<BBox>>> = BTreeMap::new();
    for r in records {
        by_window
            .entry((r.clip_id.clone(), r.t_start))
            .or_default()
            .insert(r.track_id, r.mean_boxes());
    }
    let empty = BTreeMap::new();
    samples
        .iter()
        .map(|s| s.with_agent_futures(by_window.get(&s.key()).unwrap_or(&empty)))
        .collect()
}

fn epoch_line(e: &EpochLog) -> String {
    match e.val_loss {
        Some(v) => format!("epoch {} train {:.4} val {v:.4}", e.epoch, e.train_loss),
        None => format!("epoch {} train {:.4}", e.epoch, e.train_loss),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

struct Run<'a, L: FnMut(&str, &str)> {
    out: PathBuf,
    seed: u64,
    previous: Option<Manifest>,
    manifest: Manifest,
    trained: Vec<String>,
    reused: Vec<String>,
    log: &'a mut L,
}

impl<L: FnMut(&str, &str)> Run<'_, L> {
    /// Loads the stage checkpoint if it is still valid, otherwise trains and
    /// saves one.
    fn stage<T>(
        &mut self,
        stage: &str,
        fingerprint: String,
        load: impl FnOnce(&str) -> Result<T>,
        train: impl FnOnce(&mut L) -> Result<(T, String, TrainLog)>,
    ) -> Result<T> {
        let rel = format!("checkpoints/{}", file_name(stage));
        let path = self.out.join(&rel);
        let prior = self.previous.as_ref().and_then(|m| m.checkpoints.get(stage)).cloned();
        if let (Some(entry), Ok(text)) = (prior, std::fs::read_to_string(&path)) {
            if entry.fingerprint == fingerprint && entry.hash == content_hash(text.as_bytes()) {
                if let Ok(model) = load(&text) {
                    (self.log)(stage, "reusing checkpoint");
                    self.reused.push(stage.to_string());
                    self.manifest.checkpoints.insert(stage.to_string(), entry);
                    return Ok(model);
                }
            }
        }
        (self.log)(stage, "training");
        let (model, text, train_log) = train(self.log).map_err(|e| e.in_stage(stage))?;
        std::fs::write(&path, &text).map_err(|e| Error::io(&path, e).in_stage(stage))?;
        let log_path = self.out.join("logs").join(file_name(stage));
        write_json(&train_log, &log_path)?;
        self.manifest.checkpoints.insert(
            stage.to_string(),
            StageEntry {
                fingerprint,
                checkpoint: rel,
                hash: content_hash(text.as_bytes()),
            },
        );
        self.trained.push(stage.to_string());
        self.manifest.save(&self.out)?;
        Ok(model)
    }

    fn artifact(&mut self, rel: &str) -> Result<()> {
        let path = self.out.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.manifest.artifacts.insert(rel.to_string(), content_hash(&bytes));
        Ok(())
    }
}

/// Runs every stage, logging `(stage, message)` pairs as it goes.
pub fn run_experiment(config: &ExperimentConfig, mut log: impl FnMut(&str, &str)) -> Result<RunSummary> {
    config.validate()?;
    let out = config.out_dir.clone();
    for sub in ["checkpoints", "logs", "predictions"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let corpus_dir = out.join("corpus");
    let corpus = match CorpusManifest::load(&corpus_dir) {
        Ok(m) if m.config == config.corpus => {
            log("generate", "reusing corpus");
            Corpus::load(&corpus_dir).map_err(|e| e.in_stage("generate"))?
        }
        _ => {
            log("generate", &format!("writing {} clips", config.corpus.num_clips));
            if corpus_dir.exists() {
                std::fs::remove_dir_all(&corpus_dir).map_err(|e| Error::io(&corpus_dir, e))?;
            }
            generate_corpus(&config.corpus, &corpus_dir).map_err(|e| e.in_stage("generate"))?;
            Corpus::load(&corpus_dir).map_err(|e| e.in_stage("generate"))?
        }
    };
    let corpus_hash = corpus_hash(&corpus_dir, &corpus.manifest)?;
    let mut run = Run {
        previous: Manifest::load(&out),
        manifest: Manifest {
            seed: config.seed,
            config_hash: config.hash(),
            corpus_hash: corpus_hash.clone(),
            ..Default::default()
        },
        out: out.clone(),
        seed: config.seed,
        trained: Vec::new(),
        reused: Vec::new(),
        log: &mut log,
    };
    let seed = run.seed;
    let stride = config.stride;

    let action_cfg = ActionConfig {
        hidden: config.action.hidden,
        layers: config.action.layers,
        ..Default::default()
    };
    let action_fp = fingerprint(&["action", &corpus_hash, &seed.to_string(), &json(&config.action), &stride.to_string()]);
    let action = run.stage(
        "action",
        action_fp,
        ActionModel::from_checkpoint,
        |log| {
            let train = action_samples(&corpus.train, stride);
            let val = action_samples(&corpus.val, stride);
            let (model, tl) = train_action(&train, &val, action_cfg.clone(), &config.action.train, seed, |e| {
                log("action", &epoch_line(e))
            })?;
            let text = model.to_checkpoint();
            Ok((model, text, tl))
        },
    )?;

    let fol_train = fol_samples(&corpus.train, stride, ActionSource::GroundTruth);
    let fol_val = fol_samples(&corpus.val, stride, ActionSource::GroundTruth);
    let mut fol_nets = Vec::new();
    for ablation in &config.fol.ablations {
        let stage = format!("fol:{ablation}");
        let fol_cfg = FolConfig {
            hidden: config.fol.hidden,
            ablation: *ablation,
            residual: config.fol.residual,
        };
        let fp = fingerprint(&[&stage, &corpus_hash, &seed.to_string(), &json(&fol_cfg), &json(&config.fol.train), &stride.to_string()]);
        let net = run.stage(&stage, fp, FolNetwork::from_checkpoint, |log| {
            let (net, tl) = train_fol(&fol_train, &fol_val, fol_cfg.clone(), &config.fol.train, seed, |e| {
                log(&stage, &epoch_line(e))
            })?;
            let text = net.to_checkpoint();
            Ok((net, text, tl))
        })?;
        fol_nets.push(net);
    }

    let ego_train = ego_samples(&corpus.train, config.ego.stride, ActionSource::GroundTruth);
    let ego_val = ego_samples(&corpus.val, config.ego.stride, ActionSource::GroundTruth);
    let mut ego_nets = Vec::new();
    for variant in &config.ego.variants {
        let stage = format!("ego:{variant}");
        let ego_cfg = EgoConfig {
            hidden: config.ego.hidden,
            variant: *variant,
        };
        let fp = fingerprint(&[
            &stage,
            &corpus_hash,
            &seed.to_string(),
            &json(&ego_cfg),
            &json(&config.ego.train),
            &config.ego.stride.to_string(),
        ]);
        let net = run.stage(&stage, fp, EgoNetwork::from_checkpoint, |log| {
            let (net, tl) = train_ego(&ego_train, &ego_val, ego_cfg.clone(), &config.ego.train, seed, |e| {
                log(&stage, &epoch_line(e))
            })?;
            let text = net.to_checkpoint();
            Ok((net, text, tl))
        })?;
        ego_nets.push(net);
    }

    (run.log)("predict", "chaining action → FOL → ego on the test split");
    let source = if config.eval.ground_truth_actions {
        ActionSource::GroundTruth
    } else {
        ActionSource::Predicted(&action)
    };
    let predict = || -> Result<(Vec<BoxRecord>, Vec<EgoRecord>)> {
        let test = fol_samples(&corpus.test, stride, source);
        let mut boxes = Vec::new();
        let mut chain = Vec::new();
        for net in &fol_nets {
            let name = net.config.ablation.name();
            let records = fol_records(net, &test, &name)?;
            if net.config.ablation == config.fol.chain {
                chain = records.clone();
            }
            boxes.extend(records);
        }
        if config.eval.baselines {
            boxes.extend(baseline_box_records(&test)?);
        }
        let ego_test = ego_samples(&corpus.test, stride, source);
        let ego_in = match config.eval.ego_futures {
            EgoFutures::Truth => ego_test.clone(),
            EgoFutures::Forecast => with_forecast_futures(&ego_test, &chain),
        };
        let mut ego = Vec::new();
        for net in &ego_nets {
            ego.extend(ego_records(net, &ego_in, net.variant().name())?);
        }
        if config.eval.baselines && !ego_nets.is_empty() {
            ego.extend(baseline_ego_records(&ego_test)?);
        }
        Ok((boxes, ego))
    };
    let (boxes, ego) = predict().map_err(|e| e.in_stage("predict"))?;
    write_jsonl(&boxes, out.join("predictions/fol.jsonl"))?;
    write_jsonl(&ego, out.join("predictions/ego.jsonl"))?;
    run.artifact("predictions/fol.jsonl")?;
    run.artifact("predictions/ego.jsonl")?;

    (run.log)("eval", "scoring predictions");
    let action_map = evaluate_action(&action, &action_samples(&corpus.test, stride)).map_err(|e| e.in_stage("eval"))?;
    let report = evaluate(&corpus.test, stride, &boxes, &ego, Some(&action_map)).map_err(|e| e.in_stage("eval"))?;
    write_json(&report, &out.join("report.json"))?;
    run.artifact("report.json")?;
    (run.log)("report", "writing tables and plots");
    for path in write_report_dir(&report, out.join("report")).map_err(|e| e.in_stage("report"))? {
        let rel = path.strip_prefix(&out).expect("inside out dir").display().to_string();
        run.artifact(&rel)?;
    }
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, config.to_toml()).map_err(|e| Error::io(&config_path, e))?;
    run.manifest.save(&out)?;
    Ok(RunSummary {
        trained: run.trained,
        reused: run.reused,
        report,
        manifest: run.manifest,
    })
}
