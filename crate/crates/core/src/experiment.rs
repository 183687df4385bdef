//! Experiment specs and the resumable pretrain -> finetune -> evaluate
//! pipeline behind `sarcstance run`.
//!
//! Run directory layout:
//!
//! ```text
//! <out>/<name>/experiment.json             resolved spec, checked on resume
//! <out>/<name>/_pretrain/<seed>/bundle/    sarcasm bundle
//! <out>/<name>/<target>/<seed>/            history.csv, bundle/, predictions.tsv,
//!                                          metrics.json, COMPLETE
//! <out>/<name>/metrics.csv, report.md
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::DType;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::analysis::{write_predictions, PredictionRecord};
use crate::corpus::{load_corpus, CorpusBundle, CorpusName, LabeledExample, SarcasmLoadOptions, Split, Task};
use crate::error::{Error, Result};
use crate::eval::{render_report, ConfusionMatrix, MetricsReport, ReportFormat, RunMetrics};
use crate::model::bundle::{BundleMetadata, ParameterBundle};
use crate::model::tokenize::{TextTokenizer, WordVocab};
use crate::model::{ClassifierConfig, EncoderKind, EncoderSpec, Model, PretrainedAssets};
use crate::preprocess::{PreprocessSettings, Preprocessor};
use crate::train::{
    encode_examples, finetune_target, predict_encoded, pretrain_intermediate, ModelFactory, TrainConfig,
};

pub const DATA_ROOT_ENV: &str = "SARCSTANCE_DATA_ROOT";
const COMPLETE: &str = "COMPLETE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Intermediate {
    #[serde(rename = "none")]
    None,
    SaV2C,
    #[serde(rename = "SARC")]
    Sarc,
    #[serde(rename = "ST")]
    St,
}

impl Intermediate {
    pub fn corpus(self) -> Option<CorpusName> {
        match self {
            Intermediate::None => None,
            Intermediate::SaV2C => Some(CorpusName::SaV2C),
            Intermediate::Sarc => Some(CorpusName::Sarc),
            Intermediate::St => Some(CorpusName::St),
        }
    }
}

impl std::str::FromStr for Intermediate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(Intermediate::None);
        }
        match s.parse::<CorpusName>()? {
            CorpusName::SaV2C => Ok(Intermediate::SaV2C),
            CorpusName::Sarc => Ok(Intermediate::Sarc),
            CorpusName::St => Ok(Intermediate::St),
            other => Err(Error::InvalidArgument(format!("{other} is not a sarcasm corpus"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub use_conv: bool,
    pub use_bilstm: bool,
    pub use_pretraining: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            use_conv: true,
            use_bilstm: true,
            use_pretraining: true,
        }
    }
}

/// Partial training settings; unset fields keep the phase defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub batch_size: Option<usize>,
    pub lr_initial: Option<f64>,
    pub lr_final: Option<f64>,
    pub max_epochs: Option<usize>,
    pub min_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub class_weighting: Option<bool>,
    pub prepend_target: Option<bool>,
}

impl TrainOverrides {
    pub fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(batch_size, lr_initial, lr_final, max_epochs, min_epochs, patience, class_weighting, prepend_target);
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FallbackSettings {
    pub width: usize,
    pub embed_dim: usize,
    pub recurrent_layers: usize,
    pub max_vocab: usize,
    pub min_count: usize,
}

impl Default for FallbackSettings {
    fn default() -> Self {
        FallbackSettings {
            width: 64,
            embed_dim: 64,
            recurrent_layers: 2,
            max_vocab: 20_000,
            min_count: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub data_root: Option<PathBuf>,
    pub target_corpus: CorpusName,
    /// Canonical corpus location; defaults to `<data_root>/<corpus>`.
    pub target_path: Option<PathBuf>,
    /// Empty means every target of the corpus.
    pub targets: Vec<String>,
    pub intermediate: Intermediate,
    pub intermediate_path: Option<PathBuf>,
    pub runs: usize,
    pub base_seed: u64,
    pub encoder: EncoderKind,
    /// Directory with `config.json`, `model.safetensors` and `tokenizer.json`.
    pub pretrained_dir: Option<PathBuf>,
    pub max_seq_len: usize,
    /// Pre-train once per run seed instead of once per base seed.
    pub repretrain: bool,
    /// Row cap for the intermediate corpus (SARC subsampling).
    pub max_rows: Option<usize>,
    /// Record failed runs and keep going instead of aborting.
    pub allow_partial: bool,
    pub save_bundles: bool,
    /// Row label in reports; derived from the ablation flags when unset.
    pub condition: Option<String>,
    pub ablation: Ablation,
    pub model: ClassifierConfig,
    pub fallback: FallbackSettings,
    pub pretrain: TrainOverrides,
    pub train: TrainOverrides,
    pub preprocess: PreprocessSettings,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            data_root: None,
            target_corpus: CorpusName::SemEval,
            target_path: None,
            targets: Vec::new(),
            intermediate: Intermediate::None,
            intermediate_path: None,
            runs: 5,
            base_seed: 0,
            encoder: EncoderKind::PretrainedBert,
            pretrained_dir: None,
            max_seq_len: 128,
            repretrain: false,
            max_rows: None,
            allow_partial: false,
            save_bundles: true,
            condition: None,
            ablation: Ablation::default(),
            model: ClassifierConfig::default(),
            fallback: FallbackSettings::default(),
            pretrain: TrainOverrides::default(),
            train: TrainOverrides::default(),
            preprocess: PreprocessSettings::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::Experiment(format!("invalid spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Experiment(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::Experiment(format!("unusable experiment name {:?}", self.name)));
        }
        if self.target_corpus.task() != Task::Stance {
            return Err(Error::Experiment(format!("{} is not a stance corpus", self.target_corpus)));
        }
        if self.runs == 0 {
            return Err(Error::Experiment("runs must be at least 1".into()));
        }
        if self.ablation.use_pretraining && self.intermediate == Intermediate::None && self.condition.is_none() {
            info!("no intermediate task given; pre-training is skipped");
        }
        Ok(())
    }

    pub fn uses_pretraining(&self) -> bool {
        self.ablation.use_pretraining && self.intermediate != Intermediate::None
    }

    /// `[INT+]ENC[+Conv][+BiLSTM]`, e.g. `ST+BERT+Conv+BiLSTM`.
    pub fn condition_label(&self) -> String {
        if let Some(c) = &self.condition {
            return c.clone();
        }
        let mut parts = Vec::new();
        if self.uses_pretraining() {
            parts.push(self.intermediate.corpus().expect("pretraining implies a corpus").to_string());
        }
        parts.push(self.encoder.label().to_string());
        if self.ablation.use_conv {
            parts.push("Conv".into());
        }
        if self.ablation.use_bilstm {
            parts.push("BiLSTM".into());
        }
        parts.join("+")
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.base_seed + i).collect()
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            use_conv: self.ablation.use_conv,
            use_bilstm: self.ablation.use_bilstm,
            ..self.model.clone()
        }
    }

    pub fn pretrain_config(&self, seed: u64) -> TrainConfig {
        let cfg = self.pretrain.apply(TrainConfig::intermediate());
        TrainConfig { seed, ..cfg }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let cfg = self.train.apply(TrainConfig::default());
        TrainConfig { seed, ..cfg }
    }

    fn corpus_path(&self, explicit: &Option<PathBuf>, name: CorpusName) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        let root = self.data_root.as_ref().ok_or_else(|| {
            Error::Experiment(format!(
                "no location for {name}: set data_root, {DATA_ROOT_ENV} or --data-root"
            ))
        })?;
        Ok(root.join(name.as_str()))
    }

    /// The parts of the spec that determine results, for resume checks.
    fn identity(&self) -> Result<serde_json::Value> {
        let mut copy = self.clone();
        copy.data_root = None;
        copy.target_path = None;
        copy.intermediate_path = None;
        copy.pretrained_dir = None;
        copy.allow_partial = false;
        Ok(serde_json::to_value(&copy)?)
    }
}

/// Command-line adjustments applied on top of a spec.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_root: PathBuf,
    pub fresh: bool,
    pub data_root: Option<PathBuf>,
    pub encoder: Option<EncoderKind>,
    pub pretrained_dir: Option<PathBuf>,
    pub max_rows: Option<usize>,
    /// Restrict to these run seeds.
    pub seeds: Option<Vec<u64>>,
    pub targets: Option<Vec<String>>,
}

impl RunOptions {
    pub fn resolve(&self, spec: &ExperimentSpec) -> ExperimentSpec {
        let mut s = spec.clone();
        if let Some(root) = &self.data_root {
            s.data_root = Some(root.clone());
        } else if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
            s.data_root = Some(PathBuf::from(root));
        }
        if let Some(e) = self.encoder {
            s.encoder = e;
        }
        if let Some(d) = &self.pretrained_dir {
            s.pretrained_dir = Some(d.clone());
        }
        if self.max_rows.is_some() {
            s.max_rows = self.max_rows;
        }
        s
    }
}

/// Loaded corpora and model factory for one experiment.
pub struct Prepared {
    pub spec: ExperimentSpec,
    pub condition: String,
    pub dir: PathBuf,
    pub target: CorpusBundle,
    pub targets: Vec<String>,
    pub intermediate: Option<CorpusBundle>,
    pub factory: ModelFactory,
}

pub fn prepare(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Prepared> {
    let spec = opts.resolve(spec);
    spec.validate()?;
    let preprocessor = Preprocessor::from_settings(&spec.preprocess)?;
    if spec.encoder.is_pretrained() {
        preprocessor.config().validate_for_neural()?;
    }
    let load = |name: CorpusName, explicit: &Option<PathBuf>| -> Result<CorpusBundle> {
        let path = spec.corpus_path(explicit, name)?;
        let options = SarcasmLoadOptions {
            max_rows: spec.max_rows,
            seed: spec.base_seed,
        };
        let raw = load_corpus(&path, name, &options)?;
        Ok(preprocessor.preprocess_corpus(&raw))
    };
    let target = load(spec.target_corpus, &spec.target_path)?;
    let targets = match opts.targets.as_ref().filter(|t| !t.is_empty()).unwrap_or(&spec.targets) {
        t if t.is_empty() => target.targets().to_vec(),
        t => t.clone(),
    };
    for t in &targets {
        if !target.targets().contains(t) {
            return Err(Error::Experiment(format!("{} has no target {t}", spec.target_corpus)));
        }
    }
    let intermediate = match spec.intermediate.corpus() {
        Some(name) if spec.ablation.use_pretraining => Some(load(name, &spec.intermediate_path)?),
        _ => None,
    };
    let factory = build_factory(&spec, &target, &targets, intermediate.as_ref())?;
    Ok(Prepared {
        condition: spec.condition_label(),
        dir: opts.out_root.join(&spec.name),
        spec,
        target,
        targets,
        intermediate,
        factory,
    })
}

fn build_factory(
    spec: &ExperimentSpec,
    target: &CorpusBundle,
    targets: &[String],
    intermediate: Option<&CorpusBundle>,
) -> Result<ModelFactory> {
    let classifier = spec.classifier();
    if spec.encoder.is_pretrained() {
        let dir = spec.pretrained_dir.as_ref().ok_or_else(|| {
            Error::Experiment(format!("{:?} needs pretrained_dir", spec.encoder))
        })?;
        let assets = PretrainedAssets::open(dir, spec.encoder)?;
        let mut encoder = EncoderSpec::pretrained(spec.encoder, assets.dims.clone());
        encoder.max_seq_len = spec.max_seq_len;
        encoder.validate()?;
        return Ok(ModelFactory {
            encoder,
            classifier,
            tokenizer: TextTokenizer::pretrained(&assets.tokenizer)?,
            checkpoint: Some(assets.load_tensors()?),
            dtype: DType::F32,
        });
    }
    // vocabulary from text the models are allowed to train on
    let mut texts: Vec<&LabeledExample> = Vec::new();
    if let Some(c) = intermediate {
        texts.extend(c.trainable());
    }
    for t in targets {
        texts.extend(target.target_examples(t, Split::Train));
    }
    let fb = &spec.fallback;
    let vocab = WordVocab::build(texts.iter().map(|e| e.text.as_str()), fb.max_vocab, fb.min_count);
    let encoder = EncoderSpec {
        kind: EncoderKind::FallbackSmall,
        hidden_width: fb.width,
        max_seq_len: spec.max_seq_len,
        vocab_size: vocab.len(),
        embed_dim: fb.embed_dim,
        recurrent_layers: fb.recurrent_layers,
        transformer: None,
    };
    encoder.validate()?;
    Ok(ModelFactory {
        encoder,
        classifier,
        tokenizer: TextTokenizer::Words(vocab),
        checkpoint: None,
        dtype: DType::F32,
    })
}

fn is_complete(dir: &Path) -> bool {
    dir.join(COMPLETE).exists()
}

fn mark_complete(dir: &Path) -> Result<()> {
    let p = dir.join(COMPLETE);
    fs::write(&p, b"").map_err(|e| Error::io(&p, e))
}

/// Clears a directory left behind by an interrupted run.
fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        warn!("discarding incomplete run directory {}", dir.display());
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Creates the experiment directory, or checks that an existing one holds
/// the same experiment.
pub fn open_experiment_dir(prepared: &Prepared, fresh: bool) -> Result<()> {
    let dir = &prepared.dir;
    if fresh && dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("experiment.json");
    let identity = prepared.spec.identity()?;
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let stored: serde_json::Value = serde_json::from_str(&text)?;
        if stored != identity {
            return Err(Error::Experiment(format!(
                "{} holds results of a different spec; rerun with --fresh to discard them",
                dir.display()
            )));
        }
    } else {
        let text = serde_json::to_string_pretty(&identity)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// The sarcasm bundle used by run `seed`, trained on first use.
pub fn pretrained_bundle(prepared: &Prepared, seed: u64) -> Result<Option<ParameterBundle>> {
    let Some(corpus) = &prepared.intermediate else {
        return Ok(None);
    };
    let bundle_seed = if prepared.spec.repretrain { seed } else { prepared.spec.base_seed };
    let dir = prepared.dir.join("_pretrain").join(bundle_seed.to_string());
    if is_complete(&dir) {
        info!("reusing pretrained bundle {}", dir.display());
        return ParameterBundle::load(&dir.join("bundle")).map(Some);
    }
    reset_dir(&dir)?;
    let cfg = prepared.spec.pretrain_config(bundle_seed);
    let outcome = pretrain_intermediate(corpus, &prepared.factory, &cfg)?;
    for (i, h) in outcome.histories.iter().enumerate() {
        h.write_csv(&dir.join(format!("history_fold{i}.csv")))?;
    }
    outcome.bundle.save(&dir.join("bundle"))?;
    mark_complete(&dir)?;
    Ok(Some(outcome.bundle))
}

/// Test-set predictions of `model` for one target.
pub fn evaluate_target(
    model: &Model,
    factory: &ModelFactory,
    test: &[&LabeledExample],
    prepend_target: bool,
    condition: &str,
) -> Result<(Vec<PredictionRecord>, ConfusionMatrix)> {
    let encoded = encode_examples(&factory.tokenizer, test, model.encoder().max_seq_len, prepend_target)?;
    let probs = predict_encoded(model, &encoded, 64, factory.tokenizer.pad_id())?;
    let records = test
        .iter()
        .zip(probs)
        .map(|(e, p)| PredictionRecord::new(&e.id, e.label, normalize(p), condition))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<usize> = records.iter().map(|r| r.gold.class_index()).collect();
    let pred: Vec<usize> = records.iter().map(|r| r.predicted.class_index()).collect();
    let n = test.first().map_or(3, |e| e.label.task().num_classes());
    Ok((records, ConfusionMatrix::from_indices(n, &gold, &pred)?))
}

/// Renormalizes in f64 so rows written to disk sum to 1 tightly.
fn normalize(row: Vec<f64>) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    row.into_iter().map(|p| p / s).collect()
}

/// Fine-tunes and evaluates one (target, seed) run, or reads the stored
/// result of a completed one.
pub fn run_one(prepared: &Prepared, target: &str, seed: u64, bundle: Option<&ParameterBundle>) -> Result<RunMetrics> {
    let dir = prepared.dir.join(target).join(seed.to_string());
    let metrics_path = dir.join("metrics.json");
    if is_complete(&dir) {
        let text = fs::read_to_string(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        return Ok(serde_json::from_str(&text)?);
    }
    reset_dir(&dir)?;
    info!("{}: fine-tuning {target} with seed {seed}", prepared.condition);
    let cfg = prepared.spec.train_config(seed);
    let log = prepared.target.read_log();
    let test_reads = log.reads(Split::Test);
    let (model, history) = finetune_target(bundle, &prepared.target, target, &prepared.factory, &cfg)?;
    if log.reads(Split::Test) != test_reads {
        return Err(Error::Experiment(format!("test rows of {target} were read during training")));
    }
    history.write_csv(&dir.join("history.csv"))?;
    if prepared.spec.save_bundles {
        let meta = BundleMetadata {
            source_corpus: prepared.target.name().to_string(),
            seed,
            epoch: history.best_epoch,
            validation_accuracy: history.best_accuracy(),
            fold_accuracies: vec![history.best_accuracy()],
            selected_fold: None,
        };
        ParameterBundle::from_model(&model, Task::Stance, meta, prepared.factory.tokenizer.vocab().cloned())?
            .save(&dir.join("bundle"))?;
    }
    let test = prepared.target.target_examples(target, Split::Test);
    let (records, cm) = evaluate_target(&model, &prepared.factory, &test, cfg.prepend_target, &prepared.condition)?;
    write_predictions(&dir.join("predictions.tsv"), &records)?;
    let metrics = RunMetrics::from_confusion(
        &prepared.condition,
        prepared.target.name().as_str(),
        target,
        seed,
        &cm,
    );
    let text = serde_json::to_string_pretty(&metrics)?;
    fs::write(&metrics_path, text).map_err(|e| Error::io(&metrics_path, e))?;
    mark_complete(&dir)?;
    Ok(metrics)
}

/// Runs every (target, seed) of the experiment and writes `metrics.csv`
/// and `report.md`.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<MetricsReport> {
    let prepared = prepare(spec, opts)?;
    open_experiment_dir(&prepared, opts.fresh)?;
    let seeds = opts.seeds.clone().unwrap_or_else(|| prepared.spec.seeds());
    let mut report = MetricsReport::default();
    let mut failures = Vec::new();
    let mut bundles: BTreeMap<u64, Option<ParameterBundle>> = BTreeMap::new();
    for &seed in &seeds {
        let key = if prepared.spec.repretrain { seed } else { prepared.spec.base_seed };
        if let std::collections::btree_map::Entry::Vacant(slot) = bundles.entry(key) {
            slot.insert(pretrained_bundle(&prepared, seed)?);
        }
        let bundle = bundles[&key].as_ref();
        for target in &prepared.targets {
            match run_one(&prepared, target, seed, bundle) {
                Ok(m) => report.runs.push(m),
                Err(e) if prepared.spec.allow_partial => {
                    warn!("{target} seed {seed} failed: {e}");
                    failures.push(format!("{target}\t{seed}\t{e}"));
                }
                Err(e) => return Err(e),
            }
        }
    }
    if !failures.is_empty() {
        let p = prepared.dir.join("failures.tsv");
        fs::write(&p, failures.join("\n") + "\n").map_err(|e| Error::io(&p, e))?;
    }
    report.write_csv(&prepared.dir.join("metrics.csv"))?;
    let md = render_report(&report, prepared.target.name().as_str(), ReportFormat::Markdown);
    let p = prepared.dir.join("report.md");
    fs::write(&p, md).map_err(|e| Error::io(&p, e))?;
    Ok(report)
}
