//! Command-line front end.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use crate::analysis::{
    affinity_ranking, misclassification_report, read_annotations, read_predictions, sarcasm_recovery,
    AffinityWeights, PredictionRecord,
};
use crate::corpus::ingest::{ingest, CorpusStats, IngestOptions, VendorFormat};
use crate::corpus::{load_corpus, save_canonical, CorpusBundle, CorpusName, SarcasmLoadOptions, Task};
use crate::eval::{render_report, MetricsReport, ReportFormat};
use crate::experiment::{
    open_experiment_dir, prepare, pretrained_bundle, run_experiment, run_one, ExperimentSpec, RunOptions,
    DATA_ROOT_ENV,
};
use crate::model::bundle::ParameterBundle;
use crate::model::EncoderKind;
use crate::preprocess::{PreprocessSettings, Preprocessor};

#[derive(Parser, Debug)]
#[command(name = "sarcstance", version, about = "Stance detection with sarcasm-detection pre-training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert a corpus from its distribution format to canonical TSV.
    Ingest(IngestArgs),
    /// Apply the text pipeline to a canonical corpus.
    Preprocess(PreprocessArgs),
    /// Train (or reuse) the sarcasm bundle of an experiment.
    Pretrain(ExperimentArgs),
    /// Fine-tune and evaluate one target.
    Finetune(FinetuneArgs),
    /// Run a full experiment: every target and seed.
    Run(ExperimentArgs),
    /// Misclassifications, sarcasm recovery and corpus affinity.
    Analyze(AnalyzeArgs),
    /// Render per-condition tables from metrics.csv files.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// SemEval, MPCHI, SaV2C, SARC or ST.
    #[arg(long)]
    pub format: VendorFormat,
    /// Distribution files (or a directory containing them).
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Output directory; receives the canonical TSVs and stats.json.
    #[arg(long)]
    pub out: PathBuf,
    /// SaV2C: also keep the quoted post as a separate example.
    #[arg(long)]
    pub include_quotes: bool,
    #[arg(long)]
    pub max_rows: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub corpus: CorpusName,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with pipeline switches and resource paths.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Directory that holds run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    /// bert, roberta or small.
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub pretrained_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_rows: Option<usize>,
    /// Only these run seeds (repeatable).
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Only these targets (repeatable).
    #[arg(long = "target")]
    pub targets: Vec<String>,
    /// Discard existing results of this experiment.
    #[arg(long)]
    pub fresh: bool,
}

impl ExperimentArgs {
    fn load(&self) -> anyhow::Result<(ExperimentSpec, RunOptions)> {
        let spec = ExperimentSpec::load(&self.spec)?;
        let opts = RunOptions {
            out_root: self.out.clone(),
            fresh: self.fresh,
            data_root: self.data_root.clone(),
            encoder: self.encoder,
            pretrained_dir: self.pretrained_dir.clone(),
            max_rows: self.max_rows,
            seeds: (!self.seeds.is_empty()).then(|| self.seeds.clone()),
            targets: (!self.targets.is_empty()).then(|| self.targets.clone()),
        };
        Ok((spec, opts))
    }
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Start from this bundle instead of the experiment's own pre-training.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Stance corpus the predictions refer to.
    #[arg(long)]
    pub corpus: CorpusName,
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    /// Experiment directory without sarcasm pre-training.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Experiment directory with sarcasm pre-training.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Run seed whose predictions are analysed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `id<TAB>is_sarcastic` annotations of test examples.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Sarcasm corpora to rank by affinity to the stance corpus (repeatable).
    #[arg(long = "affinity")]
    pub affinity: Vec<CorpusName>,
    #[arg(long)]
    pub max_rows: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long = "metrics", required = true, num_args = 1..)]
    pub metrics: Vec<PathBuf>,
    /// Dataset to tabulate; all datasets when omitted.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value = "markdown")]
    pub format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Pretrain(a) => cmd_pretrain(&a),
        Command::Finetune(a) => cmd_finetune(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Canonical layout inside `dir`: split files for stance corpora, `all.tsv`
/// for sarcasm corpora.
fn save_corpus_dir(bundle: &CorpusBundle, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    match bundle.task() {
        Task::Stance => save_canonical(bundle, dir)?,
        Task::Sarcasm => save_canonical(bundle, &dir.join("all.tsv"))?,
    }
    write_json(&dir.join("stats.json"), &CorpusStats::of(bundle))
}

fn cmd_ingest(a: &IngestArgs) -> anyhow::Result<()> {
    let opts = IngestOptions {
        include_quotes: a.include_quotes,
        max_rows: a.max_rows,
        seed: a.seed,
    };
    let bundle = ingest(a.format, &a.inputs, &opts)?;
    save_corpus_dir(&bundle, &a.out)?;
    info!("wrote {} examples of {} to {}", bundle.len(), bundle.name(), a.out.display());
    Ok(())
}

fn cmd_preprocess(a: &PreprocessArgs) -> anyhow::Result<()> {
    let settings = match &a.config {
        Some(p) => PreprocessSettings::from_toml_file(p)?,
        None => PreprocessSettings::default(),
    };
    let pre = Preprocessor::from_settings(&settings)?;
    let bundle = load_corpus(&a.input, a.corpus, &SarcasmLoadOptions::default())?;
    let out = pre.preprocess_corpus(&bundle);
    save_corpus_dir(&out, &a.out)?;
    info!("kept {} of {} examples", out.len(), bundle.len());
    Ok(())
}

fn cmd_pretrain(a: &ExperimentArgs) -> anyhow::Result<()> {
    let (spec, opts) = a.load()?;
    let prepared = prepare(&spec, &opts)?;
    if prepared.intermediate.is_none() {
        bail!("the experiment has no intermediate task");
    }
    open_experiment_dir(&prepared, opts.fresh)?;
    let seeds = opts.seeds.unwrap_or_else(|| vec![prepared.spec.base_seed]);
    for seed in seeds {
        let bundle = pretrained_bundle(&prepared, seed)?.expect("intermediate corpus is loaded");
        info!(
            "seed {seed}: validation accuracy {:.4} (fold accuracies {:?})",
            bundle.metadata.validation_accuracy, bundle.metadata.fold_accuracies
        );
    }
    Ok(())
}

fn cmd_finetune(a: &FinetuneArgs) -> anyhow::Result<()> {
    let (spec, opts) = a.experiment.load()?;
    let prepared = prepare(&spec, &opts)?;
    open_experiment_dir(&prepared, opts.fresh)?;
    let external = a.bundle.as_deref().map(ParameterBundle::load).transpose()?;
    let seeds = opts.seeds.clone().unwrap_or_else(|| prepared.spec.seeds());
    for seed in seeds {
        let own = match &external {
            Some(_) => None,
            None => pretrained_bundle(&prepared, seed)?,
        };
        let bundle = external.as_ref().or(own.as_ref());
        for target in &prepared.targets {
            let m = run_one(&prepared, target, seed, bundle)?;
            println!(
                "{}\t{target}\tseed {seed}\tmacro-F1 {:.4}\taccuracy {:.4}",
                m.condition, m.macro_f1, m.accuracy
            );
        }
    }
    Ok(())
}

fn cmd_run(a: &ExperimentArgs) -> anyhow::Result<()> {
    let (spec, opts) = a.load()?;
    let report = run_experiment(&spec, &opts)?;
    for dataset in report.datasets() {
        print!("{}", render_report(&report, &dataset, ReportFormat::Markdown));
    }
    Ok(())
}

fn seed_predictions(exp_dir: &Path, seed: u64) -> anyhow::Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    let mut found = false;
    for entry in fs::read_dir(exp_dir).with_context(|| format!("reading {}", exp_dir.display()))? {
        let path = entry?.path().join(seed.to_string()).join("predictions.tsv");
        if path.exists() {
            found = true;
            out.extend(read_predictions(&path, &exp_dir.display().to_string())?);
        }
    }
    if !found {
        bail!("{} has no predictions for seed {seed}", exp_dir.display());
    }
    Ok(out)
}

fn cmd_analyze(a: &AnalyzeArgs) -> anyhow::Result<()> {
    let root = a.data_root.as_ref();
    let locate = |name: CorpusName| -> anyhow::Result<PathBuf> {
        match root {
            Some(r) => Ok(r.join(name.as_str())),
            None => bail!("set --data-root or {DATA_ROOT_ENV}"),
        }
    };
    let load_opts = SarcasmLoadOptions {
        max_rows: a.max_rows,
        seed: 0,
    };
    let corpus = load_corpus(&locate(a.corpus)?, a.corpus, &load_opts)?;
    fs::create_dir_all(&a.out)?;
    let mut summary = serde_json::Map::new();

    let mut sets = Vec::new();
    for (name, dir) in [("baseline", &a.baseline), ("pretrained", &a.pretrained)] {
        if let Some(dir) = dir {
            let preds = seed_predictions(dir, a.seed)?;
            let errors = misclassification_report(&preds, &corpus)?;
            let path = a.out.join(format!("misclassified_{name}.tsv"));
            let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_path(&path)?;
            w.write_record(["id", "target", "gold", "predicted", "confidence", "text"])?;
            for m in &errors {
                w.write_record([
                    m.id.as_str(),
                    m.target.as_deref().unwrap_or(""),
                    m.gold.as_str(),
                    m.predicted.as_str(),
                    &format!("{:.6}", m.confidence),
                    m.text.as_str(),
                ])?;
            }
            w.flush()?;
            summary.insert(format!("{name}_errors"), errors.len().into());
            sets.push(preds);
        }
    }

    if let Some(path) = &a.annotations {
        let [before, after] = sets.as_slice() else {
            bail!("--annotations needs both --baseline and --pretrained");
        };
        let flagged: BTreeSet<String> = read_annotations(path)?;
        let recovery = sarcasm_recovery(before, after, &flagged)?;
        summary.insert("flagged".into(), flagged.len().into());
        summary.insert("recovery".into(), serde_json::to_value(recovery)?);
    }

    if !a.affinity.is_empty() {
        let candidates = a
            .affinity
            .iter()
            .map(|&n| Ok(load_corpus(&locate(n)?, n, &load_opts)?))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let refs: Vec<&CorpusBundle> = candidates.iter().collect();
        let ranking = affinity_ranking(&refs, &corpus, &AffinityWeights::default())?;
        write_json(&a.out.join("affinity.json"), &ranking)?;
    }

    write_json(&a.out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> anyhow::Result<()> {
    let mut report = MetricsReport::default();
    for p in &a.metrics {
        report.merge(MetricsReport::read_csv(p)?);
    }
    let datasets = match &a.dataset {
        Some(d) => vec![d.clone()],
        None => report.datasets(),
    };
    let text: String = datasets
        .iter()
        .map(|d| render_report(&report, d, a.format))
        .collect::<Vec<_>>()
        .join("\n");
    match &a.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
