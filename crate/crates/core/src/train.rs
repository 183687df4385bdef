//! Optimization: class-weighted cross-entropy, geometric learning-rate
//! decay, early stopping, sarcasm pre-training and target fine-tuning.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Tensor, D};
use candle_nn::optim::{AdamW, Optimizer, ParamsAdamW};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{holdout_split, make_cv_folds, CorpusBundle, CorpusName, LabeledExample, Split, Task};
use crate::error::{Error, Result};
use crate::model::bundle::{transfer_parameters, BundleMetadata, ParameterBundle};
use crate::model::layers::Dropout;
use crate::model::tokenize::{EncodedBatch, EncodedText, TextTokenizer};
use crate::model::{ClassifierConfig, EncoderSpec, Model};

pub const INTERMEDIATE_LR_FINAL: f64 = 1e-9;
pub const TARGET_LR_FINAL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub max_epochs: usize,
    pub min_epochs: usize,
    pub patience: usize,
    pub class_weighting: bool,
    pub seed: u64,
    /// Feed the stance target as a first segment ahead of the text.
    pub prepend_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            lr_initial: 3e-5,
            lr_final: TARGET_LR_FINAL,
            max_epochs: 50,
            min_epochs: 10,
            patience: 5,
            class_weighting: true,
            seed: 0,
            prepend_target: false,
        }
    }
}

impl TrainConfig {
    pub fn intermediate() -> Self {
        TrainConfig {
            lr_final: INTERMEDIATE_LR_FINAL,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_final > 0.0 && self.lr_final < self.lr_initial) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < lr_final < lr_initial, got {} and {}",
                self.lr_final, self.lr_initial
            )));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument("patience, batch_size and max_epochs must be positive".into()));
        }
        if self.min_epochs > self.max_epochs {
            return Err(Error::InvalidArgument(format!(
                "min_epochs {} exceeds max_epochs {}",
                self.min_epochs, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// `w_c = N / (C * n_c)`, so that `sum_c w_c * n_c = N`.
pub fn compute_class_weights(task: Task, counts: &[usize]) -> Result<Vec<f64>> {
    if counts.len() != task.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "{} counts for a {}-class task",
            counts.len(),
            task.num_classes()
        )));
    }
    if let Some(i) = counts.iter().position(|&n| n == 0) {
        return Err(Error::ZeroClassCount {
            label: task.class_name(i).to_string(),
        });
    }
    let total: usize = counts.iter().sum();
    let c = counts.len() as f64;
    Ok(counts.iter().map(|&n| total as f64 / (c * n as f64)).collect())
}

/// `-(1/B) * sum_i w[y_i] * ln p_i[y_i]` over probability rows.
pub fn weighted_cross_entropy(probs: &[Vec<f64>], gold: &[usize], weights: &[f64]) -> Result<f64> {
    if probs.len() != gold.len() || probs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} probability rows for {} labels",
            probs.len(),
            gold.len()
        )));
    }
    let mut sum = 0.0;
    for (row, &y) in probs.iter().zip(gold) {
        let mut p = row[y];
        if p < 1e-12 {
            warn!("gold-class probability {p:e} clamped to 1e-12");
            p = 1e-12;
        }
        sum += weights[y] * p.ln();
    }
    Ok(-sum / probs.len() as f64)
}

/// Differentiable weighted cross-entropy on logits `[B, C]`.
pub fn weighted_cross_entropy_loss(logits: &Tensor, gold: &[usize], weights: &[f64]) -> Result<Tensor> {
    let b = gold.len();
    let log_probs = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    let idx: Vec<u32> = gold.iter().map(|&g| g as u32).collect();
    let idx = Tensor::from_vec(idx, (b, 1), logits.device())?;
    let picked = log_probs.gather(&idx, 1)?;
    let w: Vec<f64> = gold.iter().map(|&g| weights[g]).collect();
    let w = Tensor::from_vec(w, (b, 1), logits.device())?.to_dtype(logits.dtype())?;
    Ok((picked.mul(&w)?.sum_all()? / -(b as f64))?)
}

/// Geometric interpolation from `lr_initial` at epoch 1 to `lr_final` at
/// `max_epochs`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.max_epochs <= 1 || epoch <= 1 {
        return cfg.lr_initial;
    }
    if epoch >= cfg.max_epochs {
        return cfg.lr_final;
    }
    let t = (epoch - 1) as f64 / (cfg.max_epochs - 1) as f64;
    cfg.lr_initial * (cfg.lr_final / cfg.lr_initial).powf(t)
}

/// Tracks the best validation accuracy and decides when to stop.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    min_epochs: usize,
    patience: usize,
    best_epoch: usize,
    best: f64,
}

impl EarlyStopping {
    pub fn new(min_epochs: usize, patience: usize) -> Self {
        EarlyStopping {
            min_epochs,
            patience,
            best_epoch: 0,
            best: f64::NEG_INFINITY,
        }
    }

    /// Records the accuracy of `epoch` (1-based, consecutive). Returns
    /// whether it is a new best.
    pub fn observe(&mut self, epoch: usize, accuracy: f64) -> bool {
        if accuracy > self.best {
            self.best = accuracy;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        epoch >= self.min_epochs && epoch - self.best_epoch >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best_accuracy(&self) -> f64 {
        self.records
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map_or(0.0, |r| r.val_acc)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "loss", "val_acc", "lr"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                format!("{:.6}", r.loss),
                format!("{:.6}", r.val_acc),
                format!("{:e}", r.lr),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One training job as seen by [`fit_loop`].
pub trait EpochRunner {
    /// Trains one epoch at `lr`; returns the mean training loss.
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64>;
    fn validate(&mut self) -> Result<f64>;
    /// Remembers the current parameters as the best so far.
    fn save_best(&mut self) -> Result<()>;
    fn restore_best(&mut self) -> Result<()>;
}

/// Runs epochs until early stopping fires or `max_epochs` is reached, then
/// restores the best epoch's parameters.
pub fn fit_loop(runner: &mut dyn EpochRunner, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    let mut stopper = EarlyStopping::new(cfg.min_epochs, cfg.patience);
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.max_epochs {
        let lr = lr_at_epoch(cfg, epoch);
        let loss = runner.train_epoch(epoch, lr)?;
        let val_acc = runner.validate()?;
        history.records.push(EpochRecord { epoch, loss, val_acc, lr });
        if stopper.observe(epoch, val_acc) {
            runner.save_best()?;
        }
        info!("epoch {epoch}: loss {loss:.4} val_acc {val_acc:.4} lr {lr:.3e}");
        if stopper.should_stop(epoch) {
            history.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    runner.restore_best()?;
    Ok(history)
}

/// Encodes examples for the model. The target is only used when
/// `prepend_target` is set.
pub fn encode_examples(
    tokenizer: &TextTokenizer,
    examples: &[&LabeledExample],
    max_len: usize,
    prepend_target: bool,
) -> Result<Vec<EncodedText>> {
    let encoded: Vec<EncodedText> = examples
        .iter()
        .map(|e| {
            let pair = if prepend_target { e.target.as_deref() } else { None };
            tokenizer.encode(&e.text, pair, max_len)
        })
        .collect::<Result<_>>()?;
    let truncated = encoded.iter().filter(|e| e.truncated).count();
    if truncated > 0 {
        info!("{truncated} of {} examples truncated to {max_len} tokens", encoded.len());
    }
    Ok(encoded)
}

/// Evaluation-mode class probabilities for encoded examples.
pub fn predict_encoded(model: &Model, encoded: &[EncodedText], batch_size: usize, pad_id: u32) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(encoded.len());
    for chunk in encoded.chunks(batch_size.max(1)) {
        let rows: Vec<&EncodedText> = chunk.iter().collect();
        out.extend(model.predict(&EncodedBatch::collate(&rows, None, pad_id))?);
    }
    Ok(out)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(probs: &[Vec<f64>], gold: &[usize]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let correct = probs.iter().zip(gold).filter(|(p, &g)| argmax(p) == g).count();
    correct as f64 / gold.len() as f64
}

/// Trains a [`Model`] on encoded examples with Adam.
pub struct ModelRunner<'m> {
    model: &'m Model,
    optimizer: AdamW,
    train: Vec<EncodedText>,
    train_gold: Vec<usize>,
    val: Vec<EncodedText>,
    val_gold: Vec<usize>,
    weights: Vec<f64>,
    batch_size: usize,
    pad_id: u32,
    seed: u64,
    rng: ChaCha8Rng,
    best: Option<BTreeMap<String, Tensor>>,
}

impl<'m> ModelRunner<'m> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'m Model,
        train: Vec<EncodedText>,
        train_gold: Vec<usize>,
        val: Vec<EncodedText>,
        val_gold: Vec<usize>,
        weights: Vec<f64>,
        cfg: &TrainConfig,
        pad_id: u32,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if val.is_empty() {
            return Err(Error::Empty("validation set"));
        }
        let optimizer = AdamW::new(
            model.vars(),
            ParamsAdamW {
                lr: cfg.lr_initial,
                weight_decay: 0.0,
                ..ParamsAdamW::default()
            },
        )?;
        Ok(ModelRunner {
            model,
            optimizer,
            train,
            train_gold,
            val,
            val_gold,
            weights,
            batch_size: cfg.batch_size,
            pad_id,
            seed: cfg.seed,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            best: None,
        })
    }
}

impl EpochRunner for ModelRunner<'_> {
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64> {
        self.optimizer.set_learning_rate(lr);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(self.batch_size).enumerate() {
            let rows: Vec<&EncodedText> = chunk.iter().map(|&i| &self.train[i]).collect();
            let gold: Vec<usize> = chunk.iter().map(|&i| self.train_gold[i]).collect();
            let batch = EncodedBatch::collate(&rows, None, self.pad_id);
            let logits = self.model.logits(&batch, &mut Dropout::On(&mut self.rng))?;
            let loss = weighted_cross_entropy_loss(&logits, &gold, &self.weights)?;
            let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    seed: self.seed,
                    epoch,
                    batch: b,
                });
            }
            self.optimizer.backward_step(&loss)?;
            total += value;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    fn validate(&mut self) -> Result<f64> {
        let probs = predict_encoded(self.model, &self.val, self.batch_size.max(32), self.pad_id)?;
        Ok(accuracy(&probs, &self.val_gold))
    }

    fn save_best(&mut self) -> Result<()> {
        self.best = Some(self.model.snapshot()?);
        Ok(())
    }

    fn restore_best(&mut self) -> Result<()> {
        match &self.best {
            Some(s) => self.model.restore(s),
            None => Ok(()),
        }
    }
}

/// Trains `model` on `train`, early-stopping on `validation`, and leaves it
/// at the best epoch's parameters.
pub fn fit(
    model: &Model,
    tokenizer: &TextTokenizer,
    train: &[&LabeledExample],
    validation: &[&LabeledExample],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    let task = train
        .first()
        .map(|e| e.label.task())
        .ok_or(Error::Empty("training set"))?;
    let gold = |rows: &[&LabeledExample]| -> Vec<usize> { rows.iter().map(|e| e.label.class_index()).collect() };
    let train_gold = gold(train);
    let weights = if cfg.class_weighting {
        let mut counts = vec![0; task.num_classes()];
        for &g in &train_gold {
            counts[g] += 1;
        }
        compute_class_weights(task, &counts)?
    } else {
        vec![1.0; task.num_classes()]
    };
    let max_len = model.encoder().max_seq_len;
    let mut runner = ModelRunner::new(
        model,
        encode_examples(tokenizer, train, max_len, cfg.prepend_target)?,
        train_gold,
        encode_examples(tokenizer, validation, max_len, cfg.prepend_target)?,
        gold(validation),
        weights,
        cfg,
        tokenizer.pad_id(),
    )?;
    fit_loop(&mut runner, cfg)
}

/// Everything needed to build a fresh model for either task.
pub struct ModelFactory {
    pub encoder: EncoderSpec,
    pub classifier: ClassifierConfig,
    pub tokenizer: TextTokenizer,
    /// Pretrained encoder weights, keyed by model parameter name.
    pub checkpoint: Option<BTreeMap<String, Tensor>>,
    pub dtype: DType,
}

impl ModelFactory {
    pub fn config_for(&self, task: Task) -> ClassifierConfig {
        self.classifier.with_head(task.num_classes())
    }

    pub fn fresh(&self, task: Task, seed: u64) -> Result<Model> {
        let mut model = Model::build(&self.encoder, &self.config_for(task), seed, self.dtype)?;
        if let Some(ckpt) = &self.checkpoint {
            model.load_encoder_weights(ckpt)?;
        }
        Ok(model)
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub bundle: ParameterBundle,
    pub histories: Vec<TrainHistory>,
}

pub const PRETRAIN_FOLDS: usize = 5;
pub const SARC_TRAIN_FRACTION: f64 = 0.8;

/// Sarcasm pre-training. ST and SaV2C use 5-fold cross-validation and keep
/// the best fold's model; SARC uses a single 80/20 holdout split.
pub fn pretrain_intermediate(corpus: &CorpusBundle, factory: &ModelFactory, cfg: &TrainConfig) -> Result<PretrainOutcome> {
    if corpus.task() != Task::Sarcasm {
        return Err(Error::InvalidCorpus(format!("{} is not a sarcasm corpus", corpus.name())));
    }
    let rows = corpus.trainable();
    let splits: Vec<(Vec<&LabeledExample>, Vec<&LabeledExample>)> = if corpus.name() == CorpusName::Sarc {
        vec![holdout_split(&rows, SARC_TRAIN_FRACTION, cfg.seed)?]
    } else {
        let plan = make_cv_folds(&rows, PRETRAIN_FOLDS, cfg.seed)?;
        (0..PRETRAIN_FOLDS).map(|f| plan.split(&rows, f)).collect()
    };
    let mut histories = Vec::with_capacity(splits.len());
    let mut best: Option<(usize, f64, ParameterBundle)> = None;
    for (fold, (train, val)) in splits.iter().enumerate() {
        info!("pretraining on {} fold {}/{}", corpus.name(), fold + 1, splits.len());
        let model = factory.fresh(Task::Sarcasm, cfg.seed)?;
        let history = fit(&model, &factory.tokenizer, train, val, cfg)?;
        let acc = history.best_accuracy();
        if best.as_ref().is_none_or(|(_, b, _)| acc > *b) {
            let meta = BundleMetadata {
                source_corpus: corpus.name().to_string(),
                seed: cfg.seed,
                epoch: history.best_epoch,
                validation_accuracy: acc,
                fold_accuracies: Vec::new(),
                selected_fold: None,
            };
            let bundle = ParameterBundle::from_model(&model, Task::Sarcasm, meta, factory.tokenizer.vocab().cloned())?;
            best = Some((fold, acc, bundle));
        }
        histories.push(history);
    }
    let (fold, _, mut bundle) = best.ok_or(Error::Empty("pretraining folds"))?;
    bundle.metadata.fold_accuracies = histories.iter().map(TrainHistory::best_accuracy).collect();
    bundle.metadata.selected_fold = (splits.len() > 1).then_some(fold);
    Ok(PretrainOutcome { bundle, histories })
}

pub const DEV_FRACTION: f64 = 0.1;

/// Fine-tunes on one target's training split, holding out a seeded,
/// stratified 10% development set for early stopping. Test rows are never
/// read. Without a bundle the model starts from scratch.
pub fn finetune_target(
    bundle: Option<&ParameterBundle>,
    corpus: &CorpusBundle,
    target: &str,
    factory: &ModelFactory,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    let rows = corpus.target_examples(target, Split::Train);
    if rows.is_empty() {
        return Err(Error::NoExamples(format!("{} target {target} (train)", corpus.name())));
    }
    let task = corpus.task();
    let (train, dev) = holdout_split(&rows, 1.0 - DEV_FRACTION, cfg.seed)?;
    let model = match bundle {
        Some(b) => transfer_parameters(b, &factory.encoder, &factory.config_for(task), cfg.seed, factory.dtype)?,
        None => factory.fresh(task, cfg.seed)?,
    };
    let history = fit(&model, &factory.tokenizer, &train, &dev, cfg)?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, SarcasmLabel, StanceLabel};
    use crate::model::tokenize::WordVocab;
    use proptest::prelude::*;

    #[test]
    fn class_weights_for_atheism_train_counts() {
        let w = compute_class_weights(Task::Stance, &[92, 304, 117]).unwrap();
        let oracle: Vec<f64> = [92.0, 304.0, 117.0].iter().map(|n| 513.0 / (3.0 * n)).collect();
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in w.iter().zip([1.859, 0.563, 1.462]) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn class_weights_balanced_and_binary() {
        assert_eq!(compute_class_weights(Task::Stance, &[10, 10, 10]).unwrap(), vec![1.0; 3]);
        let w = compute_class_weights(Task::Sarcasm, &[350, 644]).unwrap();
        assert!((w[0] - 1.420).abs() < 1e-3 && (w[1] - 0.772).abs() < 1e-3);
        assert!(matches!(
            compute_class_weights(Task::Stance, &[3, 0, 2]),
            Err(Error::ZeroClassCount { label }) if label == "AGAINST"
        ));
    }

    proptest! {
        #[test]
        fn weighted_counts_sum_to_total(counts in prop::collection::vec(1usize..5000, 3)) {
            let w = compute_class_weights(Task::Stance, &counts).unwrap();
            let n: usize = counts.iter().sum();
            let s: f64 = w.iter().zip(&counts).map(|(w, &c)| w * c as f64).sum();
            prop_assert!((s - n as f64).abs() <= 1e-9 * n as f64);
        }

        #[test]
        fn lr_strictly_decreases(max in 2usize..80) {
            let cfg = TrainConfig { max_epochs: max, ..TrainConfig::default() };
            prop_assert_eq!(lr_at_epoch(&cfg, 1), cfg.lr_initial);
            prop_assert_eq!(lr_at_epoch(&cfg, max), cfg.lr_final);
            for e in 1..max {
                prop_assert!(lr_at_epoch(&cfg, e + 1) < lr_at_epoch(&cfg, e));
            }
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let perfect = weighted_cross_entropy(&[vec![1.0, 0.0, 0.0]], &[0], &[1.0; 3]).unwrap();
        assert!(perfect.abs() < 1e-12);
        let uniform = weighted_cross_entropy(&[vec![1.0 / 3.0; 3]], &[2], &[1.0; 3]).unwrap();
        assert!((uniform - 3f64.ln()).abs() < 1e-12);
        let probs = vec![vec![0.5, 0.25, 0.25], vec![0.5, 0.25, 0.25]];
        let l = weighted_cross_entropy(&probs, &[0, 1], &[2.0, 1.0, 1.0]).unwrap();
        assert!((l - 1.3863).abs() < 1e-4);
        let clamped = weighted_cross_entropy(&[vec![1.0, 0.0, 0.0]], &[1], &[1.0; 3]).unwrap();
        assert!((clamped - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn tensor_loss_matches_plain_loss() {
        let logits = Tensor::new(&[[1.0f64, 2.0, 0.5], [0.0, -1.0, 3.0]], &candle_core::Device::Cpu).unwrap();
        let probs: Vec<Vec<f64>> = candle_nn::ops::softmax(&logits, 1).unwrap().to_vec2().unwrap();
        let w = [1.5, 0.5, 2.0];
        let plain = weighted_cross_entropy(&probs, &[1, 2], &w).unwrap();
        let t = weighted_cross_entropy_loss(&logits, &[1, 2], &w).unwrap().to_scalar::<f64>().unwrap();
        assert!((plain - t).abs() < 1e-12);
    }

    #[test]
    fn learning_rate_midpoint() {
        let cfg = TrainConfig {
            lr_final: INTERMEDIATE_LR_FINAL,
            ..TrainConfig::default()
        };
        let oracle = 3e-5 * (1e-9f64 / 3e-5).powf(24.0 / 49.0);
        assert!((lr_at_epoch(&cfg, 25) - oracle).abs() < 1e-20);
        assert!((lr_at_epoch(&cfg, 25) - 1.924e-7).abs() < 1e-10);
    }

    struct Scripted {
        accs: Vec<f64>,
        epoch: usize,
        saved: Vec<usize>,
    }

    impl EpochRunner for Scripted {
        fn train_epoch(&mut self, epoch: usize, _lr: f64) -> Result<f64> {
            self.epoch = epoch;
            Ok(0.0)
        }
        fn validate(&mut self) -> Result<f64> {
            Ok(self.accs[self.epoch - 1])
        }
        fn save_best(&mut self) -> Result<()> {
            self.saved.push(self.epoch);
            Ok(())
        }
        fn restore_best(&mut self) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn plateau_stops_after_patience() {
        let cfg = TrainConfig {
            min_epochs: 1,
            ..TrainConfig::default()
        };
        let mut r = Scripted {
            accs: vec![0.6, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.9],
            epoch: 0,
            saved: vec![],
        };
        let h = fit_loop(&mut r, &cfg).unwrap();
        assert_eq!(h.records.len(), 7);
        assert_eq!(h.best_epoch, 2);
        assert!(h.stopped_early);
        assert_eq!(r.saved, vec![1, 2]);
    }

    #[test]
    fn improving_run_goes_the_distance() {
        let cfg = TrainConfig::default();
        let mut r = Scripted {
            accs: (0..50).map(|i| i as f64 / 50.0).collect(),
            epoch: 0,
            saved: vec![],
        };
        let h = fit_loop(&mut r, &cfg).unwrap();
        assert_eq!((h.records.len(), h.best_epoch, h.stopped_early), (50, 50, false));
    }

    fn toy_examples() -> Vec<LabeledExample> {
        let words = [("good", StanceLabel::InFavor), ("bad", StanceLabel::Against), ("meh", StanceLabel::None)];
        (0..12)
            .map(|i| {
                let (w, l) = words[i % 3];
                LabeledExample {
                    id: format!("e{i}"),
                    text: format!("{w} {w} thing"),
                    target: Some("T".into()),
                    label: Label::Stance(l),
                    split: Split::Train,
                }
            })
            .collect()
    }

    fn toy_model(dtype: DType) -> (Model, TextTokenizer) {
        let ex = toy_examples();
        let vocab = WordVocab::build(ex.iter().map(|e| e.text.as_str()), 50, 1);
        let enc = EncoderSpec::fallback(4, vocab.len());
        let cfg = ClassifierConfig {
            bilstm_hidden: 3,
            filter_count: 2,
            dropout_rate: 0.0,
            ..ClassifierConfig::default()
        };
        (Model::build(&enc, &cfg, 0, dtype).unwrap(), TextTokenizer::Words(vocab))
    }

    #[test]
    fn scaling_weights_scales_gradients() {
        let (model, tok) = toy_model(DType::F64);
        let ex = toy_examples();
        let refs: Vec<&LabeledExample> = ex.iter().take(3).collect();
        let enc = encode_examples(&tok, &refs, 16, false).unwrap();
        let rows: Vec<&EncodedText> = enc.iter().collect();
        let batch = EncodedBatch::collate(&rows, None, 0);
        let gold = [0, 1, 2];
        let grads = |w: &[f64]| {
            let logits = model.logits(&batch, &mut Dropout::Off).unwrap();
            weighted_cross_entropy_loss(&logits, &gold, w).unwrap().backward().unwrap()
        };
        let base = grads(&[1.0, 2.0, 0.5]);
        let scaled = grads(&[3.0, 6.0, 1.5]);
        for var in model.params().values() {
            let a: Vec<f64> = base.get(var).unwrap().flatten_all().unwrap().to_vec1().unwrap();
            let b: Vec<f64> = scaled.get(var).unwrap().flatten_all().unwrap().to_vec1().unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((3.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn finetune_never_reads_test_rows() {
        let mut ex = toy_examples();
        ex.extend(toy_examples().into_iter().map(|mut e| {
            e.id = format!("t{}", e.id);
            e.split = Split::Test;
            e
        }));
        let corpus = CorpusBundle::new(CorpusName::SemEval, ex).unwrap();
        let (model, tok) = toy_model(DType::F32);
        let factory = ModelFactory {
            encoder: model.encoder().clone(),
            classifier: model.config().clone(),
            tokenizer: tok,
            checkpoint: None,
            dtype: DType::F32,
        };
        let cfg = TrainConfig {
            max_epochs: 2,
            min_epochs: 1,
            lr_initial: 1e-2,
            lr_final: 1e-3,
            ..TrainConfig::default()
        };
        let before = corpus.read_log().reads(Split::Test);
        let (_, history) = finetune_target(None, &corpus, "T", &factory, &cfg).unwrap();
        assert_eq!(history.records.len(), 2);
        assert_eq!(corpus.read_log().reads(Split::Test), before);
        assert!(corpus.read_log().reads(Split::Train) > 0);
    }

    #[test]
    fn pretraining_keeps_fold_accuracies() {
        let ex: Vec<LabeledExample> = (0..20)
            .map(|i| LabeledExample {
                id: format!("s{i}"),
                text: if i % 2 == 0 { "yeah right sure".into() } else { "the sky is blue".into() },
                target: None,
                label: Label::Sarcasm(if i % 2 == 0 {
                    SarcasmLabel::Sarcastic
                } else {
                    SarcasmLabel::NotSarcastic
                }),
                split: Split::Unsplit,
            })
            .collect();
        let vocab = WordVocab::build(ex.iter().map(|e| e.text.as_str()), 50, 1);
        let corpus = CorpusBundle::new(CorpusName::St, ex).unwrap();
        let factory = ModelFactory {
            encoder: EncoderSpec::fallback(4, vocab.len()),
            classifier: ClassifierConfig {
                bilstm_hidden: 3,
                filter_count: 2,
                ..ClassifierConfig::default()
            },
            tokenizer: TextTokenizer::Words(vocab),
            checkpoint: None,
            dtype: DType::F32,
        };
        let cfg = TrainConfig {
            max_epochs: 1,
            min_epochs: 1,
            lr_initial: 1e-2,
            lr_final: 1e-3,
            ..TrainConfig::intermediate()
        };
        let out = pretrain_intermediate(&corpus, &factory, &cfg).unwrap();
        let meta = &out.bundle.metadata;
        assert_eq!(meta.fold_accuracies.len(), 5);
        let fold = meta.selected_fold.unwrap();
        assert!(meta.fold_accuracies.iter().all(|&a| a <= meta.fold_accuracies[fold]));
        assert_eq!(out.bundle.head.classes, 2);
        assert_eq!(meta.source_corpus, "ST");
    }
}
