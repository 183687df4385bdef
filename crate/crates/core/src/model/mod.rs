//! Stance/sarcasm classifier: encoder, convolution stack, BiLSTM, dropout
//! and a dense softmax head.

pub mod bundle;
pub mod layers;
pub mod tokenize;
pub mod transformer;

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use layers::{
    bilstm, conv1d_relu, embedding, id_tensor, linear, mask_tensor, masked_max_pool, masked_mean_pool,
    Dropout, LstmWeights,
};
use tokenize::EncodedBatch;
pub use transformer::{PretrainedAssets, TransformerDims};

pub const PRETRAINED_WIDTH: usize = 768;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    PretrainedBert,
    PretrainedRoberta,
    FallbackSmall,
}

impl EncoderKind {
    pub fn is_pretrained(self) -> bool {
        !matches!(self, EncoderKind::FallbackSmall)
    }

    pub fn label(self) -> &'static str {
        match self {
            EncoderKind::PretrainedBert => "BERT",
            EncoderKind::PretrainedRoberta => "RoBERTa",
            EncoderKind::FallbackSmall => "Small",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bert" | "pretrained_bert" => Ok(EncoderKind::PretrainedBert),
            "roberta" | "pretrained_roberta" => Ok(EncoderKind::PretrainedRoberta),
            "small" | "fallback" | "fallback_small" => Ok(EncoderKind::FallbackSmall),
            _ => Err(Error::InvalidArgument(format!("unknown encoder kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub hidden_width: usize,
    pub max_seq_len: usize,
    /// Word vocabulary size of the fallback encoder.
    #[serde(default)]
    pub vocab_size: usize,
    #[serde(default)]
    pub embed_dim: usize,
    #[serde(default)]
    pub recurrent_layers: usize,
    #[serde(default)]
    pub transformer: Option<TransformerDims>,
}

impl EncoderSpec {
    pub fn fallback(hidden_width: usize, vocab_size: usize) -> Self {
        EncoderSpec {
            kind: EncoderKind::FallbackSmall,
            hidden_width,
            max_seq_len: 128,
            vocab_size,
            embed_dim: hidden_width,
            recurrent_layers: 2,
            transformer: None,
        }
    }

    pub fn pretrained(kind: EncoderKind, dims: TransformerDims) -> Self {
        EncoderSpec {
            kind,
            hidden_width: PRETRAINED_WIDTH,
            max_seq_len: 128,
            vocab_size: 0,
            embed_dim: 0,
            recurrent_layers: 0,
            transformer: Some(dims),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.max_seq_len == 0 {
            return Err(Error::Shape("encoder width and max_seq_len must be positive".into()));
        }
        match (self.kind, &self.transformer) {
            (EncoderKind::FallbackSmall, _) => {
                if !self.hidden_width.is_multiple_of(2) {
                    return Err(Error::Shape(format!(
                        "fallback width {} must be even (two recurrent directions)",
                        self.hidden_width
                    )));
                }
                if self.vocab_size < 3 || self.embed_dim == 0 || self.recurrent_layers == 0 {
                    return Err(Error::Shape(
                        "fallback encoder needs vocab_size >= 3, embed_dim > 0 and at least one recurrent layer"
                            .into(),
                    ));
                }
                Ok(())
            }
            (_, None) => Err(Error::Shape(format!("{:?} encoder needs transformer dimensions", self.kind))),
            (_, Some(dims)) => {
                if self.hidden_width != PRETRAINED_WIDTH {
                    return Err(Error::Shape(format!(
                        "pretrained encoders have width {PRETRAINED_WIDTH}, got {}",
                        self.hidden_width
                    )));
                }
                if dims.hidden_size != self.hidden_width {
                    return Err(Error::Shape(format!(
                        "width mismatch: encoder produces {} features but the classifier expects {}",
                        dims.hidden_size, self.hidden_width
                    )));
                }
                dims.validate(self.max_seq_len)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Last forward and first backward BiLSTM states; first position when
    /// the BiLSTM is disabled.
    #[default]
    FinalStates,
    MaxPool,
    MeanPool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub use_conv: bool,
    pub conv_layer_count: usize,
    pub kernel_size: usize,
    pub filter_count: usize,
    pub conv_activation: Activation,
    pub use_bilstm: bool,
    pub bilstm_hidden: usize,
    pub reduction: Reduction,
    pub dropout_rate: f64,
    pub head_classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            use_conv: true,
            conv_layer_count: 2,
            kernel_size: 3,
            filter_count: 16,
            conv_activation: Activation::Relu,
            use_bilstm: true,
            bilstm_hidden: 768,
            reduction: Reduction::FinalStates,
            dropout_rate: 0.25,
            head_classes: 3,
        }
    }
}

impl ClassifierConfig {
    pub fn with_head(&self, classes: usize) -> Self {
        ClassifierConfig {
            head_classes: classes,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.use_conv {
            if self.conv_layer_count == 0 || self.filter_count == 0 {
                return Err(Error::Shape("conv stack needs at least one layer and one filter".into()));
            }
            if self.kernel_size.is_multiple_of(2) {
                return Err(Error::Shape(format!("kernel size {} must be odd", self.kernel_size)));
            }
        }
        if self.use_bilstm && self.bilstm_hidden == 0 {
            return Err(Error::Shape("bilstm_hidden must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(2..=3).contains(&self.head_classes) {
            return Err(Error::Shape(format!("head_classes {} must be 2 or 3", self.head_classes)));
        }
        Ok(())
    }
}

/// Hash of everything but the head size. Models sharing a fingerprint
/// share every non-head parameter name and shape.
pub fn fingerprint(encoder: &EncoderSpec, classifier: &ClassifierConfig) -> String {
    let value = serde_json::json!({
        "encoder": encoder,
        "classifier": classifier.with_head(0),
    });
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

pub fn is_head_parameter(name: &str) -> bool {
    name.starts_with("head.")
}

fn lstm_shapes(out: &mut Vec<(String, Vec<usize>)>, prefix: &str, input: usize, hidden: usize) {
    for dir in ["fwd", "bwd"] {
        out.push((format!("{prefix}.{dir}.w_ih"), vec![4 * hidden, input]));
        out.push((format!("{prefix}.{dir}.w_hh"), vec![4 * hidden, hidden]));
        out.push((format!("{prefix}.{dir}.bias"), vec![4 * hidden]));
    }
}

/// Width of the features entering the reduction step.
fn feature_width(encoder: &EncoderSpec, cfg: &ClassifierConfig) -> usize {
    if cfg.use_bilstm {
        2 * cfg.bilstm_hidden
    } else if cfg.use_conv {
        cfg.filter_count
    } else {
        encoder.hidden_width
    }
}

/// Every parameter of the model, in a fixed order.
pub fn parameter_shapes(encoder: &EncoderSpec, cfg: &ClassifierConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    match &encoder.transformer {
        Some(dims) if encoder.kind.is_pretrained() => {
            for (name, shape) in dims.parameter_shapes() {
                out.push((format!("{}{name}", transformer::PREFIX), shape));
            }
        }
        _ => {
            out.push(("encoder.embedding.weight".into(), vec![encoder.vocab_size, encoder.embed_dim]));
            let h = encoder.hidden_width / 2;
            for l in 0..encoder.recurrent_layers {
                let input = if l == 0 { encoder.embed_dim } else { 2 * h };
                lstm_shapes(&mut out, &format!("encoder.rnn.{l}"), input, h);
            }
        }
    }
    let mut width = encoder.hidden_width;
    if cfg.use_conv {
        for i in 0..cfg.conv_layer_count {
            out.push((format!("conv.{i}.weight"), vec![cfg.filter_count, width, cfg.kernel_size]));
            out.push((format!("conv.{i}.bias"), vec![cfg.filter_count]));
            width = cfg.filter_count;
        }
    }
    if cfg.use_bilstm {
        lstm_shapes(&mut out, "bilstm", width, cfg.bilstm_hidden);
    }
    let d = feature_width(encoder, cfg);
    out.push(("head.weight".into(), vec![cfg.head_classes, d]));
    out.push(("head.bias".into(), vec![cfg.head_classes]));
    out
}

/// Per-parameter generator, so each tensor's initial values depend only on
/// the seed and the parameter name.
fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(name.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(bytes))
}

/// Seeded initial values for parameter `name` of a model with the given
/// parameter `shapes`.
pub fn initial_values(shapes: &[(String, Vec<usize>)], name: &str, seed: u64) -> Result<Vec<f32>> {
    let shape_of = |n: &str| shapes.iter().find(|(m, _)| m == n).map(|(_, s)| s.as_slice());
    let shape = shape_of(name).ok_or_else(|| Error::Shape(format!("no parameter named {name}")))?;
    let n: usize = shape.iter().product();
    let mut rng = param_rng(seed, name);
    let uniform = |rng: &mut ChaCha8Rng, bound: f64| -> Vec<f32> {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        (0..n).map(|_| dist.sample(rng) as f32).collect()
    };
    let normal = |rng: &mut ChaCha8Rng, std: f64| -> Vec<f32> {
        let dist = Normal::new(0.0, std).expect("positive std");
        (0..n).map(|_| dist.sample(rng) as f32).collect()
    };
    let values = if name.starts_with(transformer::PREFIX) {
        if name.contains("LayerNorm.weight") {
            vec![1.0; n]
        } else if name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            normal(&mut rng, 0.02)
        }
    } else if name == "encoder.embedding.weight" {
        normal(&mut rng, 0.1)
    } else if name.starts_with("encoder.rnn.") || name.starts_with("bilstm.") {
        // weights and bias: U(-1/sqrt(H), 1/sqrt(H))
        uniform(&mut rng, 1.0 / ((shape[0] / 4) as f64).sqrt())
    } else {
        // conv and head, bias included: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
        let weight = name.strip_suffix(".bias").map(|b| format!("{b}.weight"));
        let weight_shape = match &weight {
            Some(w) => shape_of(w).ok_or_else(|| Error::Shape(format!("{name} has no weight")))?,
            None => shape,
        };
        let fan_in: usize = weight_shape[1..].iter().product();
        uniform(&mut rng, 1.0 / (fan_in as f64).sqrt())
    };
    Ok(values)
}

#[derive(Debug)]
pub struct Model {
    encoder: EncoderSpec,
    config: ClassifierConfig,
    dtype: DType,
    device: Device,
    params: BTreeMap<String, Var>,
}

impl Model {
    /// Builds a freshly initialized model. The same seed always gives the
    /// same parameters.
    pub fn build(encoder: &EncoderSpec, cfg: &ClassifierConfig, seed: u64, dtype: DType) -> Result<Self> {
        encoder.validate()?;
        cfg.validate()?;
        let shapes = parameter_shapes(encoder, cfg);
        let device = Device::Cpu;
        let mut params = BTreeMap::new();
        for (name, shape) in &shapes {
            let values = initial_values(&shapes, name, seed)?;
            params.insert(name.clone(), make_var(values, shape, dtype, &device)?);
        }
        Ok(Model {
            encoder: encoder.clone(),
            config: cfg.clone(),
            dtype,
            device,
            params,
        })
    }

    /// Builds a model from explicit values for every parameter.
    pub fn from_values(
        encoder: &EncoderSpec,
        cfg: &ClassifierConfig,
        values: &BTreeMap<String, (Vec<usize>, Vec<f32>)>,
        dtype: DType,
    ) -> Result<Self> {
        encoder.validate()?;
        cfg.validate()?;
        let device = Device::Cpu;
        let mut params = BTreeMap::new();
        for (name, shape) in parameter_shapes(encoder, cfg) {
            let (found, data) = values
                .get(&name)
                .ok_or_else(|| Error::Shape(format!("missing parameter {name}")))?;
            if *found != shape {
                return Err(Error::Shape(format!("{name}: expected {shape:?}, found {found:?}")));
            }
            params.insert(name, make_var(data.clone(), &shape, dtype, &device)?);
        }
        Ok(Model {
            encoder: encoder.clone(),
            config: cfg.clone(),
            dtype,
            device,
            params,
        })
    }

    /// Overwrites encoder parameters with checkpoint tensors, e.g. from
    /// [`PretrainedAssets::load_tensors`]. Every transformer parameter must
    /// be present with a matching shape.
    pub fn load_encoder_weights(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, var) in &self.params {
            if !name.starts_with("encoder.") {
                continue;
            }
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::Shape(format!("checkpoint lacks {name}")))?;
            if t.dims() != var.dims() {
                return Err(Error::Shape(format!(
                    "{name}: checkpoint shape {:?}, model shape {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        }
        Ok(())
    }

    pub fn encoder(&self) -> &EncoderSpec {
        &self.encoder
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.encoder, &self.config)
    }

    pub fn params(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    pub fn vars(&self) -> Vec<Var> {
        self.params.values().cloned().collect()
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(Var::as_tensor)
            .ok_or_else(|| Error::Shape(format!("no parameter named {name}")))
    }

    /// Flattened f32 values of one parameter.
    pub fn values(&self, name: &str) -> Result<Vec<f32>> {
        Ok(self
            .tensor(name)?
            .flatten_all()?
            .to_dtype(DType::F32)?
            .to_vec1()?)
    }

    /// Copies of every parameter, for restoring the best epoch later.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.params
            .iter()
            .map(|(n, v)| Ok((n.clone(), v.as_tensor().copy()?)))
            .collect()
    }

    pub fn restore(&self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, var) in &self.params {
            let t = snapshot
                .get(name)
                .ok_or_else(|| Error::Shape(format!("snapshot lacks {name}")))?;
            var.set(t)?;
        }
        Ok(())
    }

    /// Unnormalized class scores `[B, C]`.
    pub fn logits(&self, batch: &EncodedBatch, dropout: &mut Dropout<'_>) -> Result<Tensor> {
        let len = batch.len.min(self.encoder.max_seq_len);
        let (ids, type_ids, mask) = if len < batch.len {
            let cut = |v: &[u32]| -> Vec<u32> { v.chunks(batch.len).flat_map(|r| r[..len].to_vec()).collect() };
            let m: Vec<u8> = batch.mask.chunks(batch.len).flat_map(|r| r[..len].to_vec()).collect();
            (cut(&batch.ids), cut(&batch.type_ids), m)
        } else {
            (batch.ids.clone(), batch.type_ids.clone(), batch.mask.clone())
        };
        let b = batch.batch;
        let ids = id_tensor(&ids, b, len, &self.device)?;
        let type_ids = id_tensor(&type_ids, b, len, &self.device)?;
        let mask = mask_tensor(&mask, b, len, self.dtype, &self.device)?;
        let rate = self.config.dropout_rate;

        let mut x = self.encode(&ids, &type_ids, &mask, dropout)?;
        x = dropout.apply(&x, rate)?;
        if self.config.use_conv {
            for i in 0..self.config.conv_layer_count {
                x = conv1d_relu(
                    &x,
                    &mask,
                    self.tensor(&format!("conv.{i}.weight"))?,
                    self.tensor(&format!("conv.{i}.bias"))?,
                )?;
            }
            x = dropout.apply(&x, rate)?;
        }
        let reduced = if self.config.use_bilstm {
            let (outputs, finals) = bilstm(&x, &mask, &self.lstm("bilstm.fwd")?, &self.lstm("bilstm.bwd")?)?;
            match self.config.reduction {
                Reduction::FinalStates => finals,
                Reduction::MaxPool => masked_max_pool(&outputs, &mask)?,
                Reduction::MeanPool => masked_mean_pool(&outputs, &mask)?,
            }
        } else {
            match self.config.reduction {
                Reduction::FinalStates => x.narrow(1, 0, 1)?.squeeze(1)?,
                Reduction::MaxPool => masked_max_pool(&x, &mask)?,
                Reduction::MeanPool => masked_mean_pool(&x, &mask)?,
            }
        };
        let reduced = dropout.apply(&reduced, rate)?;
        linear(&reduced, self.tensor("head.weight")?, self.tensor("head.bias")?)
    }

    /// Class probabilities `[B, C]`.
    pub fn forward(&self, batch: &EncodedBatch, dropout: &mut Dropout<'_>) -> Result<Tensor> {
        Ok(candle_nn::ops::softmax(&self.logits(batch, dropout)?, D::Minus1)?)
    }

    /// Evaluation-mode probabilities as plain rows.
    pub fn predict(&self, batch: &EncodedBatch) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .forward(batch, &mut Dropout::Off)?
            .to_dtype(DType::F64)?
            .to_vec2()?)
    }

    fn lstm(&self, prefix: &str) -> Result<LstmWeights<'_>> {
        Ok(LstmWeights {
            w_ih: self.tensor(&format!("{prefix}.w_ih"))?,
            w_hh: self.tensor(&format!("{prefix}.w_hh"))?,
            bias: self.tensor(&format!("{prefix}.bias"))?,
        })
    }

    fn encode(&self, ids: &Tensor, type_ids: &Tensor, mask: &Tensor, dropout: &mut Dropout<'_>) -> Result<Tensor> {
        match &self.encoder.transformer {
            Some(dims) if self.encoder.kind.is_pretrained() => {
                let get = |name: &str| self.tensor(&format!("{}{name}", transformer::PREFIX));
                transformer::forward(dims, &get, ids, type_ids, mask, dropout)
            }
            _ => {
                let mut x = embedding(self.tensor("encoder.embedding.weight")?, ids)?;
                for l in 0..self.encoder.recurrent_layers {
                    if l > 0 {
                        x = dropout.apply(&x, self.config.dropout_rate)?;
                    }
                    let (out, _) = bilstm(
                        &x,
                        mask,
                        &self.lstm(&format!("encoder.rnn.{l}.fwd"))?,
                        &self.lstm(&format!("encoder.rnn.{l}.bwd"))?,
                    )?;
                    x = out;
                }
                Ok(x)
            }
        }
    }
}

fn make_var(values: Vec<f32>, shape: &[usize], dtype: DType, device: &Device) -> Result<Var> {
    let t = Tensor::from_vec(values, shape, device)?.to_dtype(dtype)?;
    Ok(Var::from_tensor(&t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tokenize::EncodedText;

    fn tiny() -> (EncoderSpec, ClassifierConfig) {
        let enc = EncoderSpec::fallback(8, 20);
        let cfg = ClassifierConfig {
            bilstm_hidden: 6,
            filter_count: 4,
            ..ClassifierConfig::default()
        };
        (enc, cfg)
    }

    fn batch(rows: &[&[u32]], pad_to: Option<usize>) -> EncodedBatch {
        let texts: Vec<EncodedText> = rows
            .iter()
            .map(|r| EncodedText {
                ids: r.to_vec(),
                type_ids: vec![0; r.len()],
                truncated: false,
            })
            .collect();
        let refs: Vec<&EncodedText> = texts.iter().collect();
        EncodedBatch::collate(&refs, pad_to, 0)
    }

    #[test]
    fn same_seed_same_parameters() {
        let (enc, cfg) = tiny();
        let a = Model::build(&enc, &cfg, 7, DType::F32).unwrap();
        let b = Model::build(&enc, &cfg, 7, DType::F32).unwrap();
        let c = Model::build(&enc, &cfg, 8, DType::F32).unwrap();
        for name in a.params().keys() {
            assert_eq!(a.values(name).unwrap(), b.values(name).unwrap(), "{name}");
        }
        assert_ne!(a.values("head.weight").unwrap(), c.values("head.weight").unwrap());
        assert!(a.values("head.bias").unwrap().iter().any(|v| *v != 0.0));
    }

    #[test]
    fn stance_and_sarcasm_share_everything_but_the_head() {
        let (enc, cfg) = tiny();
        let stance = parameter_shapes(&enc, &cfg.with_head(3));
        let sarcasm = parameter_shapes(&enc, &cfg.with_head(2));
        assert_eq!(fingerprint(&enc, &cfg.with_head(3)), fingerprint(&enc, &cfg.with_head(2)));
        let shared = |v: &[(String, Vec<usize>)]| -> Vec<(String, Vec<usize>)> {
            v.iter().filter(|(n, _)| !is_head_parameter(n)).cloned().collect()
        };
        assert_eq!(shared(&stance), shared(&sarcasm));
        let head = |v: &[(String, Vec<usize>)]| v.iter().find(|(n, _)| n == "head.weight").unwrap().1.clone();
        assert_eq!(head(&stance), vec![3, 12]);
        assert_eq!(head(&sarcasm), vec![2, 12]);
    }

    #[test]
    fn conv_input_matches_encoder_width() {
        let enc = EncoderSpec::fallback(32, 10);
        let shapes = parameter_shapes(&enc, &ClassifierConfig::default());
        let conv0 = shapes.iter().find(|(n, _)| n == "conv.0.weight").unwrap();
        assert_eq!(conv0.1, vec![16, 32, 3]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (enc, cfg) = tiny();
        let even = ClassifierConfig { kernel_size: 4, ..cfg.clone() };
        assert!(Model::build(&enc, &even, 0, DType::F32).is_err());
        let heads = cfg.with_head(4);
        assert!(Model::build(&enc, &heads, 0, DType::F32).is_err());
        let mut wide = EncoderSpec::pretrained(
            EncoderKind::PretrainedBert,
            TransformerDims {
                vocab_size: 10,
                hidden_size: 64,
                num_layers: 1,
                num_heads: 2,
                intermediate_size: 8,
                max_position_embeddings: 130,
                type_vocab_size: 2,
                layer_norm_eps: 1e-12,
                hidden_dropout: 0.1,
                pad_token_id: 0,
                position_offset: 0,
            },
        );
        assert!(matches!(wide.validate(), Err(Error::Shape(m)) if m.contains("width mismatch")));
        wide.hidden_width = 64;
        assert!(wide.validate().is_err());
    }

    #[test]
    fn rows_are_probabilities_and_duplicates_agree() {
        let (enc, cfg) = tiny();
        let model = Model::build(&enc, &cfg, 1, DType::F32).unwrap();
        let b = batch(&[&[3, 4, 5], &[3, 4, 5], &[6], &[7, 8, 9, 10]], None);
        let probs = model.predict(&b).unwrap();
        assert_eq!((probs.len(), probs[0].len()), (4, 3));
        for row in &probs {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|p| *p > 0.0 && *p < 1.0));
        }
        assert_eq!(probs[0], probs[1]);
    }

    #[test]
    fn padding_length_does_not_change_output() {
        let (enc, cfg) = tiny();
        for reduction in [Reduction::FinalStates, Reduction::MaxPool, Reduction::MeanPool] {
            let cfg = ClassifierConfig { reduction, ..cfg.clone() };
            let model = Model::build(&enc, &cfg, 2, DType::F32).unwrap();
            let short = model.predict(&batch(&[&[3, 4, 5]], Some(4))).unwrap();
            let long = model.predict(&batch(&[&[3, 4, 5]], Some(40))).unwrap();
            for (a, b) in short[0].iter().zip(&long[0]) {
                assert!((a - b).abs() < 1e-5, "{reduction:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn over_length_input_is_truncated() {
        let (mut enc, cfg) = tiny();
        enc.max_seq_len = 3;
        let model = Model::build(&enc, &cfg, 3, DType::F32).unwrap();
        let long = model.predict(&batch(&[&[3, 4, 5, 6, 7]], None)).unwrap();
        let cut = model.predict(&batch(&[&[3, 4, 5]], None)).unwrap();
        assert_eq!(long, cut);
    }

    #[test]
    fn ablations_build_and_run() {
        let (enc, cfg) = tiny();
        for (use_conv, use_bilstm) in [(false, false), (true, false), (false, true)] {
            let cfg = ClassifierConfig {
                use_conv,
                use_bilstm,
                ..cfg.clone()
            };
            let model = Model::build(&enc, &cfg, 4, DType::F32).unwrap();
            let p = model.predict(&batch(&[&[3, 4]], None)).unwrap();
            assert_eq!(p[0].len(), 3);
        }
    }

    #[test]
    fn snapshot_restores_parameters() {
        let (enc, cfg) = tiny();
        let model = Model::build(&enc, &cfg, 5, DType::F32).unwrap();
        let snap = model.snapshot().unwrap();
        let before = model.values("head.weight").unwrap();
        let head = &model.params()["head.weight"];
        head.set(&head.as_tensor().zeros_like().unwrap()).unwrap();
        model.restore(&snap).unwrap();
        assert_eq!(model.values("head.weight").unwrap(), before);
    }
}
