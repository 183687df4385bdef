//! BERT-family encoder (post-layer-norm transformer) used by the pretrained
//! encoder kinds, plus loading of Hugging Face checkpoints.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor, D};
use serde::{Deserialize, Serialize};

use super::layers::{embedding, layer_norm, linear, Dropout};
use super::EncoderKind;
use crate::error::{Error, Result};

pub const PREFIX: &str = "encoder.transformer.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerDims {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    pub type_vocab_size: usize,
    pub layer_norm_eps: f64,
    pub hidden_dropout: f64,
    pub pad_token_id: u32,
    /// First position id of a sequence: 0 for BERT, `pad + 1` for RoBERTa.
    pub position_offset: usize,
}

#[derive(Deserialize)]
struct HfConfig {
    vocab_size: usize,
    hidden_size: usize,
    num_hidden_layers: usize,
    num_attention_heads: usize,
    intermediate_size: usize,
    max_position_embeddings: usize,
    #[serde(default = "one")]
    type_vocab_size: usize,
    #[serde(default = "default_eps")]
    layer_norm_eps: f64,
    #[serde(default = "default_dropout")]
    hidden_dropout_prob: f64,
    #[serde(default)]
    pad_token_id: u32,
}

fn one() -> usize {
    1
}
fn default_eps() -> f64 {
    1e-12
}
fn default_dropout() -> f64 {
    0.1
}

impl TransformerDims {
    /// Reads a Hugging Face `config.json`.
    pub fn from_hf_config(path: &Path, kind: EncoderKind) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: HfConfig = serde_json::from_str(&text)?;
        let position_offset = match kind {
            EncoderKind::PretrainedRoberta => cfg.pad_token_id as usize + 1,
            _ => 0,
        };
        Ok(TransformerDims {
            vocab_size: cfg.vocab_size,
            hidden_size: cfg.hidden_size,
            num_layers: cfg.num_hidden_layers,
            num_heads: cfg.num_attention_heads,
            intermediate_size: cfg.intermediate_size,
            max_position_embeddings: cfg.max_position_embeddings,
            type_vocab_size: cfg.type_vocab_size,
            layer_norm_eps: cfg.layer_norm_eps,
            hidden_dropout: cfg.hidden_dropout_prob,
            pad_token_id: cfg.pad_token_id,
            position_offset,
        })
    }

    pub fn validate(&self, max_seq_len: usize) -> Result<()> {
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(Error::Shape(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden_size, self.num_heads
            )));
        }
        if max_seq_len + self.position_offset > self.max_position_embeddings {
            return Err(Error::Shape(format!(
                "max_seq_len {max_seq_len} exceeds the {} position embeddings",
                self.max_position_embeddings
            )));
        }
        Ok(())
    }

    /// Parameter names (without the model prefix) and shapes.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.hidden_size;
        let i = self.intermediate_size;
        let mut out = vec![
            ("embeddings.word_embeddings.weight".into(), vec![self.vocab_size, h]),
            ("embeddings.position_embeddings.weight".into(), vec![self.max_position_embeddings, h]),
            ("embeddings.token_type_embeddings.weight".into(), vec![self.type_vocab_size, h]),
            ("embeddings.LayerNorm.weight".into(), vec![h]),
            ("embeddings.LayerNorm.bias".into(), vec![h]),
        ];
        for l in 0..self.num_layers {
            let p = format!("encoder.layer.{l}.");
            for proj in ["query", "key", "value"] {
                out.push((format!("{p}attention.self.{proj}.weight"), vec![h, h]));
                out.push((format!("{p}attention.self.{proj}.bias"), vec![h]));
            }
            out.push((format!("{p}attention.output.dense.weight"), vec![h, h]));
            out.push((format!("{p}attention.output.dense.bias"), vec![h]));
            out.push((format!("{p}attention.output.LayerNorm.weight"), vec![h]));
            out.push((format!("{p}attention.output.LayerNorm.bias"), vec![h]));
            out.push((format!("{p}intermediate.dense.weight"), vec![i, h]));
            out.push((format!("{p}intermediate.dense.bias"), vec![i]));
            out.push((format!("{p}output.dense.weight"), vec![h, i]));
            out.push((format!("{p}output.dense.bias"), vec![h]));
            out.push((format!("{p}output.LayerNorm.weight"), vec![h]));
            out.push((format!("{p}output.LayerNorm.bias"), vec![h]));
        }
        out
    }
}

/// A pretrained checkpoint directory: `config.json`, `model.safetensors`
/// and `tokenizer.json`.
#[derive(Clone, Debug)]
pub struct PretrainedAssets {
    pub dims: TransformerDims,
    pub weights: PathBuf,
    pub tokenizer: PathBuf,
}

impl PretrainedAssets {
    pub fn open(dir: &Path, kind: EncoderKind) -> Result<Self> {
        let dims = TransformerDims::from_hf_config(&dir.join("config.json"), kind)?;
        let weights = dir.join("model.safetensors");
        let tokenizer = dir.join("tokenizer.json");
        for p in [&weights, &tokenizer] {
            if !p.exists() {
                return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(PretrainedAssets { dims, weights, tokenizer })
    }

    /// Checkpoint tensors renamed to this crate's parameter names. Pooler
    /// and pretraining heads are dropped.
    pub fn load_tensors(&self) -> Result<BTreeMap<String, Tensor>> {
        let raw = candle_core::safetensors::load(&self.weights, &Device::Cpu)?;
        Ok(rename_checkpoint(raw))
    }
}

/// Maps Hugging Face checkpoint names onto `encoder.transformer.*`.
pub fn rename_checkpoint(raw: HashMap<String, Tensor>) -> BTreeMap<String, Tensor> {
    raw.into_iter()
        .filter_map(|(name, t)| {
            let stripped = name
                .strip_prefix("bert.")
                .or_else(|| name.strip_prefix("roberta."))
                .unwrap_or(&name);
            if !(stripped.starts_with("embeddings.") || stripped.starts_with("encoder.")) {
                return None;
            }
            let renamed = stripped
                .replace("LayerNorm.gamma", "LayerNorm.weight")
                .replace("LayerNorm.beta", "LayerNorm.bias");
            Some((format!("{PREFIX}{renamed}"), t))
        })
        .collect()
}

/// Runs the encoder. `get` resolves a parameter name (without
/// [`PREFIX`]) to its tensor.
pub fn forward<'p>(
    dims: &TransformerDims,
    get: &dyn Fn(&str) -> Result<&'p Tensor>,
    ids: &Tensor,
    type_ids: &Tensor,
    mask: &Tensor,
    dropout: &mut Dropout<'_>,
) -> Result<Tensor> {
    let (batch, len) = ids.dims2()?;
    let device = ids.device();
    let positions: Vec<u32> = (0..len as u32).map(|p| p + dims.position_offset as u32).collect();
    let positions = Tensor::from_vec(positions, (1, len), device)?;
    let x = embedding(get("embeddings.word_embeddings.weight")?, ids)?
        .broadcast_add(&embedding(get("embeddings.position_embeddings.weight")?, &positions)?)?
        .add(&embedding(get("embeddings.token_type_embeddings.weight")?, type_ids)?)?;
    let eps = dims.layer_norm_eps;
    let mut x = layer_norm(
        &x,
        get("embeddings.LayerNorm.weight")?,
        get("embeddings.LayerNorm.bias")?,
        eps,
    )?;
    x = dropout.apply(&x, dims.hidden_dropout)?;

    let heads = dims.num_heads;
    let head_dim = dims.hidden_size / heads;
    // [B, 1, 1, L] additive bias hiding padded keys
    let key_bias = ((mask.ones_like()? - mask)? * -1e9)?.reshape((batch, 1, 1, len))?;
    let scale = 1.0 / (head_dim as f64).sqrt();
    for l in 0..dims.num_layers {
        let p = |s: &str| get(&format!("encoder.layer.{l}.{s}"));
        let split_heads = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((batch, len, heads, head_dim))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split_heads(linear(&x, p("attention.self.query.weight")?, p("attention.self.query.bias")?)?)?;
        let k = split_heads(linear(&x, p("attention.self.key.weight")?, p("attention.self.key.bias")?)?)?;
        let v = split_heads(linear(&x, p("attention.self.value.weight")?, p("attention.self.value.bias")?)?)?;
        let scores = (q.matmul(&k.t()?)? * scale)?.broadcast_add(&key_bias)?;
        let attn = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let ctx = attn
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((batch, len, dims.hidden_size))?;
        let attn_out = linear(&ctx, p("attention.output.dense.weight")?, p("attention.output.dense.bias")?)?;
        let attn_out = dropout.apply(&attn_out, dims.hidden_dropout)?;
        let h = layer_norm(
            &attn_out.add(&x)?,
            p("attention.output.LayerNorm.weight")?,
            p("attention.output.LayerNorm.bias")?,
            eps,
        )?;
        let inter = linear(&h, p("intermediate.dense.weight")?, p("intermediate.dense.bias")?)?.gelu_erf()?;
        let out = linear(&inter, p("output.dense.weight")?, p("output.dense.bias")?)?;
        let out = dropout.apply(&out, dims.hidden_dropout)?;
        x = layer_norm(
            &out.add(&h)?,
            p("output.LayerNorm.weight")?,
            p("output.LayerNorm.bias")?,
            eps,
        )?;
    }
    Ok(x)
}
