//! Differentiable building blocks over candle tensors.
//!
//! Sequences are laid out `[batch, length, features]` and come with a
//! `[batch, length, 1]` mask holding 1 for real tokens and 0 for padding.
//! Padding is always at the end of a row.

use candle_core::{DType, Device, Module, Tensor, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Whether dropout is active, and the generator that draws its masks.
pub enum Dropout<'a> {
    Off,
    On(&'a mut ChaCha8Rng),
}

impl Dropout<'_> {
    pub fn is_on(&self) -> bool {
        matches!(self, Dropout::On(_))
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
    pub fn apply(&mut self, x: &Tensor, rate: f64) -> Result<Tensor> {
        let rng = match self {
            Dropout::On(rng) if rate > 0.0 => rng,
            _ => return Ok(x.clone()),
        };
        let scale = 1.0 / (1.0 - rate);
        let n = x.elem_count();
        let keep: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
            .collect();
        let mask = Tensor::from_vec(keep, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok(x.mul(&mask)?)
    }
}

/// `x W^T + b` over the last dimension.
pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    Ok(x.broadcast_matmul(&weight.t()?)?.broadcast_add(bias)?)
}

pub fn layer_norm(x: &Tensor, weight: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + eps)?.sqrt()?)?;
    Ok(normed.broadcast_mul(weight)?.broadcast_add(bias)?)
}

pub struct LstmWeights<'a> {
    /// `[4H, input]`, gates ordered input, forget, cell, output.
    pub w_ih: &'a Tensor,
    /// `[4H, H]`
    pub w_hh: &'a Tensor,
    /// `[4H]`
    pub bias: &'a Tensor,
}

/// One LSTM direction over a masked sequence.
///
/// Returns per-step outputs `[B, L, H]` (zero at padding) and the final
/// hidden state `[B, H]`. Padded steps leave the state untouched, so the
/// forward direction ends on the last real token and the reverse direction
/// starts from a zero state at the last real token.
pub fn lstm_direction(
    x: &Tensor,
    mask: &Tensor,
    w: &LstmWeights<'_>,
    reverse: bool,
) -> Result<(Tensor, Tensor)> {
    let (batch, len, _) = x.dims3()?;
    let hidden = w.w_hh.dim(1)?;
    let projected = linear(x, w.w_ih, w.bias)?;
    let w_hh_t = w.w_hh.t()?.contiguous()?;
    let mut h = Tensor::zeros((batch, hidden), x.dtype(), x.device())?;
    let mut c = h.clone();
    let mut outputs = Vec::with_capacity(len);
    let steps: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..len).rev())
    } else {
        Box::new(0..len)
    };
    for t in steps {
        let gates = projected.narrow(1, t, 1)?.squeeze(1)?.add(&h.matmul(&w_hh_t)?)?;
        let act = candle_nn::ops::sigmoid(&gates)?;
        let i = act.narrow(1, 0, hidden)?;
        let f = act.narrow(1, hidden, hidden)?;
        let g = gates.narrow(1, 2 * hidden, hidden)?.tanh()?;
        let o = act.narrow(1, 3 * hidden, hidden)?;
        let c_new = f.mul(&c)?.add(&i.mul(&g)?)?;
        let h_new = o.mul(&c_new.tanh()?)?;
        let m = mask.narrow(1, t, 1)?.squeeze(1)?;
        c = c.add(&c_new.sub(&c)?.broadcast_mul(&m)?)?;
        h = h.add(&h_new.sub(&h)?.broadcast_mul(&m)?)?;
        outputs.push(h_new.broadcast_mul(&m)?);
    }
    if reverse {
        outputs.reverse();
    }
    Ok((Tensor::stack(&outputs, 1)?, h))
}

/// Bidirectional LSTM: outputs `[B, L, 2H]` and concatenated final states
/// `[B, 2H]` (forward last, backward first).
pub fn bilstm(
    x: &Tensor,
    mask: &Tensor,
    forward: &LstmWeights<'_>,
    backward: &LstmWeights<'_>,
) -> Result<(Tensor, Tensor)> {
    let (out_f, h_f) = lstm_direction(x, mask, forward, false)?;
    let (out_b, h_b) = lstm_direction(x, mask, backward, true)?;
    Ok((Tensor::cat(&[&out_f, &out_b], 2)?, Tensor::cat(&[&h_f, &h_b], 1)?))
}

/// Length-preserving 1-D convolution followed by ReLU. Padded positions are
/// zeroed before and after, so they behave exactly like the implicit zero
/// padding past the sequence end. `x` is `[B, L, C]`, `weight` `[F, C, k]`.
///
/// Built from shifted slices and a matmul: candle's conv1d kernel gradient
/// is wrong for batches larger than one.
pub fn conv1d_relu(x: &Tensor, mask: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (filters, channels, kernel) = weight.dims3()?;
    let len = x.dim(1)?;
    let padded = x.broadcast_mul(mask)?.pad_with_zeros(1, (kernel - 1) / 2, kernel / 2)?;
    let windows = (0..kernel)
        .map(|j| padded.narrow(1, j, len))
        .collect::<candle_core::Result<Vec<_>>>()?;
    let columns = Tensor::cat(&windows, 2)?;
    let w = weight.permute((0, 2, 1))?.reshape((filters, kernel * channels))?;
    let y = linear(&columns, &w, bias)?.relu()?;
    Ok(y.broadcast_mul(mask)?)
}

pub fn masked_max_pool(x: &Tensor, mask: &Tensor) -> Result<Tensor> {
    // push padding far below any activation before taking the max
    let penalty = ((mask.ones_like()? - mask)? * -1e9)?;
    Ok(x.broadcast_add(&penalty)?.max(1)?)
}

pub fn masked_mean_pool(x: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let sum = x.broadcast_mul(mask)?.sum(1)?;
    let count = mask.sum(1)?;
    Ok(sum.broadcast_div(&count)?)
}

pub fn embedding(table: &Tensor, ids: &Tensor) -> Result<Tensor> {
    let hidden = table.dim(1)?;
    Ok(candle_nn::Embedding::new(table.clone(), hidden).forward(ids)?)
}

/// `[B, L]` u32 ids from a flat row-major buffer.
pub fn id_tensor(ids: &[u32], batch: usize, len: usize, device: &Device) -> Result<Tensor> {
    Ok(Tensor::from_slice(ids, (batch, len), device)?)
}

/// `[B, L, 1]` mask in the model dtype.
pub fn mask_tensor(mask: &[u8], batch: usize, len: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let values: Vec<f32> = mask.iter().map(|&m| m as f32).collect();
    Ok(Tensor::from_vec(values, (batch, len, 1), device)?.to_dtype(dtype)?)
}
