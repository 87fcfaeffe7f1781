//! Multi-head scaled dot-product self-attention.
//!
//! For each sequence the layer projects the input into queries, keys, and
//! values, computes `softmax(Q K^T / sqrt(d_k)) V` independently per head,
//! concatenates the head outputs, and applies an output projection. All four
//! projections are square, bias-free maps on the model dimension; heads are
//! contiguous column blocks of width `d_model / heads`.

use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_at, matmul_bt, softmax_last_axis, Tensor};

use super::{init_uniform, LayerParams};
use rand_chacha::ChaCha8Rng;

/// Self-attention over [batch, time, d_model].
///
/// Parameters: `W_q`, `W_k`, `W_v`, `W_o`, all [d_model, d_model].
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub d_model: usize,
    pub heads: usize,
}

/// Per-sequence intermediates, indexed [batch] and [batch][head].
#[derive(Debug)]
pub struct AttentionCache {
    inputs: Vec<Tensor>,
    queries: Vec<Tensor>,
    keys: Vec<Tensor>,
    values: Vec<Tensor>,
    concat: Vec<Tensor>,
    attn: Vec<Vec<Tensor>>,
    batch: usize,
    time: usize,
}

/// Copies batch item `b` of [batch, time, d] out as [time, d].
fn batch_item(x: &Tensor, b: usize) -> Result<Tensor> {
    let [_, time, d] = x.dims3()?;
    let start = b * time * d;
    Tensor::new(vec![time, d], x.data()[start..start + time * d].to_vec())
}

/// Copies columns [start, start + width) of a matrix.
fn cols_block(x: &Tensor, start: usize, width: usize) -> Result<Tensor> {
    let [rows, cols] = x.dims2()?;
    let mut out = Tensor::zeros(&[rows, width]);
    {
        let xd = x.data();
        let od = out.data_mut();
        for r in 0..rows {
            od[r * width..(r + 1) * width]
                .copy_from_slice(&xd[r * cols + start..r * cols + start + width]);
        }
    }
    Ok(out)
}

/// Adds `src` into columns [start, start + src_cols) of `dst`.
fn add_cols_block(dst: &mut Tensor, start: usize, src: &Tensor) -> Result<()> {
    let [rows, cols] = dst.dims2()?;
    let [sr, sc] = src.dims2()?;
    if sr != rows || start + sc > cols {
        return Err(Error::Shape("column block does not fit destination".into()));
    }
    let sd = src.data();
    let dd = dst.data_mut();
    for r in 0..rows {
        for c in 0..sc {
            dd[r * cols + start + c] += sd[r * sc + c];
        }
    }
    Ok(())
}

impl MultiHeadAttention {
    pub fn new(d_model: usize, heads: usize) -> Result<Self> {
        if d_model == 0 || heads == 0 {
            return Err(Error::Config("attention dimensions must be positive".into()));
        }
        if d_model % heads != 0 {
            return Err(Error::Config(format!(
                "d_model {d_model} is not divisible by {heads} heads"
            )));
        }
        Ok(Self { d_model, heads })
    }

    fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Weights are drawn in lexicographic name order (`W_k`, `W_o`, `W_q`,
    /// `W_v`), each with fan_in = d_model.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Result<LayerParams> {
        let d = self.d_model;
        let mut params = LayerParams::new();
        for name in ["W_k", "W_o", "W_q", "W_v"] {
            params.insert(name, init_uniform(&[d, d], d, rng)?)?;
        }
        Ok(params)
    }

    fn check_weights(&self, params: &LayerParams) -> Result<()> {
        let d = self.d_model;
        for name in ["W_q", "W_k", "W_v", "W_o"] {
            let w = params.get(name)?;
            if w.shape() != [d, d] {
                return Err(Error::Shape(format!(
                    "attention weight {name} shape {:?} does not match [{d}, {d}]",
                    w.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor, params: &LayerParams) -> Result<(Tensor, AttentionCache)> {
        let [batch, time, d] = x.dims3()?;
        if d != self.d_model {
            return Err(Error::Shape(format!(
                "attention expects d_model {}, got {d}",
                self.d_model
            )));
        }
        self.check_weights(params)?;
        let w_q = params.get("W_q")?;
        let w_k = params.get("W_k")?;
        let w_v = params.get("W_v")?;
        let w_o = params.get("W_o")?;
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();

        let mut out = Tensor::zeros(&[batch, time, d]);
        let mut cache = AttentionCache {
            inputs: Vec::with_capacity(batch),
            queries: Vec::with_capacity(batch),
            keys: Vec::with_capacity(batch),
            values: Vec::with_capacity(batch),
            concat: Vec::with_capacity(batch),
            attn: Vec::with_capacity(batch),
            batch,
            time,
        };

        for b in 0..batch {
            let xb = batch_item(x, b)?;
            let q = matmul(&xb, w_q)?;
            let k = matmul(&xb, w_k)?;
            let v = matmul(&xb, w_v)?;
            let mut concat = Tensor::zeros(&[time, d]);
            let mut attn_b = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = cols_block(&q, h * dk, dk)?;
                let kh = cols_block(&k, h * dk, dk)?;
                let vh = cols_block(&v, h * dk, dk)?;
                let scores = matmul_bt(&qh, &kh)?.scale(scale);
                let attn = softmax_last_axis(&scores);
                let oh = matmul(&attn, &vh)?;
                add_cols_block(&mut concat, h * dk, &oh)?;
                attn_b.push(attn);
            }
            let yb = matmul(&concat, w_o)?;
            {
                let yd = yb.data();
                let od = out.data_mut();
                od[b * time * d..(b + 1) * time * d].copy_from_slice(yd);
            }
            cache.inputs.push(xb);
            cache.queries.push(q);
            cache.keys.push(k);
            cache.values.push(v);
            cache.concat.push(concat);
            cache.attn.push(attn_b);
        }
        Ok((out, cache))
    }

    pub fn backward(
        &self,
        cache: AttentionCache,
        params: &LayerParams,
        upstream: &Tensor,
    ) -> Result<(Tensor, LayerParams)> {
        let batch = cache.batch;
        let time = cache.time;
        let d = self.d_model;
        if upstream.shape() != [batch, time, d] {
            return Err(Error::Shape(format!(
                "attention upstream shape {:?} does not match [{batch}, {time}, {d}]",
                upstream.shape()
            )));
        }
        self.check_weights(params)?;
        let w_q = params.get("W_q")?;
        let w_k = params.get("W_k")?;
        let w_v = params.get("W_v")?;
        let w_o = params.get("W_o")?;
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();

        let mut dx = Tensor::zeros(&[batch, time, d]);
        let mut d_wq = Tensor::zeros(&[d, d]);
        let mut d_wk = Tensor::zeros(&[d, d]);
        let mut d_wv = Tensor::zeros(&[d, d]);
        let mut d_wo = Tensor::zeros(&[d, d]);

        for b in 0..batch {
            let dyb = batch_item(upstream, b)?;
            let d_concat = matmul_bt(&dyb, w_o)?;
            d_wo = d_wo.add(&matmul_at(&cache.concat[b], &dyb)?)?;

            let mut dq = Tensor::zeros(&[time, d]);
            let mut dkt = Tensor::zeros(&[time, d]);
            let mut dv = Tensor::zeros(&[time, d]);
            for h in 0..self.heads {
                let attn = &cache.attn[b][h];
                let vh = cols_block(&cache.values[b], h * dk, dk)?;
                let qh = cols_block(&cache.queries[b], h * dk, dk)?;
                let kh = cols_block(&cache.keys[b], h * dk, dk)?;
                let doh = cols_block(&d_concat, h * dk, dk)?;
                let d_attn = matmul_bt(&doh, &vh)?;
                let d_vh = matmul_at(attn, &doh)?;

                // Softmax backward per row: a * (g - <g, a>).
                let mut d_scores = Tensor::zeros(&[time, time]);
                {
                    let ad = attn.data();
                    let gd = d_attn.data();
                    let sd = d_scores.data_mut();
                    for r in 0..time {
                        let row = r * time;
                        let dot: f64 = (0..time).map(|c| gd[row + c] * ad[row + c]).sum();
                        for c in 0..time {
                            sd[row + c] = ad[row + c] * (gd[row + c] - dot);
                        }
                    }
                }
                let d_qh = matmul(&d_scores, &kh)?.scale(scale);
                let d_kh = matmul_at(&d_scores, &qh)?.scale(scale);
                add_cols_block(&mut dq, h * dk, &d_qh)?;
                add_cols_block(&mut dkt, h * dk, &d_kh)?;
                add_cols_block(&mut dv, h * dk, &d_vh)?;
            }

            let xb = &cache.inputs[b];
            d_wq = d_wq.add(&matmul_at(xb, &dq)?)?;
            d_wk = d_wk.add(&matmul_at(xb, &dkt)?)?;
            d_wv = d_wv.add(&matmul_at(xb, &dv)?)?;
            let mut dxb = matmul_bt(&dq, w_q)?;
            dxb = dxb.add(&matmul_bt(&dkt, w_k)?)?;
            dxb = dxb.add(&matmul_bt(&dv, w_v)?)?;
            {
                let sd = dxb.data();
                let dd = dx.data_mut();
                dd[b * time * d..(b + 1) * time * d].copy_from_slice(sd);
            }
        }

        let mut grads = LayerParams::new();
        grads.insert("W_k", d_wk)?;
        grads.insert("W_o", d_wo)?;
        grads.insert("W_q", d_wq)?;
        grads.insert("W_v", d_wv)?;
        Ok((dx, grads))
    }
}
