//! Position-wise feed-forward network: `max(0, x W_1 + b_1) W_2 + b_2`
//! applied to every time step independently.

use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_at, matmul_bt, Tensor};

use super::{init_uniform, LayerParams};
use rand_chacha::ChaCha8Rng;

/// Two dense maps with a ReLU between, shared across positions.
///
/// Input and output are [batch, time, d_model]; the hidden width is `d_ff`.
/// Parameters: `W_1` [d_model, d_ff], `b_1` [d_ff], `W_2` [d_ff, d_model],
/// `b_2` [d_model].
#[derive(Debug, Clone)]
pub struct PositionWiseFfn {
    pub d_model: usize,
    pub d_ff: usize,
}

#[derive(Debug)]
pub struct FfnCache {
    /// Input flattened to [batch * time, d_model].
    input_flat: Tensor,
    /// Hidden activations after the ReLU, [batch * time, d_ff].
    hidden: Tensor,
    batch: usize,
    time: usize,
}

impl PositionWiseFfn {
    pub fn new(d_model: usize, d_ff: usize) -> Result<Self> {
        if d_model == 0 || d_ff == 0 {
            return Err(Error::Config("ffn dimensions must be positive".into()));
        }
        Ok(Self { d_model, d_ff })
    }

    /// Weights are drawn in lexicographic name order (`W_1`, then `W_2`);
    /// biases start at zero.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Result<LayerParams> {
        let mut params = LayerParams::new();
        params.insert("W_1", init_uniform(&[self.d_model, self.d_ff], self.d_model, rng)?)?;
        params.insert("W_2", init_uniform(&[self.d_ff, self.d_model], self.d_ff, rng)?)?;
        params.insert("b_1", Tensor::zeros(&[self.d_ff]))?;
        params.insert("b_2", Tensor::zeros(&[self.d_model]))?;
        Ok(params)
    }

    pub fn forward(&self, x: &Tensor, params: &LayerParams) -> Result<(Tensor, FfnCache)> {
        let [batch, time, d] = x.dims3()?;
        if d != self.d_model {
            return Err(Error::Shape(format!(
                "ffn expects d_model {}, got {d}",
                self.d_model
            )));
        }
        let w1 = params.get("W_1")?;
        let b1 = params.get("b_1")?;
        let w2 = params.get("W_2")?;
        let b2 = params.get("b_2")?;
        if w1.shape() != [d, self.d_ff] || w2.shape() != [self.d_ff, d] {
            return Err(Error::Shape("ffn weight shapes do not match layer".into()));
        }

        let flat = x.reshape(&[batch * time, d])?;
        let mut hidden = matmul(&flat, w1)?;
        {
            let bd = b1.data();
            for row in hidden.data_mut().chunks_mut(self.d_ff) {
                for (v, bv) in row.iter_mut().zip(bd) {
                    *v = (*v + bv).max(0.0);
                }
            }
        }
        let mut out = matmul(&hidden, w2)?;
        {
            let bd = b2.data();
            for row in out.data_mut().chunks_mut(d) {
                for (v, bv) in row.iter_mut().zip(bd) {
                    *v += bv;
                }
            }
        }
        let out = out.reshape(&[batch, time, d])?;
        Ok((out, FfnCache { input_flat: flat, hidden, batch, time }))
    }

    pub fn backward(
        &self,
        cache: FfnCache,
        params: &LayerParams,
        upstream: &Tensor,
    ) -> Result<(Tensor, LayerParams)> {
        let d = self.d_model;
        let rows = cache.batch * cache.time;
        if upstream.shape() != [cache.batch, cache.time, d] {
            return Err(Error::Shape(format!(
                "ffn upstream shape {:?} does not match [{}, {}, {d}]",
                upstream.shape(),
                cache.batch,
                cache.time
            )));
        }
        let w1 = params.get("W_1")?;
        let w2 = params.get("W_2")?;
        let du = upstream.reshape(&[rows, d])?;

        let d_w2 = matmul_at(&cache.hidden, &du)?;
        let d_b2 = column_sums(&du)?;
        let mut d_hidden = matmul_bt(&du, w2)?;
        // ReLU gate read off the stored activations; zero stays zero.
        d_hidden = d_hidden.zip_map(&cache.hidden, |g, h| if h > 0.0 { g } else { 0.0 })?;
        let d_w1 = matmul_at(&cache.input_flat, &d_hidden)?;
        let d_b1 = column_sums(&d_hidden)?;
        let dx = matmul_bt(&d_hidden, w1)?.reshape(&[cache.batch, cache.time, d])?;

        let mut grads = LayerParams::new();
        grads.insert("W_1", d_w1)?;
        grads.insert("W_2", d_w2)?;
        grads.insert("b_1", d_b1)?;
        grads.insert("b_2", d_b2)?;
        Ok((dx, grads))
    }
}

fn column_sums(x: &Tensor) -> Result<Tensor> {
    let [rows, cols] = x.dims2()?;
    let mut out = Tensor::zeros(&[cols]);
    {
        let xd = x.data();
        let od = out.data_mut();
        for r in 0..rows {
            for c in 0..cols {
                od[c] += xd[r * cols + c];
            }
        }
    }
    Ok(out)
}
