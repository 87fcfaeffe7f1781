//! Fully connected output head: `y = x W_y + b_y`.

use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_at, matmul_bt, Tensor};

use super::{init_uniform, LayerParams};
use rand_chacha::ChaCha8Rng;

/// Linear map from [batch, in_dim] to [batch, out_dim].
///
/// Parameters: `W_y` [in_dim, out_dim], `b_y` [out_dim].
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug)]
pub struct DenseCache {
    input: Tensor,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("dense dimensions must be positive".into()));
        }
        Ok(Self { in_dim, out_dim })
    }

    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Result<LayerParams> {
        let mut params = LayerParams::new();
        params.insert("W_y", init_uniform(&[self.in_dim, self.out_dim], self.in_dim, rng)?)?;
        params.insert("b_y", Tensor::zeros(&[self.out_dim]))?;
        Ok(params)
    }

    pub fn forward(&self, x: &Tensor, params: &LayerParams) -> Result<(Tensor, DenseCache)> {
        let [_, d] = x.dims2()?;
        if d != self.in_dim {
            return Err(Error::Shape(format!(
                "dense expects {} input features, got {d}",
                self.in_dim
            )));
        }
        let w = params.get("W_y")?;
        let b = params.get("b_y")?;
        let mut y = matmul(x, w)?;
        {
            let bd = b.data();
            if bd.len() != self.out_dim {
                return Err(Error::Shape(format!(
                    "dense bias shape {:?} does not match [{}]",
                    b.shape(),
                    self.out_dim
                )));
            }
            let yd = y.data_mut();
            for row in yd.chunks_mut(self.out_dim) {
                for (v, bv) in row.iter_mut().zip(bd) {
                    *v += bv;
                }
            }
        }
        Ok((y, DenseCache { input: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: DenseCache,
        params: &LayerParams,
        upstream: &Tensor,
    ) -> Result<(Tensor, LayerParams)> {
        let w = params.get("W_y")?;
        let dx = matmul_bt(upstream, w)?;
        let dw = matmul_at(&cache.input, upstream)?;
        let [rows, cols] = upstream.dims2()?;
        let mut db = Tensor::zeros(&[cols]);
        {
            let ud = upstream.data();
            let dbd = db.data_mut();
            for r in 0..rows {
                for c in 0..cols {
                    dbd[c] += ud[r * cols + c];
                }
            }
        }
        let mut grads = LayerParams::new();
        grads.insert("W_y", dw)?;
        grads.insert("b_y", db)?;
        Ok((dx, grads))
    }
}
