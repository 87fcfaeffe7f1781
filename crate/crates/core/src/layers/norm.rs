//! Layer normalization over the last axis.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::LayerParams;

/// Epsilon added to the population variance before the square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes each last-axis slice to zero mean and unit variance, then
/// applies a learned elementwise gain and shift:
///
/// ```text
/// y = gamma * (x - mean) / sqrt(var + eps) + beta
/// ```
///
/// The variance is the population variance (divide by `d`, not `d - 1`).
/// Parameters: `gamma` [d] initialized to one, `beta` [d] initialized to
/// zero.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub d: usize,
}

#[derive(Debug)]
pub struct LayerNormCache {
    /// Normalized values before gain and shift, same shape as the input.
    normalized: Tensor,
    /// 1 / sqrt(var + eps) per slice.
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("layer_norm dimension must be positive".into()));
        }
        Ok(Self { d })
    }

    pub fn init_params(&self) -> Result<LayerParams> {
        let mut params = LayerParams::new();
        params.insert("gamma", Tensor::filled(&[self.d], 1.0))?;
        params.insert("beta", Tensor::zeros(&[self.d]))?;
        Ok(params)
    }

    fn check(&self, x: &Tensor, params: &LayerParams) -> Result<()> {
        let last = *x.shape().last().ok_or_else(|| {
            Error::Shape("layer_norm input must have at least one axis".into())
        })?;
        if last != self.d {
            return Err(Error::Shape(format!(
                "layer_norm expects last axis {}, got {last}",
                self.d
            )));
        }
        for name in ["gamma", "beta"] {
            let p = params.get(name)?;
            if p.shape() != [self.d] {
                return Err(Error::Shape(format!(
                    "layer_norm {name} shape {:?} does not match [{}]",
                    p.shape(),
                    self.d
                )));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor, params: &LayerParams) -> Result<(Tensor, LayerNormCache)> {
        self.check(x, params)?;
        let d = self.d;
        let slices = x.len() / d;
        let gamma = params.get("gamma")?.data();
        let beta = params.get("beta")?.data();

        let mut normalized = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(slices);
        {
            let xd = x.data();
            let nd = normalized.data_mut();
            let od = out.data_mut();
            for s in 0..slices {
                let row = &xd[s * d..(s + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                inv_std.push(inv);
                for c in 0..d {
                    let n = (row[c] - mean) * inv;
                    nd[s * d + c] = n;
                    od[s * d + c] = gamma[c] * n + beta[c];
                }
            }
        }
        Ok((out, LayerNormCache { normalized, inv_std }))
    }

    pub fn backward(
        &self,
        cache: LayerNormCache,
        params: &LayerParams,
        upstream: &Tensor,
    ) -> Result<(Tensor, LayerParams)> {
        let d = self.d;
        if upstream.shape() != cache.normalized.shape() {
            return Err(Error::Shape(format!(
                "layer_norm upstream shape {:?} does not match cached {:?}",
                upstream.shape(),
                cache.normalized.shape()
            )));
        }
        let gamma = params.get("gamma")?.data();
        let slices = upstream.len() / d;

        let mut dx = Tensor::zeros(upstream.shape());
        let mut d_gamma = Tensor::zeros(&[d]);
        let mut d_beta = Tensor::zeros(&[d]);
        {
            let ud = upstream.data();
            let nd = cache.normalized.data();
            let dxd = dx.data_mut();
            let dgd = d_gamma.data_mut();
            let dbd = d_beta.data_mut();
            for s in 0..slices {
                let u = &ud[s * d..(s + 1) * d];
                let n = &nd[s * d..(s + 1) * d];
                let inv = cache.inv_std[s];
                // dxhat = u * gamma; the mean and variance paths subtract its
                // per-slice mean and its projection onto the normalized slice.
                let mut mean_dxhat = 0.0;
                let mut mean_dxhat_n = 0.0;
                for c in 0..d {
                    let dxhat = u[c] * gamma[c];
                    mean_dxhat += dxhat;
                    mean_dxhat_n += dxhat * n[c];
                    dgd[c] += u[c] * n[c];
                    dbd[c] += u[c];
                }
                mean_dxhat /= d as f64;
                mean_dxhat_n /= d as f64;
                for c in 0..d {
                    let dxhat = u[c] * gamma[c];
                    dxd[s * d + c] = inv * (dxhat - mean_dxhat - n[c] * mean_dxhat_n);
                }
            }
        }

        let mut grads = LayerParams::new();
        grads.insert("beta", d_beta)?;
        grads.insert("gamma", d_gamma)?;
        Ok((dx, grads))
    }
}
