//! Global average pooling over the time axis.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Collapses [batch, time, d] to [batch, d] by averaging the time steps.
/// The layer has no parameters.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool;

#[derive(Debug)]
pub struct GlobalAvgPoolCache {
    batch: usize,
    time: usize,
    d: usize,
}

impl GlobalAvgPool {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, GlobalAvgPoolCache)> {
        let [batch, time, d] = x.dims3()?;
        let mut out = Tensor::zeros(&[batch, d]);
        {
            let xd = x.data();
            let od = out.data_mut();
            for b in 0..batch {
                for t in 0..time {
                    let row = (b * time + t) * d;
                    for c in 0..d {
                        od[b * d + c] += xd[row + c];
                    }
                }
                for c in 0..d {
                    od[b * d + c] /= time as f64;
                }
            }
        }
        Ok((out, GlobalAvgPoolCache { batch, time, d }))
    }

    /// Each input step receives an equal `1 / time` share of the upstream
    /// gradient.
    pub fn backward(&self, cache: GlobalAvgPoolCache, upstream: &Tensor) -> Result<Tensor> {
        if upstream.shape() != [cache.batch, cache.d] {
            return Err(Error::Shape(format!(
                "pool upstream shape {:?} does not match [{}, {}]",
                upstream.shape(),
                cache.batch,
                cache.d
            )));
        }
        let mut dx = Tensor::zeros(&[cache.batch, cache.time, cache.d]);
        {
            let ud = upstream.data();
            let dd = dx.data_mut();
            let share = 1.0 / cache.time as f64;
            for b in 0..cache.batch {
                for t in 0..cache.time {
                    let row = (b * cache.time + t) * cache.d;
                    for c in 0..cache.d {
                        dd[row + c] = ud[b * cache.d + c] * share;
                    }
                }
            }
        }
        Ok(dx)
    }
}
