//! Inverted dropout.
//!
//! During training each element survives with probability `1 - rate` and the
//! survivors are scaled by `1 / (1 - rate)`, so the expected activation is
//! unchanged and evaluation needs no rescaling. Outside training the layer
//! is the identity and draws nothing from the generator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
}

/// The multiplicative mask applied in the forward pass, or `None` when the
/// layer acted as the identity.
#[derive(Debug)]
pub struct DropoutCache {
    mask: Option<Tensor>,
}

impl DropoutCache {
    pub fn mask(&self) -> Option<&Tensor> {
        self.mask.as_ref()
    }
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    /// Draws one uniform variate per element, in row-major order, whenever
    /// the mask is active. The draw count is therefore a function of the
    /// input size alone, which keeps downstream consumers of the generator
    /// reproducible.
    pub fn forward(
        &self,
        x: &Tensor,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, DropoutCache)> {
        if !training || self.rate == 0.0 {
            return Ok((x.clone(), DropoutCache { mask: None }));
        }
        let keep_scale = 1.0 / (1.0 - self.rate);
        let mask_data: Vec<f64> = (0..x.len())
            .map(|_| {
                if rng.gen::<f64>() < self.rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let mask = Tensor::new(x.shape().to_vec(), mask_data)?;
        let y = x.mul_elem(&mask)?;
        Ok((y, DropoutCache { mask: Some(mask) }))
    }

    pub fn backward(&self, cache: DropoutCache, upstream: &Tensor) -> Result<Tensor> {
        match cache.mask {
            None => Ok(upstream.clone()),
            Some(mask) => upstream.mul_elem(&mask),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rate_must_be_a_probability_below_one() {
        assert!(Dropout::new(-0.1).is_err());
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(0.0).is_ok());
        assert!(Dropout::new(0.999).is_ok());
    }

    #[test]
    fn identity_outside_training() {
        let layer = Dropout::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::from_slice(&[1.0, -2.0, 3.0]);
        let (y, cache) = layer.forward(&x, false, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(cache.mask().is_none());
        // The generator was not consumed.
        assert_eq!(rng, ChaCha8Rng::seed_from_u64(0));
    }

    #[test]
    fn zero_rate_is_identity_even_in_training() {
        let layer = Dropout::new(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::from_slice(&[1.0, -2.0, 3.0]);
        let (y, cache) = layer.forward(&x, true, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(cache.mask().is_none());
    }

    #[test]
    fn survivors_are_scaled_and_the_rest_zeroed() {
        let layer = Dropout::new(0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::filled(&[1000], 2.0);
        let (y, cache) = layer.forward(&x, true, &mut rng).unwrap();
        let scaled = 2.0 / 0.75;
        let mut dropped = 0;
        for v in y.data() {
            if *v == 0.0 {
                dropped += 1;
            } else {
                assert!((*v - scaled).abs() < 1e-15);
            }
        }
        // About a quarter of 1000 elements; generous bounds avoid flaking.
        assert!((150..=350).contains(&dropped), "dropped {dropped}");
        assert!(cache.mask().is_some());
    }

    #[test]
    fn same_seed_reproduces_the_mask() {
        let layer = Dropout::new(0.5).unwrap();
        let x = Tensor::filled(&[64], 1.0);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let (y1, _) = layer.forward(&x, true, &mut r1).unwrap();
        let (y2, _) = layer.forward(&x, true, &mut r2).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn backward_gates_exactly_the_forward_mask() {
        let layer = Dropout::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::filled(&[32], 1.0);
        let (y, cache) = layer.forward(&x, true, &mut rng).unwrap();
        let upstream = Tensor::filled(&[32], 1.0);
        let dx = layer.backward(cache, &upstream).unwrap();
        // dy/dx is the mask itself, so dx matches y for an all-ones input.
        assert_eq!(dx, y);
    }
}
