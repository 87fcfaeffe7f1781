//! Temporal convolution over the feature dimension of a window.
//!
//! The sliding product is a cross-correlation: the kernel is applied as
//! stored, without flipping, so `c_i = sum_j k_j * x_{i+j}`.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{init_uniform, LayerParams, Padding};
use rand_chacha::ChaCha8Rng;

/// 1-D convolution with optional built-in ReLU.
///
/// Input is [batch, len, in_channels]; output is [batch, out_len, filters]
/// where `out_len` is `len` under same padding and `len - kernel_size + 1`
/// under valid padding.
///
/// Parameters: `kernel` [kernel_size, in_channels, filters], `bias` [filters].
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub filters: usize,
    pub padding: Padding,
    pub relu: bool,
}

/// Intermediates for the backward pass: the input and, when the ReLU is
/// active, the pre-activation needed to gate the upstream gradient.
#[derive(Debug)]
pub struct Conv1dCache {
    input: Tensor,
    pre_activation: Option<Tensor>,
}

impl Conv1d {
    pub fn new(kernel_size: usize, in_channels: usize, filters: usize) -> Result<Self> {
        if kernel_size == 0 || in_channels == 0 || filters == 0 {
            return Err(Error::Config(
                "conv1d dimensions must all be positive".into(),
            ));
        }
        Ok(Self { kernel_size, in_channels, filters, padding: Padding::Same, relu: true })
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_relu(mut self, relu: bool) -> Self {
        self.relu = relu;
        self
    }

    /// Kernel drawn from the fan-in uniform with fan_in = kernel_size *
    /// in_channels; bias starts at zero.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Result<LayerParams> {
        let mut params = LayerParams::new();
        let fan_in = self.kernel_size * self.in_channels;
        params.insert(
            "kernel",
            init_uniform(&[self.kernel_size, self.in_channels, self.filters], fan_in, rng)?,
        )?;
        params.insert("bias", Tensor::zeros(&[self.filters]))?;
        Ok(params)
    }

    /// Left pad under same padding; valid padding shifts nothing.
    fn pad_left(&self) -> usize {
        match self.padding {
            Padding::Valid => 0,
            Padding::Same => (self.kernel_size - 1) / 2,
        }
    }

    fn out_len(&self, len: usize) -> Result<usize> {
        match self.padding {
            Padding::Same => Ok(len),
            Padding::Valid => {
                if len < self.kernel_size {
                    Err(Error::Shape(format!(
                        "valid convolution needs len >= kernel_size, got len {len} and kernel_size {}",
                        self.kernel_size
                    )))
                } else {
                    Ok(len - self.kernel_size + 1)
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor, params: &LayerParams) -> Result<(Tensor, Conv1dCache)> {
        let [batch, len, channels] = x.dims3()?;
        if channels != self.in_channels {
            return Err(Error::Shape(format!(
                "conv1d expects {} input channels, got {channels}",
                self.in_channels
            )));
        }
        let kernel = params.get("kernel")?;
        let bias = params.get("bias")?;
        let k = self.kernel_size;
        let f = self.filters;
        if kernel.shape() != [k, channels, f] {
            return Err(Error::Shape(format!(
                "conv1d kernel shape {:?} does not match layer [{k}, {channels}, {f}]",
                kernel.shape()
            )));
        }
        if bias.shape() != [f] {
            return Err(Error::Shape(format!(
                "conv1d bias shape {:?} does not match [{f}]",
                bias.shape()
            )));
        }

        let out_len = self.out_len(len)?;
        let pad = self.pad_left() as isize;
        let mut z = Tensor::zeros(&[batch, out_len, f]);
        {
            let xd = x.data();
            let kd = kernel.data();
            let bd = bias.data();
            let zd = z.data_mut();
            for b in 0..batch {
                for t in 0..out_len {
                    let zo = (b * out_len + t) * f;
                    zd[zo..zo + f].copy_from_slice(bd);
                    for j in 0..k {
                        // Input position for tap j; out-of-range taps read the
                        // implicit zero padding and contribute nothing.
                        let xi = t as isize + j as isize - pad;
                        if xi < 0 || xi >= len as isize {
                            continue;
                        }
                        let xo = (b * len + xi as usize) * channels;
                        for c in 0..channels {
                            let xv = xd[xo + c];
                            if xv == 0.0 {
                                continue;
                            }
                            let ko = (j * channels + c) * f;
                            for ff in 0..f {
                                zd[zo + ff] += xv * kd[ko + ff];
                            }
                        }
                    }
                }
            }
        }

        let (out, pre) = if self.relu {
            let y = z.map(|v| v.max(0.0));
            (y, Some(z))
        } else {
            (z, None)
        };
        Ok((out, Conv1dCache { input: x.clone(), pre_activation: pre }))
    }

    /// Returns (d_input, parameter gradients).
    pub fn backward(
        &self,
        cache: Conv1dCache,
        params: &LayerParams,
        upstream: &Tensor,
    ) -> Result<(Tensor, LayerParams)> {
        let x = &cache.input;
        let [batch, len, channels] = x.dims3()?;
        let out_len = self.out_len(len)?;
        let k = self.kernel_size;
        let f = self.filters;
        if upstream.shape() != [batch, out_len, f] {
            return Err(Error::Shape(format!(
                "conv1d upstream shape {:?} does not match output [{batch}, {out_len}, {f}]",
                upstream.shape()
            )));
        }
        let kernel = params.get("kernel")?;

        // Gate the upstream gradient through the ReLU. The derivative at
        // exactly zero is taken as zero.
        let dz = match &cache.pre_activation {
            Some(pre) => upstream.zip_map(pre, |g, z| if z > 0.0 { g } else { 0.0 })?,
            None => upstream.clone(),
        };

        let mut dx = Tensor::zeros(&[batch, len, channels]);
        let mut dkernel = Tensor::zeros(&[k, channels, f]);
        let mut dbias = Tensor::zeros(&[f]);
        {
            let xd = x.data();
            let kd = kernel.data();
            let dzd = dz.data();
            let dxd = dx.data_mut();
            let dkd = dkernel.data_mut();
            let dbd = dbias.data_mut();
            let pad = self.pad_left() as isize;
            for b in 0..batch {
                for t in 0..out_len {
                    let zo = (b * out_len + t) * f;
                    for ff in 0..f {
                        dbd[ff] += dzd[zo + ff];
                    }
                    for j in 0..k {
                        let xi = t as isize + j as isize - pad;
                        if xi < 0 || xi >= len as isize {
                            continue;
                        }
                        let xo = (b * len + xi as usize) * channels;
                        for c in 0..channels {
                            let ko = (j * channels + c) * f;
                            let mut acc = 0.0;
                            for ff in 0..f {
                                let g = dzd[zo + ff];
                                acc += g * kd[ko + ff];
                                dkd[ko + ff] += g * xd[xo + c];
                            }
                            dxd[xo + c] += acc;
                        }
                    }
                }
            }
        }

        let mut grads = LayerParams::new();
        grads.insert("kernel", dkernel)?;
        grads.insert("bias", dbias)?;
        Ok((dx, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{numeric_gradient, DEFAULT_FD_STEP};
    use rand::{Rng, SeedableRng};

    fn params_with(kernel: Tensor, bias: Tensor) -> LayerParams {
        let mut p = LayerParams::new();
        p.insert("kernel", kernel).unwrap();
        p.insert("bias", bias).unwrap();
        p
    }

    /// [1,2,3,4] against kernel [1,1] under valid padding: sums of adjacent
    /// pairs, so [3,5,7].
    #[test]
    fn valid_pair_sum_matches_hand_result() {
        let layer = Conv1d::new(2, 1, 1)
            .unwrap()
            .with_padding(Padding::Valid)
            .with_relu(false);
        let x = Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let params = params_with(
            Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap(),
            Tensor::zeros(&[1]),
        );
        let (y, _) = layer.forward(&x, &params).unwrap();
        assert_eq!(y.shape(), [1, 3, 1]);
        assert_eq!(y.data(), &[3.0, 5.0, 7.0]);
    }

    /// Same padding keeps the length; kernel [1,0,-1] centered on each
    /// position sees a zero beyond each end.
    #[test]
    fn same_padding_keeps_length_and_zero_pads() {
        let layer = Conv1d::new(3, 1, 1)
            .unwrap()
            .with_padding(Padding::Same)
            .with_relu(false);
        let x = Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let params = params_with(
            Tensor::new(vec![3, 1, 1], vec![1.0, 0.0, -1.0]).unwrap(),
            Tensor::zeros(&[1]),
        );
        let (y, _) = layer.forward(&x, &params).unwrap();
        assert_eq!(y.shape(), [1, 4, 1]);
        // Window at position 0 is [pad, 1, 2] so 0*1 + 1*0 + 2*(-1) = -2.
        // Window at position 3 is [3, 4, pad] so 3*1 + 4*0 + 0*(-1) = 3.
        assert_eq!(y.data(), &[-2.0, -2.0, -2.0, 3.0]);
    }

    #[test]
    fn relu_clamps_negative_responses() {
        let layer = Conv1d::new(3, 1, 1).unwrap().with_padding(Padding::Same);
        let x = Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let params = params_with(
            Tensor::new(vec![3, 1, 1], vec![1.0, 0.0, -1.0]).unwrap(),
            Tensor::zeros(&[1]),
        );
        let (y, _) = layer.forward(&x, &params).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn bias_shifts_every_position() {
        let layer = Conv1d::new(2, 1, 1)
            .unwrap()
            .with_padding(Padding::Valid)
            .with_relu(false);
        let x = Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let params = params_with(
            Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap(),
            Tensor::from_slice(&[10.0]),
        );
        let (y, _) = layer.forward(&x, &params).unwrap();
        assert_eq!(y.data(), &[13.0, 15.0, 17.0]);
    }

    #[test]
    fn valid_padding_rejects_short_input() {
        let layer = Conv1d::new(5, 1, 1).unwrap().with_padding(Padding::Valid);
        let x = Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let params = layer
            .init_params(&mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!(layer.forward(&x, &params).is_err());
    }

    #[test]
    fn multi_channel_filters_mix_all_inputs() {
        // Two channels, two filters, kernel size 1: a per-position matmul.
        let layer = Conv1d::new(1, 2, 2)
            .unwrap()
            .with_padding(Padding::Valid)
            .with_relu(false);
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // kernel[0, c, f]: channel 0 -> [1, 10], channel 1 -> [100, 1000].
        let params = params_with(
            Tensor::new(vec![1, 2, 2], vec![1.0, 10.0, 100.0, 1000.0]).unwrap(),
            Tensor::zeros(&[2]),
        );
        let (y, _) = layer.forward(&x, &params).unwrap();
        assert_eq!(y.data(), &[201.0, 2010.0, 403.0, 4030.0]);
    }

    /// Analytic gradients against central differences for a mixed
    /// configuration (same padding plus ReLU) on a random problem.
    #[test]
    fn gradients_match_central_differences() {
        let layer = Conv1d::new(3, 2, 4).unwrap().with_padding(Padding::Same);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = layer.init_params(&mut rng).unwrap();
        let x = Tensor::new(vec![2, 5, 2], (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();

        // Scalar objective: sum of squared outputs.
        let loss = |layer: &Conv1d, x: &Tensor, p: &LayerParams| -> crate::Result<f64> {
            let (y, _) = layer.forward(x, p)?;
            Ok(y.data().iter().map(|v| v * v).sum())
        };
        let (y, cache) = layer.forward(&x, &params).unwrap();
        let upstream = y.scale(2.0);
        let (dx, grads) = layer.backward(cache, &params, &upstream).unwrap();

        let num_dx = numeric_gradient(|xt| loss(&layer, xt, &params), &x, DEFAULT_FD_STEP).unwrap();
        for (a, n) in dx.data().iter().zip(num_dx.data()) {
            assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "dx {a} vs {n}");
        }
        for name in ["kernel", "bias"] {
            let num = numeric_gradient(
                |pt| {
                    let mut p = params.clone();
                    p.replace(name, pt.clone())?;
                    loss(&layer, &x, &p)
                },
                params.get(name).unwrap(),
                DEFAULT_FD_STEP,
            )
            .unwrap();
            for (a, n) in grads.get(name).unwrap().data().iter().zip(num.data()) {
                assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "{name} {a} vs {n}");
            }
        }
    }
}