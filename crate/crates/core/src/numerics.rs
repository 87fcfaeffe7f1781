//! Dense tensor substrate and the finite-difference gradient checker.
//!
//! Every layer in this crate works on [`Tensor`]: a row-major, 64-bit dense
//! array. 64-bit floats are deliberate — the gradient checks that gate every
//! backward pass need the precision headroom, and the data volumes here are
//! desk-scale.

use crate::error::{Error, Result};

/// Dense N-dimensional array of `f64`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and row-major data.
    ///
    /// Rejects empty dimensions, length mismatches, and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {expected} elements, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in tensor data".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// 1-D tensor from a slice.
    pub fn from_slice(values: &[f64]) -> Self {
        Self {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) into {shape:?} ({n} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise op on mismatched shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul_elem(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// Sum of all elements.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2(&self) -> Result<Self> {
        let [m, n] = self.dims2()?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data: out,
        })
    }

    pub fn dims2(&self) -> Result<[usize; 2]> {
        match self.shape[..] {
            [m, n] => Ok([m, n]),
            _ => Err(Error::Shape(format!("expected rank 2, got {:?}", self.shape))),
        }
    }

    pub fn dims3(&self) -> Result<[usize; 3]> {
        match self.shape[..] {
            [a, b, c] => Ok([a, b, c]),
            _ => Err(Error::Shape(format!("expected rank 3, got {:?}", self.shape))),
        }
    }

    /// Copies time step `t` of a `[batch, time, d]` tensor into `[batch, d]`.
    pub fn time_slice(&self, t: usize) -> Result<Self> {
        let [b, time, d] = self.dims3()?;
        if t >= time {
            return Err(Error::Shape(format!("time index {t} out of range {time}")));
        }
        let mut out = vec![0.0; b * d];
        for i in 0..b {
            let src = (i * time + t) * d;
            out[i * d..(i + 1) * d].copy_from_slice(&self.data[src..src + d]);
        }
        Tensor::new(vec![b, d], out)
    }

    /// Writes a `[batch, d]` tensor into time step `t` of `self` (`[batch, time, d]`).
    pub fn set_time_slice(&mut self, t: usize, slice: &Tensor) -> Result<()> {
        let [b, time, d] = self.dims3()?;
        let [sb, sd] = slice.dims2()?;
        if sb != b || sd != d || t >= time {
            return Err(Error::Shape(format!(
                "cannot write [{sb}, {sd}] slice at t={t} into {:?}",
                self.shape
            )));
        }
        for i in 0..b {
            let dst = (i * time + t) * d;
            self.data[dst..dst + d].copy_from_slice(&slice.data[i * d..(i + 1) * d]);
        }
        Ok(())
    }
}

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [m, ka] = a.dims2()?;
    let [kb, n] = b.dims2()?;
    if ka != kb {
        return Err(Error::Shape(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    // i-k-j loop order: the inner j loop walks contiguous rows of b and out,
    // which the compiler vectorizes. Accumulation order per output element is
    // fixed (k ascending), keeping results bit-deterministic.
    for i in 0..m {
        let a_row = &a.data[i * ka..(i + 1) * ka];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (k, &a_ik) in a_row.iter().enumerate() {
            let b_row = &b.data[k * n..(k + 1) * n];
            for j in 0..n {
                out_row[j] += a_ik * b_row[j];
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `a * b^T` without materializing the transpose.
pub fn matmul_bt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [m, ka] = a.dims2()?;
    let [n, kb] = b.dims2()?;
    if ka != kb {
        return Err(Error::Shape(format!(
            "matmul_bt inner dimensions differ: {:?} x {:?}^T",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a.data[i * ka..(i + 1) * ka];
        for j in 0..n {
            let b_row = &b.data[j * kb..(j + 1) * kb];
            let mut acc = 0.0;
            for k in 0..ka {
                acc += a_row[k] * b_row[k];
            }
            out[i * n + j] = acc;
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `a^T * b` without materializing the transpose.
pub fn matmul_at(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [ka, m] = a.dims2()?;
    let [kb, n] = b.dims2()?;
    if ka != kb {
        return Err(Error::Shape(format!(
            "matmul_at inner dimensions differ: {:?}^T x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for k in 0..ka {
        let a_row = &a.data[k * m..(k + 1) * m];
        let b_row = &b.data[k * n..(k + 1) * n];
        for i in 0..m {
            let a_ki = a_row[i];
            let out_row = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                out_row[j] += a_ki * b_row[j];
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// Pointwise nonlinearities used by the layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed in terms of the activation *output* `y`.
    /// For ReLU the output is enough because `y > 0` iff the input was.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Applies `relu`, `sigmoid`, or `tanh` elementwise.
pub fn elementwise(x: &Tensor, activation: Activation) -> Tensor {
    x.map(|v| activation.apply(v))
}

/// Softmax over the last axis, with max-subtraction for stability.
///
/// Each last-axis slice of the output is non-negative and sums to 1.
pub fn softmax_last_axis(x: &Tensor) -> Tensor {
    let d = *x.shape.last().expect("softmax on rank-0 tensor");
    let mut out = x.data.clone();
    for slice in out.chunks_mut(d) {
        let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in slice.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in slice.iter_mut() {
            *v /= sum;
        }
    }
    Tensor {
        shape: x.shape.clone(),
        data: out,
    }
}

/// Arithmetic mean over `axis`; the axis is removed from the shape.
pub fn reduce_mean(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::Shape(format!(
            "mean axis {axis} out of range for rank {}",
            x.rank()
        )));
    }
    let outer: usize = x.shape[..axis].iter().product();
    let mid = x.shape[axis];
    let inner: usize = x.shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for m in 0..mid {
            let base = (o * mid + m) * inner;
            for i in 0..inner {
                out[o * inner + i] += x.data[base + i];
            }
        }
    }
    let inv = 1.0 / mid as f64;
    for v in &mut out {
        *v *= inv;
    }
    let mut shape: Vec<usize> = x.shape[..axis].to_vec();
    shape.extend_from_slice(&x.shape[axis + 1..]);
    if shape.is_empty() {
        shape.push(1);
    }
    Ok(Tensor { shape, data: out })
}

/// Default step for [`numeric_gradient`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function at `x`.
///
/// This is the independent oracle every analytic backward pass in the crate
/// is checked against; it only ever calls the forward direction.
pub fn numeric_gradient<F>(f: F, x: &Tensor, step: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if step <= 0.0 {
        return Err(Error::Numeric(format!("step must be positive, got {step}")));
    }
    let mut probe = x.clone();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let original = probe.data[i];
        probe.data[i] = original + step;
        let plus = f(&probe)?;
        probe.data[i] = original - step;
        let minus = f(&probe)?;
        probe.data[i] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite function value while probing element {i}"
            )));
        }
        grad[i] = (plus - minus) / (2.0 * step);
    }
    Ok(Tensor {
        shape: x.shape.clone(),
        data: grad,
    })
}

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Worst relative error per parameter name ("input" for the input gradient).
    pub per_parameter_errors: std::collections::BTreeMap<String, f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn new(tolerance: f64) -> Self {
        Self {
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            per_parameter_errors: Default::default(),
            tolerance,
            passed: true,
        }
    }

    /// Folds one analytic/numeric pair into the report under `name`.
    ///
    /// The relative error divides by `max(|analytic|, |numeric|)`, floored by
    /// `abs_floor / tolerance` so that disagreements below `abs_floor` pass
    /// regardless of magnitude.
    pub fn record(&mut self, name: &str, analytic: &Tensor, numeric: &Tensor, abs_floor: f64) {
        let mut worst = 0.0f64;
        for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
            let abs = (a - n).abs();
            let denom = a.abs().max(n.abs()).max(abs_floor / self.tolerance);
            let rel = abs / denom;
            self.max_abs_error = self.max_abs_error.max(abs);
            worst = worst.max(rel);
        }
        let entry = self.per_parameter_errors.entry(name.to_string()).or_insert(0.0);
        *entry = entry.max(worst);
        self.max_rel_error = self.max_rel_error.max(worst);
        self.passed = self.max_rel_error <= self.tolerance;
    }

    /// Merges another report (e.g. a different random shape of the same layer).
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        for (k, &v) in &other.per_parameter_errors {
            let entry = self.per_parameter_errors.entry(k.clone()).or_insert(0.0);
            *entry = entry.max(v);
        }
        self.passed = self.max_rel_error <= self.tolerance;
    }
}
