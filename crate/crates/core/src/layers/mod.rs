//! Layer building blocks with hand-derived forward and backward passes.
//!
//! Every layer follows the same contract:
//!
//! * `forward` is pure: it reads the input and parameters, returns the output
//!   plus a cache of the intermediates the backward pass needs, and mutates
//!   nothing (dropout draws from an explicit generator, which is the only
//!   stateful input anywhere in the stack).
//! * `backward` consumes the cache by value, so a cache cannot be replayed
//!   against a second upstream gradient by accident. It returns the gradient
//!   with respect to the layer input together with a [`LayerParams`] map of
//!   parameter gradients under the same names as the parameters themselves.
//!
//! Parameters live in [`LayerParams`], an ordered name-to-tensor map. Keeping
//! names stable across forward, backward, optimizer state, and checkpoints is
//! what lets the optimizer and the serializer stay generic over layers.

pub mod attention;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod ffn;
pub mod norm;
pub mod pool;
pub mod recurrent;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Named parameter collection for one layer.
///
/// Iteration order is the lexicographic order of the names, which makes every
/// traversal (optimizer updates, checkpoint serialization, gradient reports)
/// deterministic without further bookkeeping. Parameter gradients reuse this
/// type, keyed by the same names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams {
    map: BTreeMap<String, Tensor>,
}

impl LayerParams {
    pub fn new() -> Self {
        Self { map: BTreeMap::new() }
    }

    /// Inserts a fresh parameter. Names are unique within a layer.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.map.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        self.map.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.map
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    /// Replaces an existing parameter, keeping the name set fixed.
    pub fn replace(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self.get_mut(name)?;
        *slot = value;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Name/tensor pairs in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|k| k.as_str())
    }

    /// Total number of scalar parameters across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    /// Elementwise in-place accumulation, used to merge gradients that arrive
    /// in pieces (for example the two dropout sites inside the encoder block).
    pub fn accumulate(&mut self, other: &LayerParams) -> Result<()> {
        for (name, grad) in other.iter() {
            let slot = self.get_mut(name)?;
            *slot = slot.add(grad)?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a LayerParams {
    type Item = (&'a String, &'a Tensor);
    type IntoIter = std::collections::btree_map::Iter<'a, String, Tensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.map.iter()
    }
}

/// Draws a weight tensor from U[-sqrt(1/fan_in), +sqrt(1/fan_in)].
///
/// Elements are drawn in row-major order so a given seed always produces the
/// same tensor. `fan_in` is the number of input features feeding one output
/// unit, which for a matrix of shape [fan_in, fan_out] is the row count.
pub fn init_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::Config("fan_in must be positive".into()));
    }
    let bound = (1.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Zero padding policy for temporal convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No padding; output length shrinks to `len - kernel + 1`.
    Valid,
    /// Zero padding on both ends so output length equals input length.
    /// Symmetric for odd kernels, one extra trailing zero for even ones.
    Same,
}

impl Padding {
    pub fn as_str(&self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }
}

impl std::str::FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(Error::Config(format!(
                "unknown padding {other:?}, expected \"valid\" or \"same\""
            ))),
        }
    }
}

impl std::fmt::Display for Padding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
