//! Named parameter storage shared by both networks.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crc::{Crc, CRC_64_XZ};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::math;
use crate::Tensor;

pub(crate) const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// Ordered list of named parameter tensors. The order is fixed by the model
/// spec and is the order used by optimizers and the container format.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push((name.into(), tensor));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> u64 {
        self.entries.iter().map(|(_, t)| t.len() as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Registers every parameter as a borrowed leaf of `g`.
    pub fn vars<'a>(&'a self, g: &mut Graph<'a>, requires_grad: bool) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| g.param(t, requires_grad)).collect()
    }
}

/// Per-layer parameter tally in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub layers: Vec<(String, u64)>,
    pub total: u64,
}

impl ParamCount {
    pub fn from_layers(layers: Vec<(String, u64)>) -> Self {
        let total = layers.iter().map(|(_, n)| n).sum();
        ParamCount { layers, total }
    }

    pub fn layer(&self, name: &str) -> Option<u64> {
        self.layers.iter().find(|(n, _)| n == name).map(|(_, c)| *c)
    }
}

/// `(k_h·k_w·C_in + 1)·C_out`.
pub fn conv_param_count(kh: usize, kw: usize, c_in: usize, c_out: usize) -> u64 {
    ((kh * kw * c_in + 1) * c_out) as u64
}

/// `(n + 1)·m`.
pub fn dense_param_count(n: usize, m: usize) -> u64 {
    ((n + 1) * m) as u64
}

/// Stable 64-bit identity of a model: CRC-64 over its manifest and every
/// parameter's name, shape and little-endian bits.
pub fn fingerprint(manifest: &str, params: &ParamSet) -> u64 {
    let mut digest = CRC64.digest();
    digest.update(manifest.as_bytes());
    for (name, t) in params.iter() {
        digest.update(name.as_bytes());
        digest.update(&[0]);
        for &d in t.shape() {
            digest.update(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            digest.update(&v.to_le_bytes());
        }
    }
    digest.finalize()
}

/// Uniform in `±sqrt(6 / fan_in)`.
pub(crate) fn fan_in_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = math::sqrt(6.0 / fan_in as f64);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("positive extents")
}

pub(crate) fn join_usize(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
