//! Residual CNN speaker embedder.
//!
//! Four stages, each a 5×5 stride-2 convolution followed by three bottleneck
//! residual blocks (1×1, 3×3, 1×1), then mean pooling over time, an affine
//! projection and L2 normalization. At full scale (channels 64/128/256/512 on
//! 64 mel bands) the affine layer maps 2048 → 512 and the network holds
//! 16,850,368 parameters.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::FeatureMatrix;
use crate::autograd::{Graph, Var};
use crate::model::{self, conv_param_count, dense_param_count, ParamCount, ParamSet};
use crate::ops::{self, Padding};
use crate::{Error, Result, Tensor};

/// Unit-norm speaker vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values` to unit length.
    pub fn normalize(values: Vec<f64>) -> Result<Self> {
        let n = ops::norm2(&values);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateVector);
        }
        Ok(Embedding(values.into_iter().map(|v| v / n).collect()))
    }

    /// Wraps values that are already unit length (within 1e-6).
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        let n = ops::norm2(&values);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::contract(format!("embedding norm {n} is not 1")));
        }
        Ok(Embedding(values))
    }

    /// Network output, already normalized by the final layer.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Embedding(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> f64 {
    ops::dot(a.values(), b.values()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerNetSpec {
    pub n_mels: usize,
    pub channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub stage_kernel: (usize, usize),
    pub stage_stride: (usize, usize),
    pub block_kernels: [(usize, usize); 3],
    pub embedding_dim: usize,
    pub affine_in: usize,
}

/// One row of the architecture table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRow {
    pub name: String,
    pub structure: String,
    pub stride: String,
    pub params_each: u64,
    pub repeat: usize,
}

impl LayerRow {
    pub fn total(&self) -> u64 {
        self.params_each * self.repeat as u64
    }
}

impl SpeakerNetSpec {
    pub fn full() -> Self {
        SpeakerNetSpec {
            n_mels: 64,
            channels: vec![64, 128, 256, 512],
            blocks_per_stage: 3,
            stage_kernel: (5, 5),
            stage_stride: (2, 2),
            block_kernels: [(1, 1), (3, 3), (1, 1)],
            embedding_dim: 512,
            affine_in: 2048,
        }
    }

    /// Same topology with every channel count divided by `divisor`.
    pub fn scaled(divisor: usize) -> Self {
        let mut spec = Self::full();
        spec.channels = spec.channels.iter().map(|c| (c / divisor.max(1)).max(1)).collect();
        spec.affine_in = spec.freq_out() * spec.channels[3];
        spec
    }

    /// Desk-scale variant: channels 8/16/32/64.
    pub fn toy() -> Self {
        Self::scaled(8)
    }

    fn freq_out(&self) -> usize {
        self.channels
            .iter()
            .fold(self.n_mels, |f, _| f.div_ceil(self.stage_stride.0.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Spec("channel schedule must be non-empty and positive".into()));
        }
        let (sh, sw) = self.stage_stride;
        let kernels = [self.stage_kernel, self.block_kernels[0], self.block_kernels[1], self.block_kernels[2]];
        if self.n_mels == 0 || sh == 0 || sw == 0 || kernels.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(Error::Spec("mel bands, kernels and strides must be positive".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Spec("embedding dimension must be positive".into()));
        }
        let reached = self.freq_out() * self.channels[self.channels.len() - 1];
        if reached != self.affine_in {
            return Err(Error::Spec(format!(
                "shape chain reaches {reached} features but the affine layer expects {}",
                self.affine_in
            )));
        }
        Ok(())
    }

    /// Fewest input frames accepted by [`SpeakerNet::embed`].
    pub fn min_frames(&self) -> usize {
        self.stage_stride.1.pow(self.channels.len() as u32)
    }

    /// Parameter names and shapes in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c_in = 1;
        for (s, &c) in self.channels.iter().enumerate() {
            let (kh, kw) = self.stage_kernel;
            out.push((format!("stage{s}.conv.weight"), vec![c, c_in, kh, kw]));
            out.push((format!("stage{s}.conv.bias"), vec![c]));
            for b in 0..self.blocks_per_stage {
                for (i, &(kh, kw)) in self.block_kernels.iter().enumerate() {
                    out.push((format!("stage{s}.block{b}.conv{i}.weight"), vec![c, c, kh, kw]));
                    out.push((format!("stage{s}.block{b}.conv{i}.bias"), vec![c]));
                }
            }
            c_in = c;
        }
        out.push(("affine.weight".into(), vec![self.affine_in, self.embedding_dim]));
        out.push(("affine.bias".into(), vec![self.embedding_dim]));
        out
    }

    /// Architecture table rows, parameter counts from the closed forms.
    pub fn layer_table(&self) -> Vec<LayerRow> {
        let mut rows = Vec::new();
        let mut c_in = 1;
        let kdim = |(h, w): (usize, usize)| format!("{h}x{w}");
        for &c in &self.channels {
            rows.push(LayerRow {
                name: format!("Conv{c}"),
                structure: format!("{}, {c}", kdim(self.stage_kernel)),
                stride: kdim(self.stage_stride),
                params_each: conv_param_count(self.stage_kernel.0, self.stage_kernel.1, c_in, c),
                repeat: 1,
            });
            let block: u64 = self.block_kernels.iter().map(|&(h, w)| conv_param_count(h, w, c, c)).sum();
            let structure = self.block_kernels.iter().map(|&k| format!("{}, {c}", kdim(k))).collect::<Vec<_>>();
            rows.push(LayerRow {
                name: format!("Res{c}"),
                structure: format!("[{}] x{}", structure.join("; "), self.blocks_per_stage),
                stride: "1x1".into(),
                params_each: block,
                repeat: self.blocks_per_stage,
            });
            c_in = c;
        }
        rows.push(LayerRow { name: "mean".into(), structure: "-".into(), stride: "-".into(), params_each: 0, repeat: 1 });
        rows.push(LayerRow {
            name: "affine".into(),
            structure: format!("{}x{}", self.affine_in, self.embedding_dim),
            stride: "-".into(),
            params_each: dense_param_count(self.affine_in, self.embedding_dim),
            repeat: 1,
        });
        rows.push(LayerRow { name: "triplet".into(), structure: "-".into(), stride: "-".into(), params_each: 0, repeat: 1 });
        rows
    }

    pub fn total_params(&self) -> u64 {
        self.layer_table().iter().map(LayerRow::total).sum()
    }

    /// Activation shapes for a `frames`-long input, computed without running
    /// the network: input, each stage output, mean pool, flatten, affine.
    pub fn shape_chain(&self, frames: usize) -> Result<Vec<(String, Vec<usize>)>> {
        self.validate()?;
        let mut chain = vec![("input".to_string(), vec![1, self.n_mels, frames])];
        let (mut f, mut t) = (self.n_mels, frames);
        for (s, &c) in self.channels.iter().enumerate() {
            f = ops::conv_out_extent(f, self.stage_kernel.0, self.stage_stride.0, Padding::Same)?.0;
            t = ops::conv_out_extent(t, self.stage_kernel.1, self.stage_stride.1, Padding::Same)?.0;
            chain.push((format!("stage{s}"), vec![c, f, t]));
        }
        let c = self.channels[self.channels.len() - 1];
        chain.push(("mean".into(), vec![c, f]));
        chain.push(("flatten".into(), vec![c * f]));
        chain.push(("affine".into(), vec![self.embedding_dim]));
        Ok(chain)
    }

    pub fn to_manifest(&self) -> String {
        let k = |(h, w): (usize, usize)| format!("{h}x{w}");
        format!(
            "kind=speaker\nn_mels={}\nchannels={}\nblocks={}\nstage_kernel={}\nstage_stride={}\nblock_kernels={},{},{}\nembedding_dim={}\naffine={}x{}\n",
            self.n_mels,
            model::join_usize(&self.channels),
            self.blocks_per_stage,
            k(self.stage_kernel),
            k(self.stage_stride),
            k(self.block_kernels[0]),
            k(self.block_kernels[1]),
            k(self.block_kernels[2]),
            self.embedding_dim,
            self.affine_in,
            self.embedding_dim,
        )
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let fields = parse_manifest(text)?;
        let get = |key: &str| {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Spec(format!("manifest is missing `{key}`")))
        };
        if get("kind")? != "speaker" {
            return Err(Error::Spec("manifest does not describe a speaker model".into()));
        }
        let kernels = parse_list(get("block_kernels")?, parse_pair)?;
        let [k0, k1, k2] = kernels[..] else {
            return Err(Error::Spec("block_kernels needs exactly three entries".into()));
        };
        let (affine_in, affine_out) = parse_pair(get("affine")?)?;
        let spec = SpeakerNetSpec {
            n_mels: parse_num(get("n_mels")?)?,
            channels: parse_list(get("channels")?, parse_num)?,
            blocks_per_stage: parse_num(get("blocks")?)?,
            stage_kernel: parse_pair(get("stage_kernel")?)?,
            stage_stride: parse_pair(get("stage_stride")?)?,
            block_kernels: [k0, k1, k2],
            embedding_dim: parse_num(get("embedding_dim")?)?,
            affine_in,
        };
        if affine_out != spec.embedding_dim {
            return Err(Error::Spec(format!(
                "affine output {affine_out} differs from embedding_dim {}",
                spec.embedding_dim
            )));
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub(crate) fn parse_manifest(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Spec(format!("malformed manifest line `{l}`")))
        })
        .collect()
}

pub(crate) fn parse_num(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Spec(format!("`{s}` is not a non-negative integer")))
}

pub(crate) fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once('x').ok_or_else(|| Error::Spec(format!("`{s}` is not of the form AxB")))?;
    Ok((parse_num(a)?, parse_num(b)?))
}

pub(crate) fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(|p| item(p.trim())).collect()
}

/// Checks that `params` holds exactly the tensors `expected` declares, in order.
pub(crate) fn check_params(expected: &[(String, Vec<usize>)], params: &ParamSet) -> Result<()> {
    if params.len() != expected.len() {
        return Err(Error::Spec(format!(
            "spec declares {} tensors, found {}",
            expected.len(),
            params.len()
        )));
    }
    for ((name, shape), (got_name, t)) in expected.iter().zip(params.iter()) {
        if name != got_name {
            return Err(Error::Spec(format!("expected tensor `{name}`, found `{got_name}`")));
        }
        if shape.as_slice() != t.shape() {
            return Err(Error::Spec(format!(
                "tensor `{name}` declared {shape:?} but stored {:?}",
                t.shape()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerNet {
    spec: SpeakerNetSpec,
    params: ParamSet,
}

impl SpeakerNet {
    /// Fresh network with fan-in scaled uniform weights and zero biases,
    /// drawn from a generator seeded with `seed`.
    pub fn build(spec: SpeakerNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in spec.param_shapes() {
            let t = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let fan_in = if shape.len() == 4 { shape[1] * shape[2] * shape[3] } else { shape[0] };
                model::fan_in_uniform(&mut rng, &shape, fan_in)
            };
            params.push(name, t);
        }
        Ok(SpeakerNet { spec, params })
    }

    /// Wraps externally supplied parameters after checking them against `spec`.
    pub fn from_params(spec: SpeakerNetSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        check_params(&spec.param_shapes(), &params)?;
        Ok(SpeakerNet { spec, params })
    }

    pub fn spec(&self) -> &SpeakerNetSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn manifest(&self) -> String {
        self.spec.to_manifest()
    }

    pub fn fingerprint(&self) -> u64 {
        model::fingerprint(&self.manifest(), &self.params)
    }

    /// Per-layer counts taken from the stored tensors.
    pub fn count_params(&self) -> ParamCount {
        count_by_layer(&self.params)
    }

    /// Records the forward pass of `input` ([1, n_mels, T]) into `g`.
    pub fn forward<'a>(&self, g: &mut Graph<'a>, p: &[Var], input: Var) -> Result<Var> {
        let spec = &self.spec;
        let mut next = p.iter().copied();
        let mut take = || next.next().ok_or_else(|| Error::Spec("parameter list too short".into()));
        let mut h = input;
        for _ in &spec.channels {
            let (w, b) = (take()?, take()?);
            h = g.conv2d(h, w, b, spec.stage_stride, Padding::Same)?;
            h = g.relu(h);
            for _ in 0..spec.blocks_per_stage {
                let mut r = h;
                for i in 0..3 {
                    let (w, b) = (take()?, take()?);
                    r = g.conv2d(r, w, b, (1, 1), Padding::Same)?;
                    if i < 2 {
                        r = g.relu(r);
                    }
                }
                let sum = g.add(h, r)?;
                h = g.relu(sum);
            }
        }
        let pooled = g.mean_over_time(h)?;
        let flat = g.flatten(pooled)?;
        let (w, b) = (take()?, take()?);
        let e = g.dense(flat, w, b)?;
        g.l2_normalize(e)
    }

    fn check_input(&self, features: &FeatureMatrix) -> Result<()> {
        if features.dim() != self.spec.n_mels {
            return Err(Error::shape(format!(
                "features have {} bands, model expects {}",
                features.dim(),
                self.spec.n_mels
            )));
        }
        let min = self.spec.min_frames();
        if features.frames() < min {
            return Err(Error::TooShort { needed: min, got: features.frames() });
        }
        Ok(())
    }

    /// Records the embedding of `features` into `g`, for training.
    pub fn forward_features<'a>(&self, g: &mut Graph<'a>, p: &[Var], features: &FeatureMatrix) -> Result<Var> {
        self.check_input(features)?;
        let x = g.leaf(features.to_tensor(), false);
        self.forward(g, p, x)
    }

    pub fn embed(&self, features: &FeatureMatrix) -> Result<Embedding> {
        let mut g = Graph::new();
        let p = self.params.vars(&mut g, false);
        let out = self.forward_features(&mut g, &p, features)?;
        Ok(Embedding(g.value(out).data().to_vec()))
    }
}

/// Groups `<layer>.weight` / `<layer>.bias` tensors into per-layer totals.
pub(crate) fn count_by_layer(params: &ParamSet) -> ParamCount {
    let mut layers: Vec<(String, u64)> = Vec::new();
    for (name, t) in params.iter() {
        let layer = name.rsplit_once('.').map_or(name, |(l, _)| l);
        match layers.last_mut() {
            Some((l, n)) if l == layer => *n += t.len() as u64,
            _ => layers.push((layer.to_string(), t.len() as u64)),
        }
    }
    ParamCount::from_layers(layers)
}
