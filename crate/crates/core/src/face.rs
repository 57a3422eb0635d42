//! Face images, augmentation and the VGG-16 style classifier.
//!
//! Inputs are assumed to be pre-cropped faces. The trunk is the 13-conv /
//! 5-maxpool VGG-16 layout; the head is flatten → dense → ReLU → dense →
//! softmax over a small closed identity set.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::math;
use crate::model::{self, ParamCount, ParamSet};
use crate::ops::{self, Padding};
use crate::speaker::{check_params, count_by_layer, parse_list, parse_manifest, parse_num};
use crate::{Error, Result, Tensor};

/// H×W×C image (channels interleaved), C ∈ {1, 3}, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
    pub source_id: String,
}

impl Image {
    /// Values outside `[0, 1]` are clamped.
    pub fn new(height: usize, width: usize, channels: usize, mut pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("image extents must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::shape(format!("images have 1 or 3 channels, got {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{height}×{width}×{channels} image needs {} values, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        for p in &mut pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
        Ok(Image { height, width, channels, pixels, source_id: String::new() })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let pixels = (0..height * width).flat_map(|_| rgb).collect();
        Image::new(height, width, 3, pixels).expect("valid extents")
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Grayscale replicated to three channels; RGB unchanged.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        Image { pixels, channels: 3, ..self.clone() }
    }

    /// Channel-major `[3, H, W]` network input.
    pub fn to_tensor(&self) -> Tensor {
        let rgb = self.to_rgb();
        let (h, w) = (self.height, self.width);
        let mut out = vec![0.0; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out[(c * h + y) * w + x] = rgb.at(y, x, c);
                }
            }
        }
        Tensor::new(&[3, h, w], out).expect("positive extents")
    }

    /// Bilinear sample with edge clamping at fractional coordinates.
    fn sample(&self, y: f64, x: f64, c: usize) -> f64 {
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let (y0, x0) = (math::floor(y) as usize, math::floor(x) as usize);
        let (y1, x1) = ((y0 + 1).min(self.height - 1), (x0 + 1).min(self.width - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let top = self.at(y0, x0, c) * (1.0 - fx) + self.at(y0, x1, c) * fx;
        let bottom = self.at(y1, x0, c) * (1.0 - fx) + self.at(y1, x1, c) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Sub-image `[y, y + h) × [x, x + w)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Image> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::shape(format!(
                "crop {w}×{h}+{x}+{y} outside {}×{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w * h * self.channels);
        for row in y..y + h {
            let start = (row * self.width + x) * self.channels;
            pixels.extend_from_slice(&self.pixels[start..start + w * self.channels]);
        }
        Ok(Image { height: h, width: w, channels: self.channels, pixels, source_id: self.source_id.clone() })
    }
}

/// Bilinear resize using pixel-center alignment.
pub fn resize(img: &Image, height: usize, width: usize) -> Image {
    assert!(height > 0 && width > 0, "resize target must be positive");
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let mut out = Image {
        height,
        width,
        channels: img.channels,
        pixels: vec![0.0; height * width * img.channels],
        source_id: img.source_id.clone(),
    };
    for y in 0..height {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            for c in 0..img.channels {
                out.set(y, x, c, img.sample(src_y, src_x, c).clamp(0.0, 1.0));
            }
        }
    }
    out
}

pub fn hflip(img: &Image) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                out.set(y, x, c, img.at(y, img.width - 1 - x, c));
            }
        }
    }
    out
}

/// Rotation about the image center, edge pixels extended.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (s, c) = (math::sin(degrees * PI / 180.0), math::cos(degrees * PI / 180.0));
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let src_x = c * dx + s * dy + cx;
            let src_y = -s * dx + c * dy + cy;
            for ch in 0..img.channels {
                out.set(y, x, ch, img.sample(src_y, src_x, ch));
            }
        }
    }
    out
}

/// Multiplies every value by `factor`, clamping to `[0, 1]`.
pub fn brighten(img: &Image, factor: f64) -> Image {
    let pixels = img.pixels.iter().map(|v| (v * factor).clamp(0.0, 1.0)).collect();
    Image { pixels, ..img.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Augmented variants produced per source image.
    pub multiplicity: usize,
    pub max_rotation_deg: f64,
    /// Brightness factor drawn from `1 ± max_brightness`.
    pub max_brightness: f64,
    pub flip_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { multiplicity: 4, max_rotation_deg: 15.0, max_brightness: 0.2, flip_probability: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub rotation_deg: f64,
    pub brightness: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams { flip: false, rotation_deg: 0.0, brightness: 1.0 };

    fn draw(rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> Self {
        let flip = rng.random::<f64>() < cfg.flip_probability;
        let rotation_deg = if cfg.max_rotation_deg > 0.0 {
            rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg)
        } else {
            0.0
        };
        let brightness = if cfg.max_brightness > 0.0 {
            rng.random_range(1.0 - cfg.max_brightness..=1.0 + cfg.max_brightness)
        } else {
            1.0
        };
        AugmentParams { flip, rotation_deg, brightness }
    }
}

pub fn apply_augmentation(img: &Image, p: &AugmentParams) -> Image {
    let mut out = if p.flip { hflip(img) } else { img.clone() };
    if p.rotation_deg != 0.0 {
        out = rotate(&out, p.rotation_deg);
    }
    if p.brightness != 1.0 {
        out = brighten(&out, p.brightness);
    }
    out
}

/// `cfg.multiplicity` randomized variants of `img`, deterministic in `seed`.
pub fn augment(img: &Image, cfg: &AugmentConfig, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.multiplicity)
        .map(|k| {
            let p = AugmentParams::draw(&mut rng, cfg);
            apply_augmentation(img, &p).with_source(format!("{}#aug{k}", img.source_id))
        })
        .collect()
}

/// Originals followed by their augmentations: `n·(m + 1)` entries.
pub fn expand_dataset<L: Clone>(items: &[(Image, L)], cfg: &AugmentConfig, seed: u64) -> Vec<(Image, L)> {
    let mut out = Vec::with_capacity(items.len() * (cfg.multiplicity + 1));
    for (i, (img, label)) in items.iter().enumerate() {
        out.push((img.clone(), label.clone()));
        let item_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
        out.extend(augment(img, cfg, item_seed).into_iter().map(|a| (a, label.clone())));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceScale {
    /// VGG-16 channel widths on 224×224 inputs.
    Full,
    /// Channels divided by 8 on 56×56 inputs.
    Toy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceNetSpec {
    pub input_hw: (usize, usize),
    pub channels: Vec<usize>,
    pub convs_per_block: Vec<usize>,
    pub head_hidden: usize,
    pub num_classes: usize,
}

impl FaceNetSpec {
    pub fn new(num_classes: usize, scale: FaceScale) -> Self {
        let full = FaceNetSpec {
            input_hw: (224, 224),
            channels: vec![64, 128, 256, 512, 512],
            convs_per_block: vec![2, 2, 3, 3, 3],
            head_hidden: 512,
            num_classes,
        };
        match scale {
            FaceScale::Full => full,
            FaceScale::Toy => FaceNetSpec {
                input_hw: (56, 56),
                channels: full.channels.iter().map(|c| c / 8).collect(),
                head_hidden: full.head_hidden / 8,
                ..full
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Spec(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.channels.is_empty()
            || self.channels.len() != self.convs_per_block.len()
            || self.channels.contains(&0)
            || self.convs_per_block.contains(&0)
            || self.head_hidden == 0
        {
            return Err(Error::Spec("malformed VGG block layout".into()));
        }
        self.trunk_chain().map(|_| ())
    }

    /// Output shape of each pooled block, ending with the pre-head activation.
    pub fn trunk_chain(&self) -> Result<Vec<[usize; 3]>> {
        let (mut h, mut w) = self.input_hw;
        let mut chain = Vec::new();
        for &c in &self.channels {
            if h < 2 || w < 2 {
                return Err(Error::Spec(format!("input {:?} too small for the pooling chain", self.input_hw)));
            }
            h /= 2;
            w /= 2;
            chain.push([c, h, w]);
        }
        Ok(chain)
    }

    pub fn flat_features(&self) -> Result<usize> {
        let last = *self.trunk_chain()?.last().ok_or_else(|| Error::Spec("empty trunk".into()))?;
        Ok(last.iter().product())
    }

    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut out = Vec::new();
        let mut c_in = 3;
        for (b, (&c, &n)) in self.channels.iter().zip(&self.convs_per_block).enumerate() {
            for i in 0..n {
                out.push((format!("block{b}.conv{i}.weight"), vec![c, c_in, 3, 3]));
                out.push((format!("block{b}.conv{i}.bias"), vec![c]));
                c_in = c;
            }
        }
        let flat = self.flat_features()?;
        out.push(("head.fc1.weight".into(), vec![flat, self.head_hidden]));
        out.push(("head.fc1.bias".into(), vec![self.head_hidden]));
        out.push(("head.fc2.weight".into(), vec![self.head_hidden, self.num_classes]));
        out.push(("head.fc2.bias".into(), vec![self.num_classes]));
        Ok(out)
    }
}

/// Top-1 face identification result.
#[derive(Debug, Clone, PartialEq)]
pub struct FacePrediction {
    pub label: usize,
    pub confidence: f64,
    pub probs: Vec<f64>,
}

impl FacePrediction {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let (label, confidence) = probs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
        FacePrediction { label, confidence, probs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceNet {
    spec: FaceNetSpec,
    params: ParamSet,
    labels: Vec<String>,
}

impl FaceNet {
    pub fn build(spec: FaceNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in spec.param_shapes()? {
            let t = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let fan_in = if shape.len() == 4 { shape[1] * shape[2] * shape[3] } else { shape[0] };
                model::fan_in_uniform(&mut rng, &shape, fan_in)
            };
            params.push(name, t);
        }
        let labels = (0..spec.num_classes).map(|k| k.to_string()).collect();
        Ok(FaceNet { spec, params, labels })
    }

    pub fn from_params(spec: FaceNetSpec, params: ParamSet, labels: Vec<String>) -> Result<Self> {
        spec.validate()?;
        check_params(&spec.param_shapes()?, &params)?;
        let net = FaceNet { spec, params, labels: Vec::new() };
        net.with_labels(labels)
    }

    /// Attaches display names for the classes (one per class, no commas or
    /// line breaks).
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.spec.num_classes {
            return Err(Error::Spec(format!(
                "{} labels for {} classes",
                labels.len(),
                self.spec.num_classes
            )));
        }
        if labels.iter().any(|l| l.is_empty() || l.contains([',', '\n', '\r', '='])) {
            return Err(Error::Spec("class labels must be non-empty without `,`, `=` or newlines".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn spec(&self) -> &FaceNetSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn count_params(&self) -> ParamCount {
        count_by_layer(&self.params)
    }

    pub fn manifest(&self) -> String {
        let s = &self.spec;
        format!(
            "kind=face\ninput=3x{}x{}\nchannels={}\nconvs={}\nhead_hidden={}\nclasses={}\nlabels={}\n",
            s.input_hw.0,
            s.input_hw.1,
            model::join_usize(&s.channels),
            model::join_usize(&s.convs_per_block),
            s.head_hidden,
            s.num_classes,
            self.labels.join(","),
        )
    }

    /// Parses a manifest into a `FaceNetSpec` and class labels.
    pub fn parse_manifest(text: &str) -> Result<(FaceNetSpec, Vec<String>)> {
        let fields = parse_manifest(text)?;
        let get = |key: &str| {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Spec(format!("manifest is missing `{key}`")))
        };
        if get("kind")? != "face" {
            return Err(Error::Spec("manifest does not describe a face model".into()));
        }
        let input = parse_list(get("input")?.replace('x', ",").as_str(), parse_num)?;
        let [3, h, w] = input[..] else {
            return Err(Error::Spec(format!("face input must be 3xHxW, got {}", get("input")?)));
        };
        let spec = FaceNetSpec {
            input_hw: (h, w),
            channels: parse_list(get("channels")?, parse_num)?,
            convs_per_block: parse_list(get("convs")?, parse_num)?,
            head_hidden: parse_num(get("head_hidden")?)?,
            num_classes: parse_num(get("classes")?)?,
        };
        spec.validate()?;
        let labels = get("labels")?.split(',').map(|l| l.to_string()).collect();
        Ok((spec, labels))
    }

    pub fn fingerprint(&self) -> u64 {
        model::fingerprint(&self.manifest(), &self.params)
    }

    /// Records the forward pass of `input` ([3, H, W]) and returns the logits.
    pub fn forward<'a>(&self, g: &mut Graph<'a>, p: &[Var], input: Var) -> Result<Var> {
        let mut next = p.iter().copied();
        let mut take = || next.next().ok_or_else(|| Error::Spec("parameter list too short".into()));
        let mut h = input;
        for &n in &self.spec.convs_per_block {
            for _ in 0..n {
                let (w, b) = (take()?, take()?);
                h = g.conv2d(h, w, b, (1, 1), Padding::Same)?;
                h = g.relu(h);
            }
            h = g.maxpool2d(h, 2)?;
        }
        let flat = g.flatten(h)?;
        let (w1, b1) = (take()?, take()?);
        let hidden = g.dense(flat, w1, b1)?;
        let hidden = g.relu(hidden);
        let (w2, b2) = (take()?, take()?);
        g.dense(hidden, w2, b2)
    }

    pub fn check_image(&self, img: &Image) -> Result<()> {
        if (img.height(), img.width()) != self.spec.input_hw {
            return Err(Error::shape(format!(
                "image is {}×{}, model expects {}×{}",
                img.height(),
                img.width(),
                self.spec.input_hw.0,
                self.spec.input_hw.1
            )));
        }
        Ok(())
    }

    pub fn logits(&self, img: &Image) -> Result<Vec<f64>> {
        self.check_image(img)?;
        let mut g = Graph::new();
        let p = self.params.vars(&mut g, false);
        let x = g.leaf(img.to_tensor(), false);
        let out = self.forward(&mut g, &p, x)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn classify(&self, img: &Image) -> Result<FacePrediction> {
        Ok(FacePrediction::from_probs(ops::softmax(&self.logits(img)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard() -> Image {
        Image::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn resize_checkerboard_center_is_corner_mean() {
        let out = resize(&checkerboard(), 3, 3);
        assert!((out.at(1, 1, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = Image::new(3, 4, 3, (0..36).map(|i| i as f64 / 36.0).collect()).unwrap();
        let same = resize(&img, 3, 4);
        for (a, b) in same.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-9);
        }
        let flat = resize(&Image::filled(5, 9, [0.2, 0.4, 0.6]), 224, 224);
        assert_eq!((flat.height(), flat.width()), (224, 224));
        for y in [0, 100, 223] {
            assert!((flat.at(y, 17, 1) - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn image_clamps_values() {
        let img = Image::new(1, 2, 1, vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
        assert!(Image::new(1, 1, 2, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn flip_is_an_involution() {
        let img = Image::new(2, 3, 3, (0..18).map(|i| i as f64 / 18.0).collect()).unwrap();
        assert_ne!(hflip(&img), img);
        assert_eq!(hflip(&hflip(&img)), img);
    }

    #[test]
    fn identity_augmentation_returns_original() {
        let img = Image::new(4, 5, 3, (0..60).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        assert_eq!(apply_augmentation(&img, &AugmentParams::IDENTITY), img);
        assert_eq!(rotate(&img, 0.0), img);
    }

    #[test]
    fn augmentation_is_seeded() {
        let img = Image::new(8, 8, 3, (0..192).map(|i| (i % 13) as f64 / 13.0).collect()).unwrap();
        let cfg = AugmentConfig::default();
        assert_eq!(augment(&img, &cfg, 3), augment(&img, &cfg, 3));
        assert_ne!(augment(&img, &cfg, 3), augment(&img, &cfg, 4));
        assert_eq!(augment(&img, &cfg, 3).len(), cfg.multiplicity);
    }

    #[test]
    fn dataset_expansion_count() {
        let img = Image::filled(4, 4, [0.5, 0.5, 0.5]);
        let items: Vec<(Image, usize)> = (0..7).map(|k| (img.clone(), k)).collect();
        let cfg = AugmentConfig { multiplicity: 3, ..Default::default() };
        let out = expand_dataset(&items, &cfg, 1);
        assert_eq!(out.len(), 7 * 4);
        assert_eq!(out[4].1, 1);
    }

    #[test]
    fn full_trunk_chain_halves_to_seven() {
        let spec = FaceNetSpec::new(5, FaceScale::Full);
        let chain = spec.trunk_chain().unwrap();
        let extents: Vec<usize> = chain.iter().map(|s| s[1]).collect();
        assert_eq!(extents, vec![112, 56, 28, 14, 7]);
        assert_eq!(*chain.last().unwrap(), [512, 7, 7]);
        assert_eq!(spec.flat_features().unwrap(), 512 * 7 * 7);
    }

    #[test]
    fn one_class_is_rejected() {
        assert!(matches!(FaceNet::build(FaceNetSpec::new(1, FaceScale::Toy), 0), Err(Error::Spec(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let net = FaceNet::build(FaceNetSpec::new(3, FaceScale::Toy), 1)
            .unwrap()
            .with_labels(vec!["ann".into(), "bo".into(), "cy".into()])
            .unwrap();
        let (spec, labels) = FaceNet::parse_manifest(&net.manifest()).unwrap();
        assert_eq!(&spec, net.spec());
        assert_eq!(labels, net.labels());
    }
}
