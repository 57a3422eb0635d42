//! Audio front end: framing, energy-based voice activity detection and
//! normalized log-mel filterbank features.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math;
use crate::{Error, Result, Tensor};

/// Mono PCM audio with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::contract("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        if let Some(bad) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::contract(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// The clip multiplied by `gain`; fails if any sample leaves `[-1, 1]`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        AudioClip::new(self.samples.iter().map(|s| s * gain).collect(), self.sample_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    /// Frames more than this many dB below the loudest frame are dropped.
    pub vad_threshold_db: f64,
    /// Added inside the log so empty bands stay finite.
    pub log_eps: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_s: 0.025,
            hop_s: 0.010,
            n_fft: 512,
            n_mels: 64,
            vad_threshold_db: 30.0,
            log_eps: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(usize, usize)> {
        if !(self.hop_s > 0.0) || self.window_s < self.hop_s {
            return Err(Error::Config(format!(
                "need window ≥ hop > 0, got window {} s, hop {} s",
                self.window_s, self.hop_s
            )));
        }
        let (w, h) = (seconds_to_samples(self.window_s, sample_rate), seconds_to_samples(self.hop_s, sample_rate));
        if h == 0 {
            return Err(Error::Config("hop shorter than one sample".into()));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < w {
            return Err(Error::Config(format!(
                "n_fft must be a power of two ≥ the window ({w} samples), got {}",
                self.n_fft
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        if !(self.vad_threshold_db >= 0.0) || !(self.log_eps > 0.0) {
            return Err(Error::Config("VAD threshold must be ≥ 0 and log epsilon > 0".into()));
        }
        Ok((w, h))
    }
}

fn seconds_to_samples(s: f64, rate: u32) -> usize {
    math::round(s * rate as f64) as usize
}

/// `1 + floor((n − w) / h)`, or `None` when `n < w`.
pub fn frame_count(n: usize, w: usize, h: usize) -> Option<usize> {
    (n >= w && w > 0 && h > 0).then(|| 1 + (n - w) / h)
}

/// Splits a clip into overlapping frames of `window_s` advanced by `hop_s`.
pub fn frame_signal(clip: &AudioClip, window_s: f64, hop_s: f64) -> Result<Vec<&[f64]>> {
    if !(hop_s > 0.0) || window_s < hop_s {
        return Err(Error::Config(format!("need window ≥ hop > 0, got {window_s} / {hop_s}")));
    }
    let w = seconds_to_samples(window_s, clip.sample_rate);
    let h = seconds_to_samples(hop_s, clip.sample_rate).max(1);
    frame_samples(clip.samples(), w, h)
}

pub(crate) fn frame_samples(samples: &[f64], w: usize, h: usize) -> Result<Vec<&[f64]>> {
    let n = frame_count(samples.len(), w, h).ok_or(Error::TooShort { needed: w, got: samples.len() })?;
    Ok((0..n).map(|i| &samples[i * h..i * h + w]).collect())
}

/// Frame energy in dB, `10·log10(Σ x²)`; `-∞` for an all-zero frame.
pub fn log_energy_db(frame: &[f64]) -> f64 {
    let e: f64 = frame.iter().map(|x| x * x).sum();
    if e > 0.0 {
        10.0 * math::log10(e)
    } else {
        f64::NEG_INFINITY
    }
}

/// Keeps frames whose energy is within `threshold_db` of the loudest frame.
pub fn vad_filter(frames: &[&[f64]], threshold_db: f64) -> Result<Vec<bool>> {
    if frames.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let energies: Vec<f64> = frames.iter().map(|f| log_energy_db(f)).collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptyVoice);
    }
    Ok(energies.iter().map(|&e| e >= max - threshold_db).collect())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * math::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (math::pow(10.0, mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, n_fft: usize, n_mels: usize) -> Result<Self> {
        let n_bins = n_fft / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                *w = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
            }
            if row.iter().all(|&w| w == 0.0) {
                return Err(Error::Config(format!(
                    "mel filter {m} covers no FFT bin; use fewer mel bands or a larger FFT"
                )));
            }
        }
        Ok(MelFilterbank { n_mels, n_bins, weights })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn filter(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights.chunks(self.n_bins).map(|row| crate::ops::dot(row, spectrum)).collect()
    }
}

/// In-place iterative radix-2 FFT; `re.len()` must be a power of two.
pub fn fft(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert!(n.is_power_of_two() && im.len() == n, "fft needs matching power-of-two buffers");
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) };
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (wr, wi) = (math::cos(ang * k as f64), math::sin(ang * k as f64));
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len).map(|i| 0.54 - 0.46 * math::cos(2.0 * PI * i as f64 / (len - 1) as f64)).collect()
}

/// T×D feature matrix, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    dim: usize,
    data: Vec<f64>,
    /// Seconds between frame starts.
    pub frame_hop: f64,
    /// Seconds per analysis window.
    pub window: f64,
}

impl FeatureMatrix {
    pub fn from_rows(dim: usize, data: Vec<f64>, frame_hop: f64, window: f64) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::shape(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        Ok(FeatureMatrix { frames: data.len() / dim, dim, data, frame_hop, window })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Rows `start..start + len`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames {
            return Err(Error::TooShort { needed: start + len, got: self.frames });
        }
        let data = self.data[start * self.dim..(start + len) * self.dim].to_vec();
        Ok(FeatureMatrix { frames: len, dim: self.dim, data, frame_hop: self.frame_hop, window: self.window })
    }

    /// The matrix repeated `times` times along the time axis.
    pub fn tiled(&self, times: usize) -> Self {
        let data = self.data.iter().copied().cycle().take(self.data.len() * times.max(1)).collect();
        FeatureMatrix { frames: self.frames * times.max(1), dim: self.dim, data, ..*self }
    }

    /// Network input layout `[1, D, T]`: frequency rows, time columns.
    pub fn to_tensor(&self) -> Tensor {
        let (t, d) = (self.frames, self.dim);
        let mut out = vec![0.0; t * d];
        for (ti, row) in self.data.chunks(d).enumerate() {
            for (di, &v) in row.iter().enumerate() {
                out[di * t + ti] = v;
            }
        }
        Tensor::new(&[1, d, t], out).expect("non-empty matrix")
    }

    /// Per-column mean and (population) variance normalization. Columns with
    /// negligible variance are only centered.
    pub fn normalize(&mut self) {
        let (t, d) = (self.frames, self.dim);
        for c in 0..d {
            let mean = (0..t).map(|r| self.data[r * d + c]).sum::<f64>() / t as f64;
            for r in 0..t {
                self.data[r * d + c] -= mean;
            }
            let var = (0..t).map(|r| self.data[r * d + c] * self.data[r * d + c]).sum::<f64>() / t as f64;
            if var > 1e-20 {
                let inv = 1.0 / math::sqrt(var);
                for r in 0..t {
                    self.data[r * d + c] *= inv;
                }
            }
        }
    }
}

/// Windowed magnitude spectrum, `n_fft / 2 + 1` bins.
pub fn magnitude_spectrum(frame: &[f64], window: &[f64], n_fft: usize) -> Vec<f64> {
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    for ((dst, &x), &w) in re.iter_mut().zip(frame).zip(window) {
        *dst = x * w;
    }
    fft(&mut re, &mut im);
    re.iter()
        .zip(&im)
        .take(n_fft / 2 + 1)
        .map(|(r, i)| math::sqrt(r * r + i * i))
        .collect()
}

/// Reusable extractor holding the window and filterbank for one sample rate.
#[derive(Debug, Clone)]
pub struct FbankExtractor {
    config: FeatureConfig,
    sample_rate: u32,
    window_len: usize,
    hop_len: usize,
    window: Vec<f64>,
    filterbank: MelFilterbank,
}

impl FbankExtractor {
    pub fn new(config: FeatureConfig, sample_rate: u32) -> Result<Self> {
        let (window_len, hop_len) = config.validate(sample_rate)?;
        Ok(FbankExtractor {
            config,
            sample_rate,
            window_len,
            hop_len,
            window: hamming(window_len),
            filterbank: MelFilterbank::new(sample_rate, config.n_fft, config.n_mels)?,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Log-mel rows of voiced frames, before normalization.
    pub fn raw(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        if clip.sample_rate() != self.sample_rate {
            return Err(Error::Config(format!(
                "clip is {} Hz, extractor expects {} Hz (resampling is not supported)",
                clip.sample_rate(),
                self.sample_rate
            )));
        }
        let frames = frame_samples(clip.samples(), self.window_len, self.hop_len)?;
        let keep = vad_filter(&frames, self.config.vad_threshold_db)?;
        let mut data = Vec::with_capacity(self.config.n_mels * frames.len());
        for (frame, _) in frames.iter().zip(&keep).filter(|(_, k)| **k) {
            let spec = magnitude_spectrum(frame, &self.window, self.config.n_fft);
            data.extend(self.filterbank.apply(&spec).into_iter().map(|e| math::ln(e + self.config.log_eps)));
        }
        FeatureMatrix::from_rows(
            self.config.n_mels,
            data,
            self.hop_len as f64 / self.sample_rate as f64,
            self.window_len as f64 / self.sample_rate as f64,
        )
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        let mut m = self.raw(clip)?;
        m.normalize();
        Ok(m)
    }
}

/// VAD-filtered, per-utterance normalized log-mel features.
pub fn extract_fbank(clip: &AudioClip, config: &FeatureConfig) -> Result<FeatureMatrix> {
    FbankExtractor::new(*config, clip.sample_rate())?.extract(clip)
}
