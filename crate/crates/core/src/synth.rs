//! Deterministic toy corpora.
//!
//! Voices are harmonic series shaped by speaker-specific formant resonances,
//! spoken as short syllables separated by near-silence. Each speaker owns a
//! pitch and three vowel colourings; syllables pick a vowel at random. Faces
//! are simple rendered portraits whose colours and geometry depend on the
//! identity, jittered per sample.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioClip;
use crate::face::Image;
use crate::math;
use crate::{Error, Result};

/// A pure sine tone.
pub fn tone(freq_hz: f64, seconds: f64, sample_rate: u32, amplitude: f64) -> Result<AudioClip> {
    let n = math::round(seconds * sample_rate as f64) as usize;
    let w = 2.0 * PI * freq_hz / sample_rate as f64;
    AudioClip::new((0..n).map(|i| amplitude * math::sin(w * i as f64)).collect(), sample_rate)
}

/// `silence_s` of zeros followed by `tone_s` of a full-scale 440 Hz tone.
pub fn silence_then_tone(silence_s: f64, tone_s: f64, sample_rate: u32) -> Result<AudioClip> {
    let mut samples = vec![0.0; math::round(silence_s * sample_rate as f64) as usize];
    samples.extend_from_slice(tone(440.0, tone_s, sample_rate, 1.0)?.samples());
    AudioClip::new(samples, sample_rate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoiceCorpusConfig {
    pub speakers: usize,
    pub train_per_speaker: usize,
    pub valid_per_speaker: usize,
    pub sample_rate: u32,
    pub duration_s: f64,
    /// Peak amplitude of the uniform noise floor.
    pub noise: f64,
    pub seed: u64,
}

impl Default for VoiceCorpusConfig {
    fn default() -> Self {
        VoiceCorpusConfig {
            speakers: 8,
            train_per_speaker: 24,
            valid_per_speaker: 4,
            sample_rate: 16_000,
            duration_s: 2.0,
            noise: 0.005,
            seed: 0,
        }
    }
}

/// Formant frequencies and bandwidths of one vowel.
type Vowel = [(f64, f64); 3];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeaker {
    pub f0: f64,
    pub vowels: [Vowel; 3],
    /// Spectral tilt exponent: harmonic k is scaled by `k^-tilt`.
    pub tilt: f64,
}

/// Reference formants (Hz) of /a/, /i/ and /u/.
const BASE_VOWELS: [[f64; 3]; 3] = [[730.0, 1090.0, 2440.0], [270.0, 2290.0, 3010.0], [300.0, 870.0, 2240.0]];

/// Position of speaker `index` on the vocal-tract axis: a stride coprime to
/// `count` so neighbours in pitch land far apart in formant scale.
fn tract_position(index: usize, count: usize) -> usize {
    let stride = (count / 2 + 1..).find(|&k| gcd(k, count) == 1).unwrap_or(1);
    (index * stride) % count
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl SyntheticSpeaker {
    /// Speaker `index` of `count`. Pitch is spread evenly over 90–260 Hz and
    /// the vocal-tract scale evenly over 0.82–1.22 in a scrambled order, so
    /// every pair differs in at least one of the two by a full step.
    pub fn generate(index: usize, count: usize, rng: &mut ChaCha8Rng) -> Self {
        let span = |i: usize| if count > 1 { i as f64 / (count - 1) as f64 } else { 0.5 };
        let f0 = 90.0 + 170.0 * span(index) + rng.random_range(-3.0..3.0);
        let scale = 0.82 * math::pow(1.22 / 0.82, span(tract_position(index, count)));
        let bandwidths = [(60.0, 120.0), (80.0, 160.0), (120.0, 250.0)];
        let vowels = BASE_VOWELS.map(|formants| {
            core::array::from_fn(|j| {
                let f = formants[j] * scale * rng.random_range(0.97..1.03);
                (f, rng.random_range(bandwidths[j].0..bandwidths[j].1))
            })
        });
        SyntheticSpeaker { f0, vowels, tilt: rng.random_range(0.3..1.2) }
    }

    fn harmonic_gain(&self, vowel: &Vowel, k: usize, freq: f64) -> f64 {
        let resonance: f64 = vowel.iter().map(|&(f, b)| 1.0 / (1.0 + ((freq - f) / b) * ((freq - f) / b))).sum();
        (0.05 + resonance) * math::pow(k as f64, -self.tilt)
    }

    /// One utterance: syllables cycling /a/ /i/ /u/ from a random start,
    /// 120–250 ms long with 30–120 ms pauses, peak-normalized to 0.5 before the noise floor is added.
    pub fn utterance(&self, sample_rate: u32, duration_s: f64, noise: f64, rng: &mut ChaCha8Rng) -> Result<AudioClip> {
        let rate = sample_rate as f64;
        let n = math::round(duration_s * rate) as usize;
        let mut out = vec![0.0; n];
        let mut pos = (rng.random_range(0.02..0.1) * rate) as usize;
        let nyquist_guard = (rate / 2.0).min(4000.0);
        let mut syllable = rng.random_range(0..3usize);
        while pos < n {
            let len = ((rng.random_range(0.12..0.25) * rate) as usize).min(n - pos);
            let vowel = &self.vowels[syllable % 3];
            syllable += 1;
            let f0 = self.f0 * rng.random_range(0.98..1.02);
            let glide: f64 = rng.random_range(-0.04..0.04);
            let harmonics = (nyquist_guard / (f0 * (1.0 + glide.max(0.0)))) as usize;
            let gains: Vec<f64> = (1..=harmonics).map(|k| self.harmonic_gain(vowel, k, k as f64 * f0)).collect();
            let mut phase = 0.0;
            for i in 0..len {
                let t = i as f64 / len as f64;
                let f = f0 * (1.0 + glide * t);
                phase += 2.0 * PI * f / rate;
                let env = math::sin(PI * t);
                let s: f64 = gains.iter().enumerate().map(|(k, g)| g * math::sin((k + 1) as f64 * phase)).sum();
                out[pos + i] = env * s;
            }
            pos += len + (rng.random_range(0.03..0.12) * rate) as usize;
        }
        let peak = out.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
        if peak == 0.0 {
            return Err(Error::EmptyVoice);
        }
        for v in &mut out {
            *v = (*v * 0.5 / peak + rng.random_range(-noise..=noise)).clamp(-1.0, 1.0);
        }
        AudioClip::new(out, sample_rate)
    }
}

/// Train/validation/test assignment of a corpus item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem<T> {
    pub label: String,
    pub split: Split,
    pub item: T,
}

/// Speakers `spk00`, `spk01`, … each with train then validation utterances.
pub fn voice_corpus(cfg: &VoiceCorpusConfig) -> Result<Vec<CorpusItem<AudioClip>>> {
    if cfg.speakers == 0 || cfg.duration_s <= 0.0 || cfg.sample_rate == 0 || !(0.0..0.5).contains(&cfg.noise) {
        return Err(Error::Config("voice corpus needs speakers, a positive duration and noise below 0.5".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let speakers: Vec<_> = (0..cfg.speakers).map(|i| SyntheticSpeaker::generate(i, cfg.speakers, &mut rng)).collect();
    let mut out = Vec::new();
    for (i, spk) in speakers.iter().enumerate() {
        let splits = core::iter::repeat_n(Split::Train, cfg.train_per_speaker)
            .chain(core::iter::repeat_n(Split::Valid, cfg.valid_per_speaker));
        for split in splits {
            let clip = spk.utterance(cfg.sample_rate, cfg.duration_s, cfg.noise, &mut rng)?;
            out.push(CorpusItem { label: format!("spk{i:02}"), split, item: clip });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceCorpusConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub size: usize,
    /// Peak amplitude of per-pixel uniform noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for FaceCorpusConfig {
    fn default() -> Self {
        FaceCorpusConfig { classes: 5, train_per_class: 12, test_per_class: 8, size: 56, noise: 0.04, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Portrait {
    background: [f64; 3],
    skin: [f64; 3],
    hair: [f64; 3],
    /// Face half-width and half-height as fractions of the image size.
    face_rx: f64,
    face_ry: f64,
    eye_gap: f64,
    eye_y: f64,
    mouth_w: f64,
    hair_line: f64,
}

impl Portrait {
    fn generate(index: usize, count: usize, rng: &mut ChaCha8Rng) -> Self {
        let hue = index as f64 / count as f64;
        let colour = |h: f64, s: f64, v: f64| {
            let c = |o: f64| v * (1.0 - s * (0.5 + 0.5 * math::cos(2.0 * PI * (h + o))));
            [c(0.0), c(1.0 / 3.0), c(2.0 / 3.0)]
        };
        Portrait {
            background: colour(hue, 0.8, 0.9),
            skin: colour(0.08 + rng.random_range(-0.05..0.05), rng.random_range(0.2..0.5), rng.random_range(0.6..0.95)),
            hair: colour(hue + 0.5, 0.7, rng.random_range(0.2..0.6)),
            face_rx: rng.random_range(0.22..0.34),
            face_ry: rng.random_range(0.30..0.42),
            eye_gap: rng.random_range(0.08..0.16),
            eye_y: rng.random_range(-0.12..-0.02),
            mouth_w: rng.random_range(0.06..0.16),
            hair_line: rng.random_range(-0.3..-0.1),
        }
    }

    fn render(&self, size: usize, noise: f64, rng: &mut ChaCha8Rng) -> Image {
        let s = size as f64;
        let (cx, cy) = (rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06));
        let zoom = rng.random_range(0.92..1.08);
        let light = rng.random_range(0.85..1.15);
        let mut pixels = Vec::with_capacity(size * size * 3);
        for y in 0..size {
            for x in 0..size {
                let u = ((x as f64 + 0.5) / s - 0.5 - cx) / zoom;
                let v = ((y as f64 + 0.5) / s - 0.5 - cy) / zoom;
                let inside = (u / self.face_rx) * (u / self.face_rx) + (v / self.face_ry) * (v / self.face_ry) <= 1.0;
                let eye = |ex: f64| (u - ex) * (u - ex) + (v - self.eye_y) * (v - self.eye_y) <= 0.035 * 0.035;
                let rgb = if inside && v < self.hair_line {
                    self.hair
                } else if inside && (eye(-self.eye_gap) || eye(self.eye_gap)) {
                    [0.05, 0.05, 0.1]
                } else if inside && math::abs(v - 0.18) < 0.02 && math::abs(u) < self.mouth_w {
                    [0.6, 0.1, 0.15]
                } else if inside {
                    self.skin
                } else {
                    self.background
                };
                pixels.extend(rgb.iter().map(|c| c * light + rng.random_range(-noise..=noise)));
            }
        }
        Image::new(size, size, 3, pixels).expect("rendered extents match")
    }
}

/// Identities `id0`, `id1`, … each with train then test images.
pub fn face_corpus(cfg: &FaceCorpusConfig) -> Result<Vec<CorpusItem<Image>>> {
    if cfg.classes < 2 || cfg.size < 8 || !(0.0..0.5).contains(&cfg.noise) {
        return Err(Error::Config("face corpus needs two classes, size ≥ 8 and noise below 0.5".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut portraits: Vec<_> = (0..cfg.classes).map(|i| Portrait::generate(i, cfg.classes, &mut rng)).collect();
    // Decouple background hue from index order.
    let mut backgrounds: Vec<_> = portraits.iter().map(|p| p.background).collect();
    backgrounds.shuffle(&mut rng);
    for (p, b) in portraits.iter_mut().zip(backgrounds) {
        p.background = b;
    }
    let mut out = Vec::new();
    for (i, p) in portraits.iter().enumerate() {
        let splits = core::iter::repeat_n(Split::Train, cfg.train_per_class)
            .chain(core::iter::repeat_n(Split::Test, cfg.test_per_class));
        for (j, split) in splits.enumerate() {
            let label = format!("id{i}");
            let img = p.render(cfg.size, cfg.noise, &mut rng).with_source(format!("{label}-{j:03}"));
            out.push(CorpusItem { label, split, item: img });
        }
    }
    Ok(out)
}
