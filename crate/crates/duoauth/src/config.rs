//! Flat `key = value` run configuration. Files are applied first, then
//! `--set key=value` overrides; the resolved result is written next to every
//! command output as `config.resolved`.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use duoauth_core::audio::FeatureConfig;
use duoauth_core::auth::{Thresholds, DEFAULT_FACE_FAR};
use duoauth_core::train::{MiningStrategy, TrainConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Toy,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub scale: Scale,
    pub features: FeatureConfig,
    pub speaker: TrainConfig,
    pub face: TrainConfig,
    /// Augmented copies generated per training face image.
    pub face_augment: usize,
    pub thresholds: Thresholds,
    pub face_far_target: f64,
    /// External face detector command, run as `<command> <image path>`.
    pub detector: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scale: Scale::Toy,
            features: FeatureConfig::default(),
            speaker: TrainConfig::default(),
            face: TrainConfig { minibatch: 16, epochs: 30, ..TrainConfig::default() },
            face_augment: 0,
            thresholds: Thresholds { face: 0.5, voice: 0.5 },
            face_far_target: DEFAULT_FACE_FAR,
            detector: None,
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Usage(format!("config `{key}`: cannot parse `{v}`")))
}

fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "none" {
        Ok(None)
    } else {
        value(key, v).map(Some)
    }
}

fn show<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), |x| x.to_string())
}

fn train_set(t: &mut TrainConfig, key: &str, field: &str, v: &str) -> Result<()> {
    match field {
        "minibatch" => t.minibatch = value(key, v)?,
        "margin" => t.margin = value(key, v)?,
        "epochs" => t.epochs = value(key, v)?,
        "lr" => t.adam.lr = value(key, v)?,
        "beta1" => t.adam.beta1 = value(key, v)?,
        "beta2" => t.adam.beta2 = value(key, v)?,
        "eps" => t.adam.eps = value(key, v)?,
        "chunk_frames" => t.chunk_frames = value(key, v)?,
        "speakers_per_batch" => t.speakers_per_batch = value(key, v)?,
        "max_steps" => t.max_steps = optional(key, v)?,
        "freeze_trunk" => t.freeze_trunk = value(key, v)?,
        "mining" => {
            t.mining = match v {
                "semihard" => MiningStrategy::SemiHard,
                "hardest" => MiningStrategy::Hardest,
                _ => return Err(Error::Usage(format!("config `{key}`: expected semihard or hardest"))),
            }
        }
        _ => return Err(Error::Usage(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

fn train_entries(prefix: &str, t: &TrainConfig, out: &mut Vec<(String, String)>) {
    let mining = match t.mining {
        MiningStrategy::SemiHard => "semihard",
        MiningStrategy::Hardest => "hardest",
    };
    let fields = [
        ("minibatch", t.minibatch.to_string()),
        ("margin", t.margin.to_string()),
        ("epochs", t.epochs.to_string()),
        ("lr", t.adam.lr.to_string()),
        ("beta1", t.adam.beta1.to_string()),
        ("beta2", t.adam.beta2.to_string()),
        ("eps", t.adam.eps.to_string()),
        ("chunk_frames", t.chunk_frames.to_string()),
        ("speakers_per_batch", t.speakers_per_batch.to_string()),
        ("max_steps", show(&t.max_steps)),
        ("freeze_trunk", t.freeze_trunk.to_string()),
        ("mining", mining.to_string()),
    ];
    out.extend(fields.into_iter().map(|(k, v)| (format!("{prefix}.{k}"), v)));
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "seed" => self.seed = value(key, v)?,
            "scale" => {
                self.scale = match v {
                    "toy" => Scale::Toy,
                    "full" => Scale::Full,
                    _ => return Err(Error::Usage(format!("config `scale`: expected toy or full, got `{v}`"))),
                }
            }
            "features.window_s" => self.features.window_s = value(key, v)?,
            "features.hop_s" => self.features.hop_s = value(key, v)?,
            "features.n_fft" => self.features.n_fft = value(key, v)?,
            "features.n_mels" => self.features.n_mels = value(key, v)?,
            "features.vad_threshold_db" => self.features.vad_threshold_db = value(key, v)?,
            "features.log_eps" => self.features.log_eps = value(key, v)?,
            "face.augment" => self.face_augment = value(key, v)?,
            "thresholds.face" => self.thresholds.face = value(key, v)?,
            "thresholds.voice" => self.thresholds.voice = value(key, v)?,
            "calibrate.face_far" => self.face_far_target = value(key, v)?,
            "detector.command" => self.detector = if v == "none" || v.is_empty() { None } else { Some(v.to_string()) },
            _ => match key.split_once('.') {
                Some(("speaker", f)) => train_set(&mut self.speaker, key, f, v)?,
                Some(("face", f)) => train_set(&mut self.face, key, f, v)?,
                _ => return Err(Error::Usage(format!("unknown config key `{key}`"))),
            },
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Usage(format!("--set expects key=value, got `{kv}`")))?;
        self.set(k.trim(), v)
    }

    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        }
        for kv in overrides {
            cfg.apply_override(kv)?;
        }
        cfg.speaker.seed = cfg.seed;
        cfg.face.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let f = &self.features;
        let mut out: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("scale".into(), if self.scale == Scale::Toy { "toy" } else { "full" }.into()),
            ("features.window_s".into(), f.window_s.to_string()),
            ("features.hop_s".into(), f.hop_s.to_string()),
            ("features.n_fft".into(), f.n_fft.to_string()),
            ("features.n_mels".into(), f.n_mels.to_string()),
            ("features.vad_threshold_db".into(), f.vad_threshold_db.to_string()),
            ("features.log_eps".into(), f.log_eps.to_string()),
        ];
        train_entries("speaker", &self.speaker, &mut out);
        train_entries("face", &self.face, &mut out);
        out.extend([
            ("face.augment".into(), self.face_augment.to_string()),
            ("thresholds.face".into(), self.thresholds.face.to_string()),
            ("thresholds.voice".into(), self.thresholds.voice.to_string()),
            ("calibrate.face_far".into(), self.face_far_target.to_string()),
            ("detector.command".into(), show(&self.detector)),
        ]);
        out
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.resolved");
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("seed = 7\nspeaker.lr = 0.01\nface.max_steps = 12\ndetector.command = det --fast\n").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.detector.as_deref(), Some("det --fast"));
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let cfg = RunConfig::resolve(None, &["seed=3".into(), "speaker.mining=hardest".into()]).unwrap();
        assert_eq!((cfg.seed, cfg.speaker.seed, cfg.speaker.mining), (3, 3, MiningStrategy::Hardest));
        assert!(RunConfig::resolve(None, &["nope=1".into()]).is_err());
        assert!(RunConfig::resolve(None, &["seed".into()]).is_err());
    }
}
