//! Triplet-loss speaker training and cross-entropy face training.
//!
//! Both loops are pure functions of (data, config, seed): every random choice
//! is drawn from a ChaCha8 stream seeded by `TrainConfig::seed`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::FeatureMatrix;
use crate::autograd::{Graph, Var};
use crate::face::{FaceNet, Image};
use crate::metrics::{compute_eer, ScoreSet};
use crate::model::ParamSet;
use crate::optim::{Adam, AdamConfig};
use crate::speaker::{cosine_similarity, Embedding, SpeakerNet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiningStrategy {
    /// A random negative inside the margin band, else the hardest negative.
    SemiHard,
    /// Always the negative most similar to the anchor.
    Hardest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub minibatch: usize,
    pub margin: f64,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Frames per training chunk (speaker training).
    pub chunk_frames: usize,
    pub mining: MiningStrategy,
    /// Distinct speakers per batch; each contributes `minibatch / speakers_per_batch` chunks.
    pub speakers_per_batch: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<usize>,
    /// Face training only: update the head and leave the convolutional trunk fixed.
    pub freeze_trunk: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            minibatch: 32,
            margin: 0.1,
            epochs: 60,
            seed: 0,
            adam: AdamConfig::default(),
            chunk_frames: 160,
            mining: MiningStrategy::SemiHard,
            speakers_per_batch: 8,
            max_steps: None,
            freeze_trunk: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatch < 3 {
            return Err(Error::Config(format!("minibatch must be at least 3, got {}", self.minibatch)));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.speakers_per_batch < 2 || self.minibatch / self.speakers_per_batch < 2 {
            return Err(Error::Config(format!(
                "{} speakers per batch of {} leaves no room for positives",
                self.speakers_per_batch, self.minibatch
            )));
        }
        if self.chunk_frames == 0 {
            return Err(Error::Config("chunk_frames must be positive".into()));
        }
        let a = &self.adam;
        if !(a.lr >= 0.0 && a.lr.is_finite() && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config("invalid Adam hyper-parameters".into()));
        }
        Ok(())
    }
}

/// `max(0, cos(a, n) − cos(a, p) + alpha)`.
pub fn triplet_loss(anchor: &Embedding, positive: &Embedding, negative: &Embedding, alpha: f64) -> f64 {
    f64::max(0.0, cosine_similarity(anchor, negative) - cosine_similarity(anchor, positive) + alpha)
}

/// One `(anchor, positive, negative)` index triple per ordered same-label
/// pair that has at least one negative in the batch.
pub fn sample_triplets(
    embeddings: &[Embedding],
    labels: &[usize],
    margin: f64,
    strategy: MiningStrategy,
    seed: u64,
) -> Result<Vec<(usize, usize, usize)>> {
    if embeddings.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} embeddings for {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let n = embeddings.len();
    let sim: Vec<f64> = (0..n * n).map(|k| cosine_similarity(&embeddings[k / n], &embeddings[k % n])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for a in 0..n {
        let negatives: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        if negatives.is_empty() {
            continue;
        }
        let hardest = negatives
            .iter()
            .copied()
            .fold(negatives[0], |best, j| if sim[a * n + j] > sim[a * n + best] { j } else { best });
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            let neg = match strategy {
                MiningStrategy::Hardest => hardest,
                MiningStrategy::SemiHard => {
                    let band: Vec<usize> =
                        negatives.iter().copied().filter(|&j| sim[a * n + j] > sim[a * n + p] - margin).collect();
                    if band.is_empty() {
                        hardest
                    } else {
                        band[rng.random_range(0..band.len())]
                    }
                }
            };
            out.push((a, p, neg));
        }
    }
    Ok(out)
}

/// A labelled utterance ready for the speaker network.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub label: usize,
    pub features: FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEpoch {
    pub epoch: usize,
    /// Optimizer steps attempted so far, including skipped ones.
    pub steps: usize,
    pub mean_loss: f64,
    /// Fraction of mined triplets that still violated the margin.
    pub active_fraction: f64,
    pub val_eer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceEpoch {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained<M, H> {
    pub model: M,
    pub history: Vec<H>,
}

/// Training stopped on an error. `checkpoint` holds the last good model when
/// training had started.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure<M, H> {
    pub error: Error,
    pub checkpoint: Option<M>,
    pub history: Vec<H>,
}

impl<M, H> From<Error> for TrainFailure<M, H> {
    fn from(error: Error) -> Self {
        TrainFailure { error, checkpoint: None, history: Vec::new() }
    }
}

pub type TrainResult<M, H> = core::result::Result<Trained<M, H>, TrainFailure<M, H>>;

fn steps_per_epoch(n_train: usize, minibatch: usize) -> usize {
    n_train.div_ceil(minibatch)
}

/// Centre chunk of at most `frames` frames.
fn centre_chunk(f: &FeatureMatrix, frames: usize) -> Result<FeatureMatrix> {
    if f.frames() <= frames {
        return Ok(f.clone());
    }
    f.slice_frames((f.frames() - frames) / 2, frames)
}

/// All-pairs genuine/impostor cosine scores over `utts`, one centre chunk each.
pub fn pairwise_scores(model: &SpeakerNet, utts: &[Utterance], chunk_frames: usize) -> Result<ScoreSet> {
    let embs = utts
        .iter()
        .map(|u| model.embed(&centre_chunk(&u.features, chunk_frames)?))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = ScoreSet::default();
    for i in 0..utts.len() {
        for j in i + 1..utts.len() {
            let s = cosine_similarity(&embs[i], &embs[j]);
            if utts[i].label == utts[j].label {
                scores.genuine.push(s);
            } else {
                scores.impostor.push(s);
            }
        }
    }
    Ok(scores)
}

fn grads_or_zero(g: &mut Graph<'_>, vars: &[Var], params: &ParamSet) -> Vec<Vec<f64>> {
    vars.iter()
        .zip(params.iter())
        .map(|(&v, (_, t))| g.take_grad(v).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect()
}

struct SpeakerQueues {
    by_label: Vec<Vec<usize>>,
    cursor: Vec<usize>,
}

impl SpeakerQueues {
    fn new(train: &[Utterance]) -> Self {
        let n_labels = train.iter().map(|u| u.label + 1).max().unwrap_or(0);
        let mut by_label = vec![Vec::new(); n_labels];
        for (i, u) in train.iter().enumerate() {
            by_label[u.label].push(i);
        }
        by_label.retain(|v| !v.is_empty());
        let cursor = vec![0; by_label.len()];
        SpeakerQueues { by_label, cursor }
    }

    fn shuffle(&mut self, rng: &mut ChaCha8Rng) {
        for q in &mut self.by_label {
            q.shuffle(rng);
        }
        self.cursor.iter_mut().for_each(|c| *c = 0);
    }

    fn draw(&mut self, speaker: usize, rng: &mut ChaCha8Rng) -> usize {
        let q = &mut self.by_label[speaker];
        if self.cursor[speaker] == q.len() {
            q.shuffle(rng);
            self.cursor[speaker] = 0;
        }
        self.cursor[speaker] += 1;
        q[self.cursor[speaker] - 1]
    }
}

/// Trains `model` with cosine triplet loss on P×K batches of random chunks.
pub fn train_speaker(
    mut model: SpeakerNet,
    train: &[Utterance],
    valid: &[Utterance],
    config: &TrainConfig,
) -> TrainResult<SpeakerNet, SpeakerEpoch> {
    config.validate()?;
    let min = model.spec().min_frames();
    if let Some(u) = train.iter().chain(valid).find(|u| u.features.frames() < min) {
        return Err(Error::TooShort { needed: min, got: u.features.frames() }.into());
    }
    let mut queues = SpeakerQueues::new(train);
    if queues.by_label.iter().any(|q| q.len() < 2) || queues.by_label.len() < 2 {
        return Err(Error::contract("every training speaker needs two utterances and at least two speakers").into());
    }
    let n_speakers = queues.by_label.len();
    let p = config.speakers_per_batch.min(n_speakers);
    let k = config.minibatch / p;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model.params(), config.adam);
    let mut history = Vec::new();
    let mut steps = 0;
    let per_epoch = steps_per_epoch(train.len(), config.minibatch);
    let mut speakers: Vec<usize> = (0..n_speakers).collect();

    for epoch in 1..=config.epochs {
        if config.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        queues.shuffle(&mut rng);
        let (mut loss_sum, mut loss_n, mut active, mut mined) = (0.0, 0usize, 0usize, 0usize);
        for _ in 0..per_epoch {
            if config.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            steps += 1;
            speakers.shuffle(&mut rng);
            let mut chunks = Vec::with_capacity(p * k);
            let mut labels = Vec::with_capacity(p * k);
            for &s in &speakers[..p] {
                for _ in 0..k {
                    let f = &train[queues.draw(s, &mut rng)].features;
                    let len = config.chunk_frames.min(f.frames());
                    let start = rng.random_range(0..=f.frames() - len);
                    chunks.push(f.slice_frames(start, len).map_err(TrainFailure::from)?);
                    labels.push(s);
                }
            }
            let mining_seed: u64 = rng.random();

            let step = {
                let mut g = Graph::new();
                let vars = model.params().vars(&mut g, true);
                let outs = chunks
                    .iter()
                    .map(|c| model.forward_features(&mut g, &vars, c))
                    .collect::<Result<Vec<_>>>();
                match outs {
                    Err(e) => Err(e),
                    Ok(outs) => {
                        let embs: Vec<Embedding> =
                            outs.iter().map(|&o| Embedding::from_raw(g.value(o).data().to_vec())).collect();
                        sample_triplets(&embs, &labels, config.margin, config.mining, mining_seed).and_then(|triplets| {
                            mined += triplets.len();
                            let live: Vec<_> = triplets
                                .iter()
                                .filter(|&&(a, p, n)| triplet_loss(&embs[a], &embs[p], &embs[n], config.margin) > 0.0)
                                .collect();
                            active += live.len();
                            if triplets.is_empty() {
                                return Ok(None);
                            }
                            let mut terms = Vec::with_capacity(triplets.len());
                            for &(a, p, n) in &triplets {
                                let an = g.dot(outs[a], outs[n])?;
                                let ap = g.dot(outs[a], outs[p])?;
                                let d = g.sub(an, ap)?;
                                let m = g.add_scalar(d, config.margin);
                                terms.push(g.relu(m));
                            }
                            let loss = g.mean(&terms)?;
                            let value = g.value(loss).item()?;
                            if !value.is_finite() {
                                return Err(Error::Numeric("triplet loss".into()));
                            }
                            if live.is_empty() {
                                return Ok(Some((value, None)));
                            }
                            g.backward(loss)?;
                            Ok(Some((value, Some(grads_or_zero(&mut g, &vars, model.params())))))
                        })
                    }
                }
            };
            let fail = |error, history: &Vec<SpeakerEpoch>, model: &SpeakerNet| TrainFailure {
                error,
                checkpoint: Some(model.clone()),
                history: history.clone(),
            };
            match step {
                Err(e) => return Err(fail(e, &history, &model)),
                Ok(None) => {}
                Ok(Some((value, grads))) => {
                    loss_sum += value;
                    loss_n += 1;
                    if let Some(grads) = grads {
                        if let Err(e) = adam.step(model.params_mut(), &grads) {
                            return Err(fail(e, &history, &model));
                        }
                    }
                }
            }
        }
        let val_eer = if valid.is_empty() {
            None
        } else {
            let scores = pairwise_scores(&model, valid, config.chunk_frames)
                .map_err(|e| TrainFailure { error: e, checkpoint: Some(model.clone()), history: history.clone() })?;
            compute_eer(&scores).ok().map(|r| r.eer)
        };
        history.push(SpeakerEpoch {
            epoch,
            steps,
            mean_loss: if loss_n == 0 { 0.0 } else { loss_sum / loss_n as f64 },
            active_fraction: if mined == 0 { 0.0 } else { active as f64 / mined as f64 },
            val_eer,
        });
    }
    Ok(Trained { model, history })
}

/// A labelled face image sized for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: usize,
}

/// Mean cross-entropy, accuracy and the predicted labels over `data`.
pub fn evaluate_face(model: &FaceNet, data: &[LabeledImage]) -> Result<(f64, f64, Vec<usize>)> {
    if data.is_empty() {
        return Err(Error::contract("evaluation set is empty"));
    }
    let mut loss = 0.0;
    let mut preds = Vec::with_capacity(data.len());
    for item in data {
        let logits = model.logits(&item.image)?;
        let (l, probs) = crate::ops::softmax_xent(&crate::Tensor::vector(logits), item.label)?;
        loss += l;
        preds.push(crate::face::FacePrediction::from_probs(probs).label);
    }
    let correct = preds.iter().zip(data).filter(|(p, d)| **p == d.label).count();
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64, preds))
}

/// Minimizes softmax cross-entropy over seeded-shuffled minibatches.
pub fn train_face_head(
    mut model: FaceNet,
    train: &[LabeledImage],
    valid: &[LabeledImage],
    config: &TrainConfig,
) -> TrainResult<FaceNet, FaceEpoch> {
    if config.minibatch == 0 {
        return Err(Error::Config("minibatch must be positive".into()).into());
    }
    if train.is_empty() {
        return Err(Error::contract("training set is empty").into());
    }
    for item in train.iter().chain(valid) {
        model.check_image(&item.image)?;
        if item.label >= model.num_classes() {
            return Err(Error::contract(format!("label {} outside the {}-class head", item.label, model.num_classes())).into());
        }
    }
    let frozen: Vec<bool> = model.params().names().map(|n| config.freeze_trunk && !n.starts_with("head.")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model.params(), config.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut steps = 0;

    for epoch in 1..=config.epochs {
        if config.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(config.minibatch) {
            if config.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            steps += 1;
            let grads = {
                let mut g = Graph::new();
                let vars = model.params().vars(&mut g, true);
                let result = (|| {
                    let mut terms = Vec::with_capacity(batch.len());
                    for &i in batch {
                        let x = g.leaf(train[i].image.to_tensor(), false);
                        let logits = model.forward(&mut g, &vars, x)?;
                        terms.push(g.softmax_xent(logits, train[i].label)?);
                    }
                    let loss = g.mean(&terms)?;
                    if !g.value(loss).item()?.is_finite() {
                        return Err(Error::Numeric("cross-entropy loss".into()));
                    }
                    g.backward(loss)?;
                    let mut grads = grads_or_zero(&mut g, &vars, model.params());
                    for (gr, &f) in grads.iter_mut().zip(&frozen) {
                        if f {
                            gr.iter_mut().for_each(|v| *v = 0.0);
                        }
                    }
                    Ok(grads)
                })();
                result
            };
            if let Err(error) = grads.and_then(|grads| adam.step(model.params_mut(), &grads)) {
                return Err(TrainFailure { error, checkpoint: Some(model), history });
            }
        }
        let eval = |data: &[LabeledImage]| evaluate_face(&model, data).map(|(l, a, _)| (l, a));
        let stats = eval(train).and_then(|tr| {
            let va = if valid.is_empty() { None } else { Some(eval(valid)?) };
            Ok((tr, va))
        });
        match stats {
            Ok(((train_loss, train_accuracy), va)) => history.push(FaceEpoch {
                epoch,
                steps,
                train_loss,
                train_accuracy,
                val_loss: va.map(|v| v.0),
                val_accuracy: va.map(|v| v.1),
            }),
            Err(error) => return Err(TrainFailure { error, checkpoint: Some(model), history }),
        }
    }
    Ok(Trained { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speaker::SpeakerNetSpec;

    fn unit(v: &[f64]) -> Embedding {
        Embedding::normalize(v.to_vec()).unwrap()
    }

    #[test]
    fn triplet_loss_examples() {
        let a = unit(&[1.0, 0.0]);
        let neg = unit(&[-1.0, 0.0]);
        assert_eq!(triplet_loss(&a, &a, &neg, 0.1), 0.0);
        assert!((triplet_loss(&a, &a, &a, 0.1) - 0.1).abs() < 1e-12);
        // cos(a,p) = 0.5, cos(a,n) = 0.6.
        let p = unit(&[0.5, (1.0f64 - 0.25).sqrt()]);
        let n = unit(&[0.6, (1.0f64 - 0.36).sqrt()]);
        assert!((triplet_loss(&a, &p, &n, 0.1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mining_respects_labels() {
        let embs: Vec<_> = [[1.0, 0.1], [0.9, 0.3], [0.2, 1.0], [0.1, 0.8]].iter().map(|v| unit(v)).collect();
        let labels = [0, 0, 1, 1];
        for strategy in [MiningStrategy::SemiHard, MiningStrategy::Hardest] {
            let t = sample_triplets(&embs, &labels, 0.1, strategy, 3).unwrap();
            assert_eq!(t.len(), 4);
            for (a, p, n) in t {
                assert!(a != p && labels[a] == labels[p] && labels[n] != labels[a]);
            }
        }
        assert!(sample_triplets(&embs[..2], &[0, 0], 0.1, MiningStrategy::SemiHard, 0).unwrap().is_empty());
        assert!(sample_triplets(&embs, &[0, 0], 0.1, MiningStrategy::SemiHard, 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { minibatch: 2, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { margin: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { speakers_per_batch: 17, ..Default::default() }.validate().is_err());
    }

    fn tiny_corpus() -> Vec<Utterance> {
        (0..8)
            .map(|i| {
                let label = i % 2;
                let data = (0..64 * 20).map(|j| ((j * (label + 2) + i) % 7) as f64 / 7.0 - 0.5).collect();
                Utterance { label, features: FeatureMatrix::from_rows(64, data, 0.01, 0.025).unwrap() }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let spec = SpeakerNetSpec::scaled(32);
        let model = SpeakerNet::build(spec, 1).unwrap();
        let config = TrainConfig {
            minibatch: 4,
            speakers_per_batch: 2,
            epochs: 1,
            chunk_frames: 16,
            adam: AdamConfig { lr: 0.0, ..Default::default() },
            ..Default::default()
        };
        let out = train_speaker(model.clone(), &tiny_corpus(), &[], &config).unwrap();
        assert_eq!(out.model.params(), model.params());
        assert_eq!(out.history.len(), 1);
    }
}
