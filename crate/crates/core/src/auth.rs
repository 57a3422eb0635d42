//! Enrollment and the two-step decision: face identification picks a single
//! candidate, then one voice comparison against that candidate's template
//! accepts or rejects.
//!
//! Readers (`authenticate`, `identify_face`, `verify_voice`) take `&EnrollmentStore`
//! and writers (`enroll`) take `&mut`, so the borrow checker enforces the
//! single-writer/multi-reader contract. The comparison counter is atomic so
//! concurrent readers can share a store.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::audio::{extract_fbank, AudioClip, FeatureConfig};
use crate::face::{FaceNet, FacePrediction, Image};
use crate::metrics::{compute_eer, threshold_for_far, ScoreSet};
use crate::speaker::{cosine_similarity, Embedding, SpeakerNet};
use crate::{Error, Result};

/// Closed-set face classifier as seen by the pipeline.
pub trait FaceIdentifier {
    fn num_classes(&self) -> usize;
    fn fingerprint(&self) -> u64;
    fn predict(&self, image: &Image) -> Result<FacePrediction>;
}

impl FaceIdentifier for FaceNet {
    fn num_classes(&self) -> usize {
        FaceNet::num_classes(self)
    }

    fn fingerprint(&self) -> u64 {
        FaceNet::fingerprint(self)
    }

    fn predict(&self, image: &Image) -> Result<FacePrediction> {
        self.classify(image)
    }
}

/// Maps a clip to a speaker embedding.
pub trait VoiceEmbedder {
    fn fingerprint(&self) -> u64;
    fn embed_clip(&self, clip: &AudioClip) -> Result<Embedding>;
}

/// Feature extraction followed by the speaker network.
#[derive(Debug, Clone)]
pub struct VoicePipeline<'a> {
    pub net: &'a SpeakerNet,
    pub features: FeatureConfig,
}

impl VoiceEmbedder for VoicePipeline<'_> {
    fn fingerprint(&self) -> u64 {
        self.net.fingerprint()
    }

    fn embed_clip(&self, clip: &AudioClip) -> Result<Embedding> {
        self.net.embed(&extract_fbank(clip, &self.features)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub face: f64,
    pub voice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentRecord {
    pub user_id: String,
    pub face_class: usize,
    pub voice_template: Embedding,
    /// Seconds since the Unix epoch.
    pub enrolled_at: u64,
    /// (face images, voice clips) used at enrollment.
    pub sample_counts: (usize, usize),
}

#[derive(Debug, Default)]
pub struct EnrollmentStore {
    face_fingerprint: Option<u64>,
    voice_fingerprint: Option<u64>,
    records: Vec<EnrollmentRecord>,
    comparisons: AtomicU64,
}

impl Clone for EnrollmentStore {
    fn clone(&self) -> Self {
        EnrollmentStore {
            face_fingerprint: self.face_fingerprint,
            voice_fingerprint: self.voice_fingerprint,
            records: self.records.clone(),
            comparisons: AtomicU64::new(self.comparisons()),
        }
    }
}

/// Compares bound fingerprints and records; the comparison counter is ignored.
impl PartialEq for EnrollmentStore {
    fn eq(&self, other: &Self) -> bool {
        self.face_fingerprint == other.face_fingerprint
            && self.voice_fingerprint == other.voice_fingerprint
            && self.records == other.records
    }
}

pub fn validate_user_id(user_id: &str) -> Result<()> {
    if user_id.is_empty() || user_id.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(Error::contract(format!("user id {user_id:?} must be non-empty without whitespace")));
    }
    Ok(())
}

impl EnrollmentStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a store from persisted parts, re-checking every record.
    pub fn from_parts(
        face_fingerprint: Option<u64>,
        voice_fingerprint: Option<u64>,
        records: Vec<EnrollmentRecord>,
    ) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            validate_user_id(&r.user_id)?;
            if let Some(prev) = records[..i].iter().find(|p| p.user_id == r.user_id) {
                return Err(Error::Conflict(prev.user_id.clone()));
            }
            if let Some(prev) = records[..i].iter().find(|p| p.face_class == r.face_class) {
                return Err(Error::ClassTaken { class: r.face_class, user: prev.user_id.clone() });
            }
            Embedding::from_unit(r.voice_template.values().to_vec())?;
        }
        Ok(EnrollmentStore { face_fingerprint, voice_fingerprint, records, comparisons: AtomicU64::new(0) })
    }

    pub fn face_fingerprint(&self) -> Option<u64> {
        self.face_fingerprint
    }

    pub fn voice_fingerprint(&self) -> Option<u64> {
        self.voice_fingerprint
    }

    pub fn records(&self) -> &[EnrollmentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, user_id: &str) -> Option<&EnrollmentRecord> {
        self.records.iter().find(|r| r.user_id == user_id)
    }

    pub fn by_face_class(&self, class: usize) -> Option<&EnrollmentRecord> {
        self.records.iter().find(|r| r.face_class == class)
    }

    /// Voice-template comparisons performed since creation or the last reset.
    pub fn comparisons(&self) -> u64 {
        self.comparisons.load(Ordering::Relaxed)
    }

    pub fn reset_comparisons(&self) {
        self.comparisons.store(0, Ordering::Relaxed);
    }

    /// Cosine score of `probe` against `user_id`'s template. The only place
    /// templates are compared.
    pub fn compare(&self, user_id: &str, probe: &Embedding) -> Result<f64> {
        let record = self.get(user_id).ok_or_else(|| Error::UnknownUser(user_id.to_string()))?;
        if record.voice_template.dim() != probe.dim() {
            return Err(Error::shape(format!(
                "probe has {} dimensions, template has {}",
                probe.dim(),
                record.voice_template.dim()
            )));
        }
        self.comparisons.fetch_add(1, Ordering::Relaxed);
        Ok(cosine_similarity(&record.voice_template, probe))
    }

    /// Fails when the store is bound to different models.
    pub fn check_models(&self, face: u64, voice: u64) -> Result<()> {
        for (bound, actual) in [(self.face_fingerprint, face), (self.voice_fingerprint, voice)] {
            if let Some(expected) = bound {
                if expected != actual {
                    return Err(Error::FingerprintMismatch { expected, actual });
                }
            }
        }
        Ok(())
    }
}

/// Normalized mean of the embeddings.
pub fn voice_template(embeddings: &[Embedding]) -> Result<Embedding> {
    let first = embeddings.first().ok_or_else(|| Error::contract("template of no embeddings"))?;
    let mut sum = vec![0.0; first.dim()];
    for e in embeddings {
        if e.dim() != sum.len() {
            return Err(Error::shape("embeddings differ in dimension"));
        }
        sum.iter_mut().zip(e.values()).for_each(|(s, v)| *s += v);
    }
    Embedding::normalize(sum)
}

/// Most frequent predicted class; ties go to the smaller index.
fn majority(preds: &[usize]) -> usize {
    let k = preds.iter().max().map_or(0, |m| m + 1);
    let mut votes = vec![0usize; k];
    preds.iter().for_each(|&p| votes[p] += 1);
    votes.iter().enumerate().fold(0, |best, (i, &v)| if v > votes[best] { i } else { best })
}

pub struct EnrollRequest<'a> {
    pub user_id: &'a str,
    pub face_images: &'a [Image],
    pub voice_clips: &'a [AudioClip],
    /// Face class to bind; when absent, the majority prediction over `face_images`.
    pub face_class: Option<usize>,
    pub enrolled_at: u64,
}

pub fn enroll<'s>(
    store: &'s mut EnrollmentStore,
    request: &EnrollRequest<'_>,
    face: &impl FaceIdentifier,
    voice: &impl VoiceEmbedder,
) -> Result<&'s EnrollmentRecord> {
    let user_id = request.user_id;
    validate_user_id(user_id)?;
    if store.get(user_id).is_some() {
        return Err(Error::Conflict(user_id.to_string()));
    }
    if request.face_images.is_empty() || request.voice_clips.is_empty() {
        return Err(Error::contract("enrollment needs at least one face image and one voice clip"));
    }
    store.check_models(face.fingerprint(), voice.fingerprint())?;
    let face_class = match request.face_class {
        Some(c) => c,
        None => {
            let preds = request.face_images.iter().map(|img| face.predict(img).map(|p| p.label)).collect::<Result<Vec<_>>>()?;
            majority(&preds)
        }
    };
    if face_class >= face.num_classes() {
        return Err(Error::contract(format!(
            "face class {face_class} outside the {}-class model",
            face.num_classes()
        )));
    }
    if let Some(other) = store.by_face_class(face_class) {
        return Err(Error::ClassTaken { class: face_class, user: other.user_id.clone() });
    }
    let embeddings = request.voice_clips.iter().map(|c| voice.embed_clip(c)).collect::<Result<Vec<_>>>()?;
    let record = EnrollmentRecord {
        user_id: user_id.to_string(),
        face_class,
        voice_template: voice_template(&embeddings)?,
        enrolled_at: request.enrolled_at,
        sample_counts: (request.face_images.len(), request.voice_clips.len()),
    };
    store.face_fingerprint = Some(face.fingerprint());
    store.voice_fingerprint = Some(voice.fingerprint());
    store.records.push(record);
    Ok(store.records.last().expect("just pushed"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaceStep {
    /// Confidence reached the threshold; the bound user is the single candidate.
    Candidate { user_id: String, prediction: FacePrediction },
    Rejected { prediction: FacePrediction },
}

/// Top-1 class with confidence `>= tau_face` selects its bound user.
pub fn identify_face(
    store: &EnrollmentStore,
    image: &Image,
    face: &impl FaceIdentifier,
    tau_face: f64,
) -> Result<FaceStep> {
    let prediction = face.predict(image)?;
    if prediction.confidence < tau_face {
        return Ok(FaceStep::Rejected { prediction });
    }
    match store.by_face_class(prediction.label) {
        Some(r) => Ok(FaceStep::Candidate { user_id: r.user_id.clone(), prediction }),
        None => Err(Error::UnmappedClass(prediction.label)),
    }
}

/// Exactly one template comparison: the clip against `user_id` only.
pub fn verify_voice(
    store: &EnrollmentStore,
    user_id: &str,
    clip: &AudioClip,
    voice: &impl VoiceEmbedder,
    tau_voice: f64,
) -> Result<(f64, bool)> {
    if store.get(user_id).is_none() {
        return Err(Error::UnknownUser(user_id.to_string()));
    }
    let probe = voice.embed_clip(clip)?;
    let score = store.compare(user_id, &probe)?;
    Ok((score, score >= tau_voice))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Accept,
    RejectFace,
    RejectVoice,
    Error(Error),
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Accept => "accept",
            Outcome::RejectFace => "reject_face",
            Outcome::RejectVoice => "reject_voice",
            Outcome::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationDecision {
    pub outcome: Outcome,
    pub claimed_identity: Option<String>,
    pub face_label: Option<usize>,
    /// Top-1 face probability; 0 when the face step failed before predicting.
    pub face_confidence: f64,
    pub voice_score: Option<f64>,
    pub thresholds: Thresholds,
}

/// Face identification, then, only for a candidate, one voice verification.
///
/// Precondition failures (empty store, models not matching the store) are
/// returned as `Err`; failures while processing the probe become
/// [`Outcome::Error`].
pub fn authenticate(
    store: &EnrollmentStore,
    image: &Image,
    clip: &AudioClip,
    face: &impl FaceIdentifier,
    voice: &impl VoiceEmbedder,
    thresholds: Thresholds,
) -> Result<VerificationDecision> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    store.check_models(face.fingerprint(), voice.fingerprint())?;
    let mut decision = VerificationDecision {
        outcome: Outcome::RejectFace,
        claimed_identity: None,
        face_label: None,
        face_confidence: 0.0,
        voice_score: None,
        thresholds,
    };
    let (user_id, prediction) = match identify_face(store, image, face, thresholds.face) {
        Err(e) => {
            decision.outcome = Outcome::Error(e);
            return Ok(decision);
        }
        Ok(FaceStep::Rejected { prediction }) => {
            decision.face_label = Some(prediction.label);
            decision.face_confidence = prediction.confidence;
            return Ok(decision);
        }
        Ok(FaceStep::Candidate { user_id, prediction }) => (user_id, prediction),
    };
    decision.face_label = Some(prediction.label);
    decision.face_confidence = prediction.confidence;
    decision.claimed_identity = Some(user_id.clone());
    decision.outcome = match verify_voice(store, &user_id, clip, voice, thresholds.voice) {
        Err(e) => Outcome::Error(e),
        Ok((score, accepted)) => {
            decision.voice_score = Some(score);
            if accepted {
                Outcome::Accept
            } else {
                Outcome::RejectVoice
            }
        }
    };
    Ok(decision)
}

pub const DEFAULT_FACE_FAR: f64 = 0.05;

/// Voice threshold at the EER crossing; face threshold the smallest operating
/// point whose false-accept rate is at most `face_far_target`.
pub fn calibrate_thresholds(face_dev: &ScoreSet, voice_dev: &ScoreSet, face_far_target: f64) -> Result<Thresholds> {
    let voice = compute_eer(voice_dev)?.threshold;
    let face = threshold_for_far(face_dev, face_far_target)?;
    Ok(Thresholds { face, voice })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::cell::Cell;

    struct FixedFace {
        probs: Vec<f64>,
    }

    impl FaceIdentifier for FixedFace {
        fn num_classes(&self) -> usize {
            self.probs.len()
        }
        fn fingerprint(&self) -> u64 {
            1
        }
        fn predict(&self, _: &Image) -> Result<FacePrediction> {
            Ok(FacePrediction::from_probs(self.probs.clone()))
        }
    }

    struct FixedVoice {
        out: Vec<f64>,
        calls: Cell<usize>,
    }

    impl VoiceEmbedder for FixedVoice {
        fn fingerprint(&self) -> u64 {
            2
        }
        fn embed_clip(&self, _: &AudioClip) -> Result<Embedding> {
            self.calls.set(self.calls.get() + 1);
            Embedding::normalize(self.out.clone())
        }
    }

    fn probe() -> (Image, AudioClip) {
        (Image::filled(2, 2, [0.5; 3]), AudioClip::new(vec![0.1; 400], 16_000).unwrap())
    }

    fn one_hot(k: usize, n: usize) -> Vec<f64> {
        (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
    }

    fn enrolled(user: &str, class: usize, voice: &[f64], store: &mut EnrollmentStore) {
        let (img, clip) = probe();
        let face = FixedFace { probs: one_hot(class, 5) };
        let v = FixedVoice { out: voice.to_vec(), calls: Cell::new(0) };
        let req = EnrollRequest {
            user_id: user,
            face_images: core::slice::from_ref(&img),
            voice_clips: core::slice::from_ref(&clip),
            face_class: None,
            enrolled_at: 0,
        };
        enroll(store, &req, &face, &v).unwrap();
    }

    #[test]
    fn template_of_orthogonal_pair() {
        let t = voice_template(&[
            Embedding::normalize(vec![1.0, 0.0]).unwrap(),
            Embedding::normalize(vec![0.0, 1.0]).unwrap(),
        ])
        .unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((t.values()[0] - r).abs() < 1e-12 && (t.values()[1] - r).abs() < 1e-12);
    }

    #[test]
    fn duplicate_and_taken_class() {
        let mut store = EnrollmentStore::new();
        enrolled("alice", 0, &[1.0, 0.0], &mut store);
        let (img, clip) = probe();
        let face = FixedFace { probs: one_hot(0, 5) };
        let v = FixedVoice { out: vec![1.0, 0.0], calls: Cell::new(0) };
        let mut req = EnrollRequest {
            user_id: "alice",
            face_images: core::slice::from_ref(&img),
            voice_clips: core::slice::from_ref(&clip),
            face_class: Some(1),
            enrolled_at: 0,
        };
        assert_eq!(enroll(&mut store, &req, &face, &v).unwrap_err(), Error::Conflict("alice".into()));
        req.user_id = "bob";
        req.face_class = None;
        assert!(matches!(enroll(&mut store, &req, &face, &v), Err(Error::ClassTaken { class: 0, .. })));
    }

    #[test]
    fn decisions() {
        let mut store = EnrollmentStore::new();
        enrolled("a", 0, &[1.0, 0.0], &mut store);
        enrolled("b", 1, &[0.0, 1.0], &mut store);
        let (img, clip) = probe();
        let th = Thresholds { face: 0.5, voice: 0.5 };

        let face_a = FixedFace { probs: one_hot(0, 5) };
        let voice_a = FixedVoice { out: vec![1.0, 0.0], calls: Cell::new(0) };
        let d = authenticate(&store, &img, &clip, &face_a, &voice_a, th).unwrap();
        assert_eq!(d.outcome, Outcome::Accept);
        assert_eq!(d.claimed_identity.as_deref(), Some("a"));
        assert_eq!(d.voice_score, Some(1.0));

        // Face says A, voice matches B.
        let voice_b = FixedVoice { out: vec![0.0, 1.0], calls: Cell::new(0) };
        let d = authenticate(&store, &img, &clip, &face_a, &voice_b, th).unwrap();
        assert_eq!(d.outcome, Outcome::RejectVoice);
        assert_eq!(d.voice_score, Some(0.0));

        let uniform = FixedFace { probs: vec![0.2; 5] };
        store.reset_comparisons();
        let d = authenticate(&store, &img, &clip, &uniform, &voice_a, th).unwrap();
        assert_eq!(d.outcome, Outcome::RejectFace);
        assert_eq!(d.voice_score, None);
        assert_eq!(voice_a.calls.get(), 1, "audio untouched on face rejection");
        assert_eq!(store.comparisons(), 0);

        let unmapped = FixedFace { probs: one_hot(4, 5) };
        let d = authenticate(&store, &img, &clip, &unmapped, &voice_a, th).unwrap();
        assert_eq!(d.outcome, Outcome::Error(Error::UnmappedClass(4)));
    }

    #[test]
    fn tie_at_face_threshold_passes() {
        let mut store = EnrollmentStore::new();
        enrolled("a", 0, &[1.0, 0.0], &mut store);
        let (img, _) = probe();
        let face = FixedFace { probs: vec![0.5, 0.5, 0.0, 0.0, 0.0] };
        assert!(matches!(identify_face(&store, &img, &face, 0.5).unwrap(), FaceStep::Candidate { .. }));
    }

    #[test]
    fn preconditions() {
        let store = EnrollmentStore::new();
        let (img, clip) = probe();
        let face = FixedFace { probs: one_hot(0, 5) };
        let v = FixedVoice { out: vec![1.0], calls: Cell::new(0) };
        let th = Thresholds { face: 0.5, voice: 0.5 };
        assert_eq!(authenticate(&store, &img, &clip, &face, &v, th).unwrap_err(), Error::EmptyStore);

        let mut store = EnrollmentStore::new();
        enrolled("a", 0, &[1.0, 0.0], &mut store);
        let stale = EnrollmentStore::from_parts(Some(99), Some(2), store.records().to_vec()).unwrap();
        assert!(matches!(
            authenticate(&stale, &img, &clip, &face, &v, th),
            Err(Error::FingerprintMismatch { expected: 99, actual: 1 })
        ));
    }

    #[test]
    fn calibration() {
        let voice = ScoreSet::new(vec![0.9, 0.8], vec![0.1, 0.2]).unwrap();
        let face = ScoreSet::new(vec![0.95, 0.9], vec![0.3, 0.6]).unwrap();
        let t = calibrate_thresholds(&face, &voice, 0.0).unwrap();
        assert!(t.voice > 0.2 && t.voice < 0.8);
        assert!(t.face > 0.6);
    }
}
