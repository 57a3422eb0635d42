use duoauth_core::audio::{extract_fbank, FeatureConfig};
use duoauth_core::face::{FaceNet, FaceNetSpec, FaceScale};
use duoauth_core::speaker::{SpeakerNet, SpeakerNetSpec};
use duoauth_core::synth::{face_corpus, voice_corpus, FaceCorpusConfig, Split, VoiceCorpusConfig};
use duoauth_core::train::{train_face_head, train_speaker, LabeledImage, TrainConfig, Utterance};
use duoauth_core::Error;

fn tiny_voice() -> (Vec<Utterance>, Vec<Utterance>) {
    let cfg = VoiceCorpusConfig { speakers: 3, train_per_speaker: 3, valid_per_speaker: 2, duration_s: 0.8, ..Default::default() };
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for item in voice_corpus(&cfg).unwrap() {
        let label = item.label[3..].parse().unwrap();
        let u = Utterance { label, features: extract_fbank(&item.item, &FeatureConfig::default()).unwrap() };
        match item.split {
            Split::Train => train.push(u),
            _ => valid.push(u),
        }
    }
    (train, valid)
}

fn tiny_speaker_config() -> TrainConfig {
    TrainConfig { minibatch: 6, speakers_per_batch: 3, chunk_frames: 32, epochs: 2, seed: 4, ..Default::default() }
}

#[test]
fn speaker_training_is_a_pure_function_of_its_inputs() {
    let (train, valid) = tiny_voice();
    let cfg = tiny_speaker_config();
    let run = || train_speaker(SpeakerNet::build(SpeakerNetSpec::toy(), 1).unwrap(), &train, &valid, &cfg).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.fingerprint(), b.model.fingerprint());
    assert_eq!(a.history.len(), 2);
    assert_eq!(a.history[1].steps, 2 * train.len().div_ceil(cfg.minibatch));
    assert!(a.history.iter().all(|h| h.val_eer.is_some()));

    let other = TrainConfig { seed: 5, ..cfg };
    let c = train_speaker(SpeakerNet::build(SpeakerNetSpec::toy(), 1).unwrap(), &train, &valid, &other).unwrap();
    assert_ne!(a.model.fingerprint(), c.model.fingerprint());
}

#[test]
fn max_steps_caps_training() {
    let (train, valid) = tiny_voice();
    let cfg = TrainConfig { epochs: 50, max_steps: Some(3), ..tiny_speaker_config() };
    let out = train_speaker(SpeakerNet::build(SpeakerNetSpec::toy(), 1).unwrap(), &train, &valid, &cfg).unwrap();
    assert_eq!(out.history.last().unwrap().steps, 3);
}

#[test]
fn speaker_training_rejects_degenerate_data() {
    let (train, valid) = tiny_voice();
    let net = || SpeakerNet::build(SpeakerNetSpec::toy(), 1).unwrap();
    let one_speaker: Vec<Utterance> = train.iter().filter(|u| u.label == 0).cloned().collect();
    let err = train_speaker(net(), &one_speaker, &valid, &tiny_speaker_config()).unwrap_err();
    assert!(matches!(err.error, Error::Contract(_)), "{:?}", err.error);
    assert!(err.checkpoint.is_none());

    let mut short = train.clone();
    short[0].features = short[0].features.slice_frames(0, 8).unwrap();
    let err = train_speaker(net(), &short, &valid, &tiny_speaker_config()).unwrap_err();
    assert!(matches!(err.error, Error::TooShort { needed: 16, got: 8 }));

    let bad = TrainConfig { margin: 0.0, ..tiny_speaker_config() };
    assert!(matches!(train_speaker(net(), &train, &valid, &bad).unwrap_err().error, Error::Config(_)));
}

fn tiny_faces() -> (Vec<LabeledImage>, Vec<LabeledImage>) {
    let cfg = FaceCorpusConfig { classes: 3, train_per_class: 4, test_per_class: 2, ..Default::default() };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for item in face_corpus(&cfg).unwrap() {
        let x = LabeledImage { image: item.item, label: item.label[2..].parse().unwrap() };
        match item.split {
            Split::Train => train.push(x),
            _ => test.push(x),
        }
    }
    (train, test)
}

#[test]
fn face_training_is_deterministic_and_frozen_trunk_stays_fixed() {
    let (train, test) = tiny_faces();
    let cfg = TrainConfig { minibatch: 4, epochs: 2, seed: 3, ..Default::default() };
    let net = || FaceNet::build(FaceNetSpec::new(3, FaceScale::Toy), 2).unwrap();
    let a = train_face_head(net(), &train, &test, &cfg).unwrap();
    let b = train_face_head(net(), &train, &test, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.fingerprint(), b.model.fingerprint());

    let frozen = train_face_head(net(), &train, &test, &TrainConfig { freeze_trunk: true, ..cfg }).unwrap();
    let start = net();
    for (name, t) in start.params().iter() {
        let after = frozen.model.params().get(name).unwrap();
        if name.starts_with("block") {
            assert_eq!(t, after, "{name} moved with a frozen trunk");
        }
    }
    assert_ne!(start.params().get("head.fc2.weight"), frozen.model.params().get("head.fc2.weight"));
}
