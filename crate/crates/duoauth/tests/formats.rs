use duoauth::container::{decode_model, encode_model, Container, Model, ModelKind};
use duoauth::pnm::{parse_pnm, write_pnm};
use duoauth::store_file::{decode_store, encode_store, load_or_new, load_store, save_store};
use duoauth::wav::{parse_wav, write_wav};
use duoauth::Error;
use duoauth_core::audio::AudioClip;
use duoauth_core::auth::{EnrollmentRecord, EnrollmentStore};
use duoauth_core::face::{FaceNet, FaceNetSpec, FaceScale, Image};
use duoauth_core::speaker::{Embedding, SpeakerNet, SpeakerNetSpec};
use proptest::prelude::*;

fn tiny_speaker() -> Model {
    Model::Speaker(SpeakerNet::build(SpeakerNetSpec::scaled(64), 3).unwrap())
}

fn tiny_face() -> Model {
    let net = FaceNet::build(FaceNetSpec::new(3, FaceScale::Toy), 4).unwrap();
    Model::Face(net.with_labels(vec!["ann".into(), "bo".into(), "cy".into()]).unwrap())
}

#[test]
fn containers_round_trip_byte_for_byte() {
    for model in [tiny_speaker(), tiny_face()] {
        let bytes = encode_model(&model).unwrap();
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.fingerprint(), model.fingerprint());
        assert_eq!(encode_model(&back).unwrap(), bytes);
    }
}

#[test]
fn truncation_is_rejected() {
    let bytes = encode_model(&tiny_speaker()).unwrap();
    let n = bytes.len();
    for len in (0..64).chain((64..n).step_by(211)).chain(n - 64..n) {
        let err = decode_model(&bytes[..len]).unwrap_err();
        assert!(matches!(err, Error::Format(_) | Error::Integrity(_)), "len {len}: {err}");
    }
}

#[test]
fn every_single_byte_corruption_is_detected() {
    let bytes = encode_model(&tiny_speaker()).unwrap();
    let step = (bytes.len() / 1500).max(1);
    for pos in (0..bytes.len()).step_by(step).chain([4, 5, bytes.len() - 1]) {
        for flip in [0x01u8, 0x80, 0xff] {
            let mut bad = bytes.clone();
            bad[pos] ^= flip;
            assert!(decode_model(&bad).is_err(), "flip {flip:#x} at byte {pos} went unnoticed");
        }
    }
}

/// Re-seals a modified body with a valid checksum so checks behind the CRC
/// can be reached.
fn reseal(mut body: Vec<u8>) -> Vec<u8> {
    body.truncate(body.len() - 8);
    let crc = crc::Crc::<u64>::new(&crc::CRC_64_XZ).checksum(&body);
    body.extend_from_slice(&crc.to_le_bytes());
    body
}

#[test]
fn version_and_spec_mismatches() {
    let mut bytes = encode_model(&tiny_speaker()).unwrap();
    bytes[4] = 2;
    assert!(matches!(decode_model(&reseal(bytes)).unwrap_err(), Error::Version { found: 2, expected: 1 }));

    // Manifest claims wider channels than the stored tensors.
    let Model::Speaker(net) = tiny_speaker() else { unreachable!() };
    let c = Container { kind: ModelKind::Speaker, manifest: SpeakerNetSpec::toy().to_manifest(), params: net.params().clone() };
    let err = decode_model(&c.encode().unwrap()).unwrap_err();
    assert_eq!(err.exit_code(), 8, "{err}");

    // A speaker manifest in a face container.
    let c = Container { kind: ModelKind::Face, manifest: net.manifest(), params: net.params().clone() };
    assert!(decode_model(&c.encode().unwrap()).is_err());
}

fn record(user: usize, dim: usize, seed: u64) -> EnrollmentRecord {
    let values: Vec<f64> = (0..dim).map(|i| ((seed as f64 + 1.0) * (i as f64 + 0.37)).sin()).collect();
    EnrollmentRecord {
        user_id: format!("user-{user}"),
        face_class: user,
        voice_template: Embedding::normalize(values).unwrap(),
        enrolled_at: 1_700_000_000 + seed,
        sample_counts: (user % 4 + 1, user % 3 + 1),
    }
}

fn store(users: usize, dim: usize, seed: u64) -> EnrollmentStore {
    let records = (0..users).map(|u| record(u, dim, seed.wrapping_add(u as u64))).collect();
    let fps = if users == 0 { (None, None) } else { (Some(seed), Some(!seed)) };
    EnrollmentStore::from_parts(fps.0, fps.1, records).unwrap()
}

proptest! {
    #[test]
    fn store_round_trip_is_lossless(users in 0usize..12, dim in 1usize..40, seed in any::<u64>()) {
        let s = store(users, dim, seed);
        let bytes = encode_store(&s);
        let back = decode_store(&bytes).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(encode_store(&back), bytes);
    }

    #[test]
    fn store_byte_corruption_is_detected(pos_frac in 0.0f64..1.0, flip in 1u8..=255) {
        let bytes = encode_store(&store(3, 16, 9));
        let pos = ((bytes.len() - 1) as f64 * pos_frac) as usize;
        let mut bad = bytes.clone();
        bad[pos] ^= flip;
        prop_assert!(decode_store(&bad).is_err());
    }

    #[test]
    fn wav_round_trip(samples in prop::collection::vec(-32768i16..=32767, 1..2000), rate in 1u32..96_000) {
        let clip = AudioClip::new(samples.iter().map(|&s| s as f64 / 32768.0).collect(), rate).unwrap();
        let bytes = write_wav(&clip);
        let back = parse_wav(&bytes).unwrap();
        prop_assert_eq!(back.samples(), clip.samples());
        prop_assert_eq!(back.sample_rate(), rate);
        prop_assert_eq!(write_wav(&back), bytes);
    }

    #[test]
    fn pnm_round_trip(h in 1usize..20, w in 1usize..20, grey in any::<bool>(), seed in any::<u64>()) {
        let c = if grey { 1 } else { 3 };
        let px: Vec<f64> = (0..h * w * c).map(|i| ((i as u64 ^ seed) % 256) as f64 / 255.0).collect();
        let img = Image::new(h, w, c, px).unwrap();
        let back = parse_pnm(&write_pnm(&img)).unwrap();
        prop_assert_eq!(back.pixels(), img.pixels());
        prop_assert_eq!(back.channels(), c);
    }
}

#[test]
fn store_truncation_and_version() {
    let bytes = encode_store(&store(2, 8, 1));
    for len in 0..bytes.len() {
        assert!(decode_store(&bytes[..len]).is_err(), "truncated to {len}");
    }
    let text = String::from_utf8_lossy(&bytes).replacen("duoauth-store 1", "duoauth-store 2", 1);
    let err = decode_store(text.as_bytes()).unwrap_err();
    assert!(matches!(err, Error::Version { found: 2, expected: 1 }), "{err}");
}

#[test]
fn store_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("users.store");
    assert!(load_or_new(&path).unwrap().is_empty());
    assert_eq!(load_store(&path).unwrap_err().exit_code(), 3);
    let s = store(4, 12, 77);
    save_store(&s, &path).unwrap();
    assert_eq!(load_store(&path).unwrap(), s);
    assert_eq!(load_or_new(&path).unwrap(), s);
}
