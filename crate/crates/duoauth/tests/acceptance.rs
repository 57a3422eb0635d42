//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::cell::{Cell, RefCell};
use std::time::Instant;

use duoauth::container::{decode_model, encode_model, Model};
use duoauth::history::{face_history, speaker_history};
use duoauth::store_file::{decode_store, encode_store};
use duoauth_core::audio::{extract_fbank, frame_count, frame_signal, hz_to_mel, vad_filter, AudioClip, FeatureConfig, FeatureMatrix};
use duoauth_core::auth::{
    authenticate, EnrollmentRecord, EnrollmentStore, FaceIdentifier, Outcome, Thresholds, VoiceEmbedder,
};
use duoauth_core::autograd::{Graph, Var};
use duoauth_core::face::{FaceNet, FaceNetSpec, FacePrediction, FaceScale, Image};
use duoauth_core::gradcheck::{eval_scalar, finite_diff_check};
use duoauth_core::metrics::{classification_metrics, compute_eer, confusion, f1_consistent, harmonic_mean, ScoreSet};
use duoauth_core::ops::Padding;
use duoauth_core::speaker::{Embedding, SpeakerNet, SpeakerNetSpec};
use duoauth_core::synth::{face_corpus, silence_then_tone, voice_corpus, FaceCorpusConfig, Split, VoiceCorpusConfig};
use duoauth_core::train::{evaluate_face, train_face_head, train_speaker, LabeledImage, TrainConfig, Utterance};
use duoauth_core::{Result as CoreResult, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1. Parameter budget

fn param_budget() -> Verdict {
    let (mut out, mut errs) = (Vec::new(), Vec::new());
    let code = duoauth::cli::run(["duoauth", "inspect", "--spec", "full"], &mut out, &mut errs);
    ensure(code == 0, || format!("inspect exited {code}: {}", String::from_utf8_lossy(&errs)))?;
    let text = String::from_utf8(out).map_err(err)?;
    let field = |prefix: &str| -> Result<u64, String> {
        let line = text.lines().find(|l| l.split_whitespace().next() == Some(prefix)).ok_or(format!("no `{prefix}` row"))?;
        line.split_whitespace().last().unwrap().parse().map_err(err)
    };
    let (total, affine, conv128) = (field("total")?, field("affine")?, field("Conv128")?);
    // Closed forms: dense 2048 -> 512 with bias; 5x5 conv 64 -> 128 with bias.
    let affine_oracle = 2048 * 512 + 512;
    let conv_oracle = 5 * 5 * 64 * 128 + 128;
    ensure(affine == affine_oracle, || format!("affine {affine} != {affine_oracle}"))?;
    ensure(conv128 == conv_oracle, || format!("Conv128 {conv128} != {conv_oracle}"))?;
    let rel = (total as f64 - 16.8e6).abs() / 16.8e6;
    ensure(rel < 0.02, || format!("total {total} is {:.2}% from 16.8M", rel * 100.0))?;
    Ok(format!("total {total} ({:+.2}% vs 16.8M), affine {affine}, Conv128 {conv128}", (total as f64 / 16.8e6 - 1.0) * 100.0))
}

// 2. Shape chain

fn shape_chain() -> Verdict {
    let spec = SpeakerNetSpec::full();
    let chain = spec.shape_chain(160).map_err(err)?;
    let shapes: Vec<Vec<usize>> = chain.iter().map(|(_, s)| s.clone()).collect();
    let expected: Vec<Vec<usize>> =
        vec![vec![1, 64, 160], vec![64, 32, 80], vec![128, 16, 40], vec![256, 8, 20], vec![512, 4, 10], vec![512, 4], vec![2048], vec![512]];
    ensure(shapes == expected, || format!("chain {shapes:?}"))?;
    let net = SpeakerNet::build(spec, 0).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = (0..64 * 160).map(|_| rng.random_range(-1.0..1.0)).collect();
    let features = FeatureMatrix::from_rows(64, data, 0.010, 0.025).map_err(err)?;
    let e = net.embed(&features).map_err(err)?;
    let norm = e.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    ensure(e.dim() == 512 && (norm - 1.0).abs() < 1e-9, || format!("embedding dim {} norm {norm}", e.dim()))?;
    Ok("[1,64,160] -> [512,4,10] -> 2048 -> 512; full forward gives a unit 512-vector".into())
}

// 3. Gradient correctness

const GRAD_SEEDS: u64 = 20;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn project(g: &mut Graph<'_>, y: Var, r: Var) -> CoreResult<Var> {
    let y = g.flatten(y)?;
    g.dot(y, r)
}

fn worst_error<F>(f: F, make: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor>) -> Result<f64, String>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> CoreResult<Var> + Copy,
{
    let mut worst: f64 = 0.0;
    for seed in 0..GRAD_SEEDS {
        let points = make(&mut ChaCha8Rng::seed_from_u64(seed));
        worst = worst.max(finite_diff_check(f, &points, 1e-5).map_err(err)?);
    }
    Ok(worst)
}

fn triplet_hinge<'g>(g: &mut Graph<'g>, v: &[Var]) -> CoreResult<Var> {
    let a = g.l2_normalize(v[0])?;
    let p = g.l2_normalize(v[1])?;
    let n = g.l2_normalize(v[2])?;
    let an = g.dot(a, n)?;
    let ap = g.dot(a, p)?;
    let d = g.sub(an, ap)?;
    let m = g.add_scalar(d, 0.1);
    Ok(g.relu(m))
}

fn gradients() -> Verdict {
    let results = [
        (
            "conv2d",
            worst_error(
                |g, v| {
                    let y = g.conv2d(v[0], v[1], v[2], (2, 2), Padding::Same)?;
                    project(g, y, v[3])
                },
                |r| vec![random(&[2, 7, 6], r), random(&[3, 2, 5, 5], r), random(&[3], r), random(&[36], r)],
            )?,
        ),
        (
            "dense",
            worst_error(
                |g, v| {
                    let y = g.dense(v[0], v[1], v[2])?;
                    g.dot(y, v[3])
                },
                |r| vec![random(&[6], r), random(&[6, 4], r), random(&[4], r), random(&[4], r)],
            )?,
        ),
        (
            "mean_over_time",
            worst_error(
                |g, v| {
                    let y = g.mean_over_time(v[0])?;
                    project(g, y, v[1])
                },
                |r| vec![random(&[3, 2, 5], r), random(&[6], r)],
            )?,
        ),
        (
            "l2_normalize",
            worst_error(
                |g, v| {
                    let y = g.l2_normalize(v[0])?;
                    g.dot(y, v[1])
                },
                |r| vec![random(&[7], r), random(&[7], r)],
            )?,
        ),
        ("softmax_xent", worst_error(|g, v| g.softmax_xent(v[0], 2), |r| vec![random(&[5], r)])?),
        (
            "triplet_loss",
            worst_error(triplet_hinge, |r| loop {
                let pts = vec![random(&[8], r), random(&[8], r), random(&[8], r)];
                if eval_scalar(&triplet_hinge, &pts).unwrap() > 1e-3 {
                    break pts;
                }
            })?,
        ),
    ];
    let bad: Vec<String> = results.iter().filter(|r| r.1 >= 1e-4).map(|(n, e)| format!("{n} {e:.2e}")).collect();
    ensure(bad.is_empty(), || format!("relative error >= 1e-4: {}", bad.join(", ")))?;
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(format!("6 ops x {GRAD_SEEDS} seeds, worst relative error {worst:.2e}"))
}

// 4. EER oracle equivalence

/// Every distinct score as a cut, rates counted directly, linear
/// interpolation at the first cut where FAR no longer exceeds FRR.
fn brute_force_eer(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut cuts: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let rates = |reject_up_to: Option<f64>| {
        let accepted = |s: f64| reject_up_to.is_none_or(|c| s > c);
        let far = impostor.iter().filter(|&&s| accepted(s)).count() as f64 / impostor.len() as f64;
        let frr = genuine.iter().filter(|&&s| !accepted(s)).count() as f64 / genuine.len() as f64;
        (far, frr)
    };
    let mut prev = rates(None);
    for c in cuts {
        let cur = rates(Some(c));
        if cur.0 - cur.1 <= 0.0 {
            let (dp, dc) = (prev.0 - prev.1, cur.0 - cur.1);
            return prev.0 + dp / (dp - dc) * (cur.0 - prev.0);
        }
        prev = cur;
    }
    unreachable!("the last cut rejects everything")
}

fn eer_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let grid = if rng.random_bool(0.3) { Some(rng.random_range(2..12) as f64) } else { None };
        let sep = rng.random_range(-0.3..0.8);
        let mut draw = |mu: f64| -> Vec<f64> {
            let n = rng.random_range(1..=200);
            (0..n)
                .map(|_| {
                    let v: f64 = mu + rng.random_range(-0.6..0.6);
                    grid.map_or(v, |k| (v * k).round() / k)
                })
                .collect()
        };
        let (genuine, impostor) = (draw(sep), draw(0.0));
        let got = compute_eer(&ScoreSet::new(genuine.clone(), impostor.clone()).map_err(err)?).map_err(err)?.eer;
        let want = brute_force_eer(&genuine, &impostor);
        worst = worst.max((got - want).abs());
        ensure(worst <= 1e-9, || format!("set {i}: {got} vs brute force {want}"))?;
    }
    Ok(format!("1000 sets, max |difference| {worst:.1e}"))
}

// 5. Toy speaker training

fn voice_data(cfg: &VoiceCorpusConfig) -> Result<(Vec<Utterance>, Vec<Utterance>), String> {
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for item in voice_corpus(cfg).map_err(err)? {
        let label = item.label[3..].parse().map_err(err)?;
        let u = Utterance { label, features: extract_fbank(&item.item, &FeatureConfig::default()).map_err(err)? };
        if item.split == Split::Train {
            train.push(u)
        } else {
            valid.push(u)
        }
    }
    Ok((train, valid))
}

fn speaker_training() -> Verdict {
    let (train, valid) = voice_data(&VoiceCorpusConfig::default())?;
    let cfg = TrainConfig { minibatch: 32, margin: 0.1, epochs: 1000, max_steps: Some(200), ..TrainConfig::default() };
    let net = SpeakerNet::build(SpeakerNetSpec::toy(), 0).map_err(err)?;
    let out = train_speaker(net, &train, &valid, &cfg).map_err(|f| f.error.to_string())?;
    let eers: Vec<f64> = out.history.iter().filter_map(|h| h.val_eer).collect();
    ensure(eers.len() == out.history.len() && eers.len() >= 3, || "validation EER missing from history".into())?;
    let last = &out.history[out.history.len() - 1];
    let tail = &eers[eers.len() - 3..];
    let summary = format!("val EER {:.4} after {} steps, last three {:.4?}", last.val_eer.unwrap(), last.steps, tail);
    ensure(last.steps <= 200, || format!("{summary}: too many steps"))?;
    ensure(last.val_eer.unwrap() < 0.05, || summary.clone())?;
    ensure(tail[1] <= tail[0] && tail[2] <= tail[1], || format!("{summary}: not non-increasing"))?;
    Ok(summary)
}

// 6. Toy face training

fn face_data(cfg: &FaceCorpusConfig) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>), String> {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for item in face_corpus(cfg).map_err(err)? {
        let x = LabeledImage { label: item.label[2..].parse().map_err(err)?, image: item.item };
        if item.split == Split::Train {
            train.push(x)
        } else {
            test.push(x)
        }
    }
    Ok((train, test))
}

fn face_training() -> Verdict {
    let (train, test) = face_data(&FaceCorpusConfig::default())?;
    let cfg = TrainConfig { minibatch: 16, epochs: 30, ..TrainConfig::default() };
    let net = FaceNet::build(FaceNetSpec::new(5, FaceScale::Toy), 0).map_err(err)?;
    let model = train_face_head(net, &train, &[], &cfg).map_err(|f| f.error.to_string())?.model;
    let (_, accuracy, preds) = evaluate_face(&model, &test).map_err(err)?;
    let truth: Vec<usize> = test.iter().map(|x| x.label).collect();
    let report = classification_metrics(&confusion(&preds, &truth, Some(5)).map_err(err)?).map_err(err)?;
    for (k, c) in report.per_class.iter().enumerate() {
        let hm = harmonic_mean(c.precision, c.recall);
        ensure((c.f1 - hm).abs() <= 1e-9, || format!("class {k}: F1 {} vs harmonic mean {hm}", c.f1))?;
    }
    let mean_f1 = report.per_class.iter().map(|c| c.f1).sum::<f64>() / report.per_class.len() as f64;
    ensure((report.macro_f1 - mean_f1).abs() <= 1e-9, || format!("macro-F1 {} vs mean {mean_f1}", report.macro_f1))?;
    ensure((report.accuracy - accuracy).abs() <= 1e-12, || "report accuracy disagrees with evaluation".into())?;
    // Reported tuple: precision 96.317%, recall 95.153%, F1 95.732%.
    let reported_hm = harmonic_mean(96.317, 95.153);
    ensure(f1_consistent(96.317, 95.153, 95.732, 0.5), || format!("reported F1 95.732 vs harmonic mean {reported_hm:.3}"))?;
    ensure(accuracy >= 0.90, || format!("held-out accuracy {accuracy:.3}"))?;
    Ok(format!(
        "held-out accuracy {accuracy:.3} on {} images, macro-F1 {:.3}; reported F1 95.732 vs HM {reported_hm:.3}",
        test.len(),
        report.macro_f1
    ))
}

// 7. Gating

struct ScriptedFace {
    classes: usize,
    probs: Vec<f64>,
}

impl FaceIdentifier for ScriptedFace {
    fn num_classes(&self) -> usize {
        self.classes
    }
    fn fingerprint(&self) -> u64 {
        11
    }
    fn predict(&self, _: &Image) -> CoreResult<FacePrediction> {
        Ok(FacePrediction::from_probs(self.probs.clone()))
    }
}

struct ScriptedVoice {
    next: RefCell<Vec<f64>>,
    calls: Cell<usize>,
}

impl VoiceEmbedder for ScriptedVoice {
    fn fingerprint(&self) -> u64 {
        22
    }
    fn embed_clip(&self, _: &AudioClip) -> CoreResult<Embedding> {
        self.calls.set(self.calls.get() + 1);
        Embedding::normalize(self.next.borrow().clone())
    }
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-3 {
            return v;
        }
    }
}

fn gating() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let image = Image::filled(4, 4, [0.5; 3]);
    let clip = AudioClip::new(vec![0.1; 800], 16_000).map_err(err)?;
    let (mut rejected, mut verified) = (0, 0);
    for call in 0..500 {
        let users = rng.random_range(2..=50);
        let classes = users + rng.random_range(0..3);
        let records = (0..users)
            .map(|u| EnrollmentRecord {
                user_id: format!("user{u}"),
                face_class: u,
                voice_template: Embedding::normalize(unit(&mut rng, 8)).unwrap(),
                enrolled_at: 0,
                sample_counts: (1, 1),
            })
            .collect();
        let store = EnrollmentStore::from_parts(Some(11), Some(22), records).map_err(err)?;
        let label = rng.random_range(0..users);
        let peak = rng.random_range(1.0 / classes as f64 + 1e-3..1.0);
        let rest = (1.0 - peak) / (classes - 1) as f64;
        let face = ScriptedFace { classes, probs: (0..classes).map(|k| if k == label { peak } else { rest }).collect() };
        let voice = ScriptedVoice { next: RefCell::new(unit(&mut rng, 8)), calls: Cell::new(0) };
        let th = Thresholds { face: rng.random_range(0.3..0.9), voice: rng.random_range(-0.5..0.9) };
        let d = authenticate(&store, &image, &clip, &face, &voice, th).map_err(err)?;
        let expected = if d.outcome == Outcome::RejectFace { 0 } else { 1 };
        ensure(store.comparisons() == expected, || format!("call {call}: {} comparisons after {:?}", store.comparisons(), d.outcome))?;
        if expected == 0 {
            rejected += 1;
        } else {
            verified += 1;
        }
    }
    ensure(rejected > 0 && verified > 0, || "both branches must be exercised".into())?;
    Ok(format!("500 calls: {rejected} face rejections with 0 comparisons, {verified} with exactly 1"))
}

// 8. Determinism and persistence

fn determinism() -> Verdict {
    let vcfg = VoiceCorpusConfig { speakers: 3, train_per_speaker: 3, valid_per_speaker: 2, duration_s: 0.8, ..Default::default() };
    let (train, valid) = voice_data(&vcfg)?;
    let scfg = TrainConfig { minibatch: 6, speakers_per_batch: 3, chunk_frames: 32, epochs: 2, seed: 4, ..Default::default() };
    let run_speaker = || -> Result<(Vec<u8>, String), String> {
        let out = train_speaker(SpeakerNet::build(SpeakerNetSpec::toy(), 1).map_err(err)?, &train, &valid, &scfg)
            .map_err(|f| f.error.to_string())?;
        Ok((encode_model(&Model::Speaker(out.model)).map_err(err)?, speaker_history(&out.history)))
    };
    let (a, b) = (run_speaker()?, run_speaker()?);
    ensure(a == b, || "speaker training runs differ".into())?;

    let (ftrain, ftest) = face_data(&FaceCorpusConfig { classes: 3, train_per_class: 4, test_per_class: 2, ..Default::default() })?;
    let fcfg = TrainConfig { minibatch: 4, epochs: 2, seed: 3, ..Default::default() };
    let run_face = || -> Result<(Vec<u8>, String), String> {
        let out = train_face_head(FaceNet::build(FaceNetSpec::new(3, FaceScale::Toy), 2).map_err(err)?, &ftrain, &ftest, &fcfg)
            .map_err(|f| f.error.to_string())?;
        Ok((encode_model(&Model::Face(out.model)).map_err(err)?, face_history(&out.history)))
    };
    let (fa, fb) = (run_face()?, run_face()?);
    ensure(fa == fb, || "face training runs differ".into())?;

    let mut flips = 0;
    for bytes in [&a.0, &fa.0] {
        let model = decode_model(bytes).map_err(err)?;
        ensure(&encode_model(&model).map_err(err)? == bytes, || "model round trip not byte-identical".into())?;
        let step = (bytes.len() / 2000).max(1);
        for pos in (0..bytes.len()).step_by(step) {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x5a;
            ensure(decode_model(&bad).is_err(), || format!("model corruption at byte {pos} undetected"))?;
            flips += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records = (0..6)
        .map(|u| EnrollmentRecord {
            user_id: format!("user-{u}"),
            face_class: u,
            voice_template: Embedding::normalize(unit(&mut rng, 64)).unwrap(),
            enrolled_at: 1_700_000_000 + u as u64,
            sample_counts: (2, 3),
        })
        .collect();
    let store = EnrollmentStore::from_parts(Some(1), Some(2), records).map_err(err)?;
    let bytes = encode_store(&store);
    ensure(decode_store(&bytes).map_err(err)? == store, || "store round trip lost data".into())?;
    for pos in 0..bytes.len() {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x01;
        ensure(decode_store(&bad).is_err(), || format!("store corruption at byte {pos} undetected"))?;
        flips += 1;
    }
    Ok(format!("identical reruns byte-identical; lossless round trips; {flips} single-byte corruptions all rejected"))
}

// 9. Front-end

fn front_end() -> Verdict {
    let mel = hz_to_mel(1000.0);
    ensure((mel - 1000.0).abs() <= 0.1, || format!("mel(1000 Hz) = {mel}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..2000 {
        let n = rng.random_range(1..6000);
        let h = rng.random_range(1..400);
        let w = rng.random_range(h..800);
        let fits = (0..).map(|k| k * h + w).take_while(|&end| end <= n).count();
        let formula = frame_count(n, w, h);
        ensure(formula == (fits > 0).then_some(fits), || format!("n={n} w={w} h={h}: {formula:?} vs {fits}"))?;
        let clip = AudioClip::new(vec![0.25; n], 16_000).map_err(err)?;
        let framed = frame_signal(&clip, w as f64 / 16_000.0, h as f64 / 16_000.0).ok().map(|f| f.len());
        ensure(framed == formula, || format!("n={n} w={w} h={h}: framing gave {framed:?}"))?;
    }

    let cfg = VoiceCorpusConfig { speakers: 2, train_per_speaker: 1, valid_per_speaker: 0, ..Default::default() };
    let clip = voice_corpus(&cfg).map_err(err)?.swap_remove(0).item;
    let base = extract_fbank(&clip, &FeatureConfig::default()).map_err(err)?;
    let mut worst: f64 = 0.0;
    for gain in [0.05, 0.3, 1.7] {
        let scaled = extract_fbank(&clip.scaled(gain).map_err(err)?, &FeatureConfig::default()).map_err(err)?;
        ensure(scaled.frames() == base.frames(), || format!("gain {gain} changed the VAD decision"))?;
        worst = base.data().iter().zip(scaled.data()).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    ensure(worst < 1e-6, || format!("amplitude changes features by {worst:e}"))?;

    let half = silence_then_tone(0.5, 0.5, 16_000).map_err(err)?;
    let frames = frame_signal(&half, 0.025, 0.010).map_err(err)?;
    let keep = vad_filter(&frames, 30.0).map_err(err)?;
    let silent: Vec<usize> = (0..frames.len()).filter(|&i| frames[i].iter().all(|&x| x == 0.0)).collect();
    ensure(!silent.is_empty() && silent.iter().all(|&i| !keep[i]), || "a pure-silence frame survived VAD".into())?;
    Ok(format!(
        "mel(1000) = {mel:.4}; 2000 framing cases; gain invariance {worst:.1e}; {} silent frames all dropped",
        silent.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("parameter budget", param_budget),
        ("shape chain", shape_chain),
        ("gradient correctness", gradients),
        ("EER oracle equivalence", eer_oracle),
        ("toy speaker training", speaker_training),
        ("toy face training", face_training),
        ("gating", gating),
        ("determinism and persistence", determinism),
        ("front-end", front_end),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = f();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} [{secs:.1}s]: {detail}", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
