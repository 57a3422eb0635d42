//! Command dispatch. [`run`] never panics on bad input and never calls
//! `process::exit`; it returns the exit status so tests can drive it.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use duoauth_core::audio::{AudioClip, FbankExtractor, FeatureConfig, FeatureMatrix};
use duoauth_core::auth::{
    authenticate, calibrate_thresholds, enroll, EnrollRequest, Outcome, VerificationDecision, VoicePipeline,
};
use duoauth_core::face::{expand_dataset, AugmentConfig, FaceNet, FaceNetSpec, FaceScale, Image};
use duoauth_core::metrics::{classification_metrics, compute_eer, confusion, det_curve, pair_accuracy, ScoreSet};
use duoauth_core::speaker::{cosine_similarity, SpeakerNet, SpeakerNetSpec};
use duoauth_core::synth::{face_corpus, voice_corpus, FaceCorpusConfig, Split, VoiceCorpusConfig};
use duoauth_core::train::{train_face_head, train_speaker, LabeledImage, TrainFailure, Utterance};

use crate::config::{RunConfig, Scale};
use crate::container::{load_face, load_model, load_speaker, save_model, Model};
use crate::detector::load_face_image;
use crate::error::{Error, Result, EXIT_CODES};
use crate::history::{face_history, feature_dump, speaker_history};
use crate::manifest::Manifest;
use crate::pnm::write_pnm;
use crate::scores::{load_scores, render_det, render_scores};
use crate::store_file::{load_or_new, load_store, save_store};
use crate::wav::{parse_wav, write_wav};

#[derive(Debug, Parser)]
#[command(name = "duoauth", version, about = "Face-then-voice two-step biometric verification", after_help = exit_code_help())]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set speaker.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

fn exit_code_help() -> String {
    let mut s = String::from("Exit codes:\n");
    for (code, what) in EXIT_CODES {
        s.push_str(&format!("  {code:>2}  {what}\n"));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpecArg {
    Full,
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusKind {
    Voice,
    Face,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the normalized filterbank features of a WAV file.
    Features {
        wav: PathBuf,
        /// Output file (default: standard output).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train the speaker embedder with triplet loss.
    TrainSpeaker {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for model.bgm, history.tsv and config.resolved.
        #[arg(long)]
        out: PathBuf,
        /// Continue from an existing speaker model instead of a fresh one.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Train the face classifier with cross-entropy.
    TrainFace {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Equal error rate from a score file, or from a speaker model over a manifest split.
    EvalEer {
        #[arg(long, conflicts_with_all = ["model", "manifest"])]
        scores: Option<PathBuf>,
        #[arg(long, requires = "manifest")]
        model: Option<PathBuf>,
        #[arg(long, requires = "model")]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Write the DET curve as a TSV table.
        #[arg(long)]
        det: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        det_points: usize,
        /// Write the pair scores (score-file format).
        #[arg(long)]
        write_scores: Option<PathBuf>,
    },
    /// Confusion matrix and precision/recall/F1 of a face model over a manifest split.
    EvalFace {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Directory for confusion.tsv and metrics.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write top-1 confidences as scores (genuine = correct prediction).
        #[arg(long)]
        write_scores: Option<PathBuf>,
    },
    /// Enroll a user: bind a face class and store a voice template.
    Enroll {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        face_model: PathBuf,
        #[arg(long)]
        voice_model: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long = "image", required = true)]
        images: Vec<PathBuf>,
        #[arg(long = "clip", required = true)]
        clips: Vec<PathBuf>,
        /// Face class (index or label); default is the majority prediction over the images.
        #[arg(long)]
        class: Option<String>,
        /// Enrollment time in Unix seconds (default: now).
        #[arg(long)]
        timestamp: Option<u64>,
    },
    /// Authenticate one face image and one voice clip.
    Verify {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        face_model: PathBuf,
        #[arg(long)]
        voice_model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        clip: PathBuf,
    },
    /// Pick thresholds from development score files.
    Calibrate {
        #[arg(long)]
        face_scores: PathBuf,
        #[arg(long)]
        voice_scores: PathBuf,
        /// Write the thresholds as a config fragment.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Per-layer parameter counts of a model file or a built-in speaker spec.
    Inspect {
        #[arg(long, conflicts_with = "spec")]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        spec: Option<SpecArg>,
        /// Input length used for the shape chain.
        #[arg(long, default_value_t = 160)]
        frames: usize,
    },
    /// Write a deterministic toy corpus and its manifest.
    Synth {
        #[arg(value_enum)]
        kind: CorpusKind,
        #[arg(long)]
        out: PathBuf,
        /// Speakers or face classes (default 8 voices, 5 faces).
        #[arg(long)]
        classes: Option<usize>,
        /// Training items per class (default 24 voices, 12 faces).
        #[arg(long)]
        train: Option<usize>,
        /// Held-out items per class: the valid split for voices, test for faces (default 4 and 8).
        #[arg(long)]
        held_out: Option<usize>,
        /// Utterance length in seconds (voices only).
        #[arg(long)]
        duration: Option<f64>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

pub fn read_clip(path: &Path) -> Result<AudioClip> {
    parse_wav(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Extractors are cached per sample rate.
struct Features {
    config: FeatureConfig,
    by_rate: BTreeMap<u32, FbankExtractor>,
}

impl Features {
    fn new(config: FeatureConfig) -> Self {
        Features { config, by_rate: BTreeMap::new() }
    }

    fn extract(&mut self, clip: &AudioClip) -> Result<FeatureMatrix> {
        let rate = clip.sample_rate();
        if !self.by_rate.contains_key(&rate) {
            self.by_rate.insert(rate, FbankExtractor::new(self.config, rate)?);
        }
        Ok(self.by_rate[&rate].extract(clip)?)
    }

    fn load(&mut self, path: &Path) -> Result<FeatureMatrix> {
        self.extract(&read_clip(path)?)
    }
}

fn speaker_spec(cfg: &RunConfig) -> SpeakerNetSpec {
    match cfg.scale {
        Scale::Toy => SpeakerNetSpec::toy(),
        Scale::Full => SpeakerNetSpec::full(),
    }
}

fn face_scale(cfg: &RunConfig) -> FaceScale {
    match cfg.scale {
        Scale::Toy => FaceScale::Toy,
        Scale::Full => FaceScale::Full,
    }
}

fn label_index(labels: &[String], label: &str) -> Result<usize> {
    labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::Format(format!("label `{label}` is not one of the model's classes")))
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Features { wav, out: dest } => {
            let dump = feature_dump(&Features::new(cfg.features).load(&wav)?);
            match dest {
                Some(p) => write_file(&p, dump)?,
                None => emit(out, &dump)?,
            }
        }
        Command::TrainSpeaker { manifest, out: dir, init } => cmd_train_speaker(&cfg, &manifest, &dir, init.as_deref(), out)?,
        Command::TrainFace { manifest, out: dir } => cmd_train_face(&cfg, &manifest, &dir, out)?,
        Command::EvalEer { scores, model, manifest, split, det, det_points, write_scores } => {
            let set = match (scores, model, manifest) {
                (Some(path), _, _) => load_scores(&path)?,
                (None, Some(model), Some(manifest)) => speaker_scores(&cfg, &model, &manifest, split.into())?,
                _ => return Err(Error::Usage("eval-eer needs --scores, or --model with --manifest".into())),
            };
            let r = compute_eer(&set)?;
            emit(
                out,
                &format!(
                    "genuine_pairs\t{}\nimpostor_pairs\t{}\neer\t{}\nthreshold\t{}\npair_accuracy\t{}\n",
                    set.genuine.len(),
                    set.impostor.len(),
                    r.eer,
                    r.threshold,
                    pair_accuracy(&set, r.threshold)
                ),
            )?;
            if let Some(p) = det {
                write_file(&p, render_det(&det_curve(&set, det_points)?))?;
            }
            if let Some(p) = write_scores {
                write_file(&p, render_scores(&set))?;
            }
        }
        Command::EvalFace { model, manifest, split, out: dir, write_scores } => {
            cmd_eval_face(&cfg, &model, &manifest, split.into(), dir.as_deref(), write_scores.as_deref(), out)?
        }
        Command::Enroll { store, face_model, voice_model, user, images, clips, class, timestamp } => {
            let face = load_face(&face_model)?;
            let voice = load_speaker(&voice_model)?;
            let mut st = load_or_new(&store)?;
            let imgs = images
                .iter()
                .map(|p| load_face_image(p, face.spec().input_hw, cfg.detector.as_deref()))
                .collect::<Result<Vec<_>>>()?;
            let clips = clips.iter().map(|p| read_clip(p)).collect::<Result<Vec<_>>>()?;
            let face_class = match class {
                None => None,
                Some(c) => Some(match c.parse::<usize>() {
                    Ok(k) => k,
                    Err(_) => label_index(face.labels(), &c)?,
                }),
            };
            let enrolled_at = timestamp.unwrap_or_else(|| {
                SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
            });
            let request = EnrollRequest { user_id: &user, face_images: &imgs, voice_clips: &clips, face_class, enrolled_at };
            let pipeline = VoicePipeline { net: &voice, features: cfg.features };
            let record = enroll(&mut st, &request, &face, &pipeline)?.clone();
            save_store(&st, &store)?;
            emit(
                out,
                &format!(
                    "enrolled\t{}\nface_class\t{} ({})\nfaces\t{}\nclips\t{}\nusers\t{}\n",
                    record.user_id,
                    record.face_class,
                    face.labels()[record.face_class],
                    record.sample_counts.0,
                    record.sample_counts.1,
                    st.len()
                ),
            )?;
        }
        Command::Verify { store, face_model, voice_model, image, clip } => {
            let face = load_face(&face_model)?;
            let voice = load_speaker(&voice_model)?;
            let st = load_store(&store)?;
            let img = load_face_image(&image, face.spec().input_hw, cfg.detector.as_deref())?;
            let clip = read_clip(&clip)?;
            let pipeline = VoicePipeline { net: &voice, features: cfg.features };
            let decision = authenticate(&st, &img, &clip, &face, &pipeline, cfg.thresholds)?;
            emit(out, &render_decision(&decision, face.labels()))?;
            if let Outcome::Error(e) = decision.outcome {
                return Ok(Error::Engine(e).exit_code());
            }
        }
        Command::Calibrate { face_scores, voice_scores, out: dest } => {
            let t = calibrate_thresholds(&load_scores(&face_scores)?, &load_scores(&voice_scores)?, cfg.face_far_target)?;
            let text = format!("thresholds.face = {}\nthresholds.voice = {}\n", t.face, t.voice);
            if let Some(p) = dest {
                write_file(&p, &text)?;
            }
            emit(out, &text)?;
        }
        Command::Inspect { model, spec, frames } => {
            let text = match (model, spec) {
                (Some(path), _) => match load_model(&path)? {
                    Model::Speaker(m) => speaker_table(m.spec(), frames)?,
                    Model::Face(m) => face_table(&m),
                },
                (None, Some(SpecArg::Full)) => speaker_table(&SpeakerNetSpec::full(), frames)?,
                (None, Some(SpecArg::Toy)) => speaker_table(&SpeakerNetSpec::toy(), frames)?,
                (None, None) => speaker_table(&speaker_spec(&cfg), frames)?,
            };
            emit(out, &text)?;
        }
        Command::Synth { kind, out: dir, classes, train, held_out, duration } => {
            cmd_synth(&cfg, kind, &dir, SynthSize { classes, train, held_out, duration }, out)?
        }
    }
    Ok(0)
}

pub fn render_decision(d: &VerificationDecision, labels: &[String]) -> String {
    let mut s = format!("outcome: {}\n", d.outcome.as_str());
    s.push_str(&format!("claimed_identity: {}\n", d.claimed_identity.as_deref().unwrap_or("none")));
    match d.face_label {
        Some(k) => s.push_str(&format!("face_class: {k} ({})\n", labels.get(k).map_or("?", String::as_str))),
        None => s.push_str("face_class: none\n"),
    }
    s.push_str(&format!("face_confidence: {}\n", d.face_confidence));
    s.push_str(&format!("voice_score: {}\n", d.voice_score.map_or_else(|| "none".into(), |v| v.to_string())));
    s.push_str(&format!("threshold_face: {}\nthreshold_voice: {}\n", d.thresholds.face, d.thresholds.voice));
    if let Outcome::Error(e) = &d.outcome {
        s.push_str(&format!("error: {e}\n"));
    }
    s
}

pub fn speaker_table(spec: &SpeakerNetSpec, frames: usize) -> Result<String> {
    let mut s = format!("{:<8} {:<44} {:<7} {:>12}\n", "layer", "structure", "stride", "params");
    for row in spec.layer_table() {
        s.push_str(&format!("{:<8} {:<44} {:<7} {:>12}\n", row.name, row.structure, row.stride, row.total()));
    }
    let total = spec.total_params();
    s.push_str(&format!("{:<8} {:<44} {:<7} {:>12}\n", "total", "", "", total));
    s.push_str(&format!("total_millions\t{:.3}M\n", total as f64 / 1e6));
    s.push_str(&format!("shape_chain ({frames} frames):\n"));
    for (name, shape) in spec.shape_chain(frames)? {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("  {name:<8} [{}]\n", dims.join(", ")));
    }
    Ok(s)
}

fn face_table(m: &FaceNet) -> String {
    let counts = m.count_params();
    let mut s = format!("{:<16} {:>12}\n", "layer", "params");
    for (name, n) in &counts.layers {
        s.push_str(&format!("{name:<16} {n:>12}\n"));
    }
    s.push_str(&format!("{:<16} {:>12}\nclasses\t{}\n", "total", counts.total, m.labels().join(",")));
    s
}

fn load_utterances(
    feats: &mut Features,
    manifest: &Manifest,
    labels: &[String],
    split: Split,
) -> Result<Vec<Utterance>> {
    manifest
        .split(split)
        .map(|e| Ok(Utterance { label: label_index(labels, &e.label)?, features: feats.load(&e.path)? }))
        .collect()
}

fn finish_training<M, H>(
    result: std::result::Result<duoauth_core::train::Trained<M, H>, TrainFailure<M, H>>,
    dir: &Path,
    history: impl Fn(&[H]) -> String,
    wrap: impl Fn(M) -> Model,
) -> Result<Vec<H>> {
    match result {
        Ok(t) => {
            save_model(&wrap(t.model), &dir.join("model.bgm"))?;
            write_file(&dir.join("history.tsv"), history(&t.history))?;
            Ok(t.history)
        }
        Err(f) => {
            write_file(&dir.join("history.tsv"), history(&f.history))?;
            if let Some(m) = f.checkpoint {
                save_model(&wrap(m), &dir.join("checkpoint.bgm"))?;
            }
            Err(f.error.into())
        }
    }
}

fn cmd_train_speaker(cfg: &RunConfig, manifest: &Path, dir: &Path, init: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let m = Manifest::load(manifest)?;
    m.check_triplet_feasible()?;
    ensure_dir(dir)?;
    cfg.write_resolved(dir)?;
    let labels = m.labels();
    let mut feats = Features::new(cfg.features);
    let train = load_utterances(&mut feats, &m, &labels, Split::Train)?;
    let valid = load_utterances(&mut feats, &m, &labels, Split::Valid)?;
    let model = match init {
        Some(p) => load_speaker(p)?,
        None => SpeakerNet::build(speaker_spec(cfg), cfg.seed)?,
    };
    let history = finish_training(train_speaker(model, &train, &valid, &cfg.speaker), dir, speaker_history, Model::Speaker)?;
    if let Some(last) = history.last() {
        let eer = last.val_eer.map_or_else(|| "none".into(), |v| v.to_string());
        emit(out, &format!("epochs\t{}\nsteps\t{}\nfinal_loss\t{}\nfinal_val_eer\t{eer}\n", last.epoch, last.steps, last.mean_loss))?;
    }
    Ok(())
}

fn load_images(cfg: &RunConfig, m: &Manifest, labels: &[String], split: Split, hw: (usize, usize)) -> Result<Vec<LabeledImage>> {
    m.split(split)
        .map(|e| {
            Ok(LabeledImage {
                image: load_face_image(&e.path, hw, cfg.detector.as_deref())?,
                label: label_index(labels, &e.label)?,
            })
        })
        .collect()
}

fn cmd_train_face(cfg: &RunConfig, manifest: &Path, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let m = Manifest::load(manifest)?;
    let labels = m.labels();
    let spec = FaceNetSpec::new(labels.len(), face_scale(cfg));
    let model = FaceNet::build(spec, cfg.seed)?.with_labels(labels.clone())?;
    let hw = model.spec().input_hw;
    let mut train = load_images(cfg, &m, &labels, Split::Train, hw)?;
    if cfg.face_augment > 0 {
        let pairs: Vec<(Image, usize)> = train.into_iter().map(|l| (l.image, l.label)).collect();
        let aug = AugmentConfig { multiplicity: cfg.face_augment, ..AugmentConfig::default() };
        train = expand_dataset(&pairs, &aug, cfg.seed).into_iter().map(|(image, label)| LabeledImage { image, label }).collect();
    }
    let valid = load_images(cfg, &m, &labels, Split::Valid, hw)?;
    ensure_dir(dir)?;
    cfg.write_resolved(dir)?;
    let history = finish_training(train_face_head(model, &train, &valid, &cfg.face), dir, face_history, Model::Face)?;
    if let Some(last) = history.last() {
        let va = last.val_accuracy.map_or_else(|| "none".into(), |v| v.to_string());
        emit(out, &format!("epochs\t{}\nsteps\t{}\ntrain_images\t{}\nfinal_train_accuracy\t{}\nfinal_val_accuracy\t{va}\n", last.epoch, last.steps, train.len(), last.train_accuracy))?;
    }
    Ok(())
}

fn speaker_scores(cfg: &RunConfig, model: &Path, manifest: &Path, split: Split) -> Result<ScoreSet> {
    let net = load_speaker(model)?;
    let m = Manifest::load(manifest)?;
    let mut feats = Features::new(cfg.features);
    let mut items = Vec::new();
    for e in m.split(split) {
        items.push((e.label.clone(), net.embed(&feats.load(&e.path)?)?));
    }
    let mut set = ScoreSet::default();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let s = cosine_similarity(&items[i].1, &items[j].1);
            if items[i].0 == items[j].0 {
                set.genuine.push(s);
            } else {
                set.impostor.push(s);
            }
        }
    }
    Ok(set)
}

fn cmd_eval_face(
    cfg: &RunConfig,
    model: &Path,
    manifest: &Path,
    split: Split,
    dir: Option<&Path>,
    write_scores: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let net = load_face(model)?;
    let m = Manifest::load(manifest)?;
    let data = load_images(cfg, &m, net.labels(), split, net.spec().input_hw)?;
    let mut preds = Vec::with_capacity(data.len());
    let mut scores = ScoreSet::default();
    for d in &data {
        let p = net.classify(&d.image)?;
        if p.label == d.label {
            scores.genuine.push(p.confidence);
        } else {
            scores.impostor.push(p.confidence);
        }
        preds.push(p.label);
    }
    let truth: Vec<usize> = data.iter().map(|d| d.label).collect();
    let cm = confusion(&preds, &truth, Some(net.num_classes()))?;
    let r = classification_metrics(&cm)?;
    let mut metrics = format!(
        "accuracy\t{}\nmacro_precision\t{}\nmacro_recall\t{}\nmacro_f1\t{}\nmicro_precision\t{}\nmicro_recall\t{}\nmicro_f1\t{}\n",
        r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1, r.micro_precision, r.micro_recall, r.micro_f1
    );
    metrics.push_str("class\tprecision\trecall\tf1\tprecision_defined\trecall_defined\n");
    for (label, c) in net.labels().iter().zip(&r.per_class) {
        metrics.push_str(&format!(
            "{label}\t{}\t{}\t{}\t{}\t{}\n",
            c.precision, c.recall, c.f1, c.precision_defined, c.recall_defined
        ));
    }
    let mut table = format!("truth\\pred\t{}\n", net.labels().join("\t"));
    for (t, label) in net.labels().iter().enumerate() {
        let row: Vec<String> = (0..cm.num_classes()).map(|p| cm.get(t, p).to_string()).collect();
        table.push_str(&format!("{label}\t{}\n", row.join("\t")));
    }
    if let Some(dir) = dir {
        ensure_dir(dir)?;
        write_file(&dir.join("metrics.tsv"), &metrics)?;
        write_file(&dir.join("confusion.tsv"), &table)?;
    }
    if let Some(p) = write_scores {
        write_file(p, render_scores(&scores))?;
    }
    emit(out, &format!("{metrics}confusion:\n{table}"))
}

struct SynthSize {
    classes: Option<usize>,
    train: Option<usize>,
    held_out: Option<usize>,
    duration: Option<f64>,
}

fn cmd_synth(cfg: &RunConfig, kind: CorpusKind, dir: &Path, size: SynthSize, out: &mut dyn Write) -> Result<()> {
    ensure_dir(dir)?;
    let mut manifest = String::new();
    let count = match kind {
        CorpusKind::Voice => {
            let d = VoiceCorpusConfig::default();
            let corpus = voice_corpus(&VoiceCorpusConfig {
                speakers: size.classes.unwrap_or(d.speakers),
                train_per_speaker: size.train.unwrap_or(d.train_per_speaker),
                valid_per_speaker: size.held_out.unwrap_or(d.valid_per_speaker),
                duration_s: size.duration.unwrap_or(d.duration_s),
                seed: cfg.seed,
                ..d
            })?;
            for (i, item) in corpus.iter().enumerate() {
                let name = format!("{}_{i:03}.wav", item.label);
                write_file(&dir.join(&name), write_wav(&item.item))?;
                manifest.push_str(&format!("{name}\t{}\t{}\n", item.label, item.split.as_str()));
            }
            corpus.len()
        }
        CorpusKind::Face => {
            let d = FaceCorpusConfig::default();
            let corpus = face_corpus(&FaceCorpusConfig {
                classes: size.classes.unwrap_or(d.classes),
                train_per_class: size.train.unwrap_or(d.train_per_class),
                test_per_class: size.held_out.unwrap_or(d.test_per_class),
                seed: cfg.seed,
                ..d
            })?;
            for (i, item) in corpus.iter().enumerate() {
                let name = format!("{}_{i:03}.ppm", item.label);
                write_file(&dir.join(&name), write_pnm(&item.item))?;
                manifest.push_str(&format!("{name}\t{}\t{}\n", item.label, item.split.as_str()));
            }
            corpus.len()
        }
    };
    write_file(&dir.join("manifest.tsv"), manifest)?;
    cfg.write_resolved(dir)?;
    emit(out, &format!("wrote\t{count}\nmanifest\t{}\n", dir.join("manifest.tsv").display()))
}
