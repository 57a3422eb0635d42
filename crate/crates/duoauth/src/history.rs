//! Tab-separated training histories, one row per epoch.

use duoauth_core::audio::FeatureMatrix;
use duoauth_core::train::{FaceEpoch, SpeakerEpoch};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| x.to_string())
}

pub fn speaker_history(rows: &[SpeakerEpoch]) -> String {
    let mut out = String::from("epoch\tsteps\tmean_loss\tactive_fraction\tval_eer\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.epoch,
            r.steps,
            r.mean_loss,
            r.active_fraction,
            opt(r.val_eer)
        ));
    }
    out
}

pub fn face_history(rows: &[FaceEpoch]) -> String {
    let mut out = String::from("epoch\tsteps\ttrain_loss\ttrain_accuracy\tval_loss\tval_accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.epoch,
            r.steps,
            r.train_loss,
            r.train_accuracy,
            opt(r.val_loss),
            opt(r.val_accuracy)
        ));
    }
    out
}

/// `fbank <D> <T>` header, then one space-separated row per frame.
pub fn feature_dump(f: &FeatureMatrix) -> String {
    let mut out = format!("fbank {} {}\n", f.dim(), f.frames());
    for t in 0..f.frames() {
        let row: Vec<String> = f.row(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
