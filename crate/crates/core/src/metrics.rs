//! Classification metrics (confusion matrix, precision/recall/F1) and
//! verification metrics (EER, DET curve, pair accuracy).
//!
//! Verification uses a single acceptance rule everywhere: a score is accepted
//! when `score >= threshold`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// K×K counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if k == 0 || counts.len() != k * k {
            return Err(Error::contract(format!("{} counts do not form a {k}×{k} matrix", counts.len())));
        }
        Ok(ConfusionMatrix { k, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.k).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, pred)).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.k).all(|t| (0..self.k).all(|p| t == p || self.get(t, p) == 0))
    }
}

/// Tallies predictions against ground truth. `num_classes` defaults to one
/// more than the largest label seen.
pub fn confusion(preds: &[usize], truth: &[usize], num_classes: Option<usize>) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::contract("confusion matrix of no samples"));
    }
    let seen = preds.iter().chain(truth).copied().max().unwrap_or(0) + 1;
    let k = num_classes.unwrap_or(seen);
    if seen > k {
        return Err(Error::contract(format!("label {} outside [0, {k})", seen - 1)));
    }
    let mut counts = vec![0u64; k * k];
    for (&p, &t) in preds.iter().zip(truth) {
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when no sample was predicted as this class (precision reported as 0).
    pub precision_defined: bool,
    /// False when no sample of this class exists (recall reported as 0).
    pub recall_defined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Micro averages; for single-label classification all three equal accuracy.
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

/// `2pr / (p + r)`, or 0 when both are 0.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::contract("metrics of an empty confusion matrix"));
    }
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, false) } else { (num as f64 / den as f64, true) };
    let per_class: Vec<ClassMetrics> = (0..cm.k)
        .map(|c| {
            let tp = cm.get(c, c);
            let (precision, precision_defined) = ratio(tp, cm.col_sum(c));
            let (recall, recall_defined) = ratio(tp, cm.row_sum(c));
            ClassMetrics { precision, recall, f1: harmonic_mean(precision, recall), precision_defined, recall_defined }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / cm.k as f64;
    let accuracy = cm.trace() as f64 / total as f64;
    Ok(ClassificationReport {
        accuracy,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        micro_precision: accuracy,
        micro_recall: accuracy,
        micro_f1: accuracy,
        per_class,
    })
}

/// Whether a reported (precision, recall, F1) triple is internally consistent:
/// F1 within `tolerance` of the harmonic mean of precision and recall.
pub fn f1_consistent(precision: f64, recall: f64, f1: f64, tolerance: f64) -> bool {
    math::abs(harmonic_mean(precision, recall) - f1) <= tolerance
}

/// Genuine (same identity) and impostor scores for a verification test.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        let s = ScoreSet { genuine, impostor };
        if s.genuine.iter().chain(&s.impostor).any(|v| !v.is_finite()) {
            return Err(Error::contract("scores must be finite"));
        }
        Ok(s)
    }

    fn require_both(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::contract("need at least one genuine and one impostor score"));
        }
        if self.genuine.iter().chain(&self.impostor).any(|v| !v.is_finite()) {
            return Err(Error::contract("scores must be finite"));
        }
        Ok(())
    }

    /// Fraction of impostor scores accepted at `t`.
    pub fn far(&self, t: f64) -> f64 {
        self.impostor.iter().filter(|&&s| s >= t).count() as f64 / self.impostor.len() as f64
    }

    /// Fraction of genuine scores rejected at `t`.
    pub fn frr(&self, t: f64) -> f64 {
        self.genuine.iter().filter(|&&s| s < t).count() as f64 / self.genuine.len() as f64
    }

    fn bounds(&self) -> (f64, f64) {
        let all = self.genuine.iter().chain(&self.impostor).copied();
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        (lo - 1.0 - math::abs(lo), hi + 1.0 + math::abs(hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
}

/// Operating points at which FAR/FRR can change: a sentinel below every
/// score, midpoints between consecutive distinct scores, and a sentinel above
/// every score. Returned with the matching `(far, frr)` computed by a sorted
/// sweep.
fn sweep(scores: &ScoreSet) -> Vec<(f64, f64, f64)> {
    let mut gen = scores.genuine.clone();
    let mut imp = scores.impostor.clone();
    gen.sort_by(f64::total_cmp);
    imp.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = gen.iter().chain(&imp).copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let (lo, hi) = scores.bounds();
    let (ng, ni) = (gen.len() as f64, imp.len() as f64);

    let mut out = Vec::with_capacity(distinct.len() + 1);
    out.push((lo, 1.0, 0.0));
    // After passing distinct score s: impostors accepted are those > s,
    // genuine rejected are those <= s.
    let (mut gi, mut ii) = (0, 0);
    for (j, &s) in distinct.iter().enumerate() {
        while gi < gen.len() && gen[gi] <= s {
            gi += 1;
        }
        while ii < imp.len() && imp[ii] <= s {
            ii += 1;
        }
        let t = distinct.get(j + 1).map_or(hi, |&next| s + (next - s) / 2.0);
        out.push((t, (imp.len() - ii) as f64 / ni, gi as f64 / ng));
    }
    out
}

/// Equal error rate with linear interpolation between the two adjacent
/// operating points where `FAR − FRR` changes sign.
pub fn compute_eer(scores: &ScoreSet) -> Result<EerResult> {
    scores.require_both()?;
    let points = sweep(scores);
    let mut prev = points[0];
    for &cur in &points[1..] {
        let d_cur = cur.1 - cur.2;
        if d_cur <= 0.0 {
            let d_prev = prev.1 - prev.2;
            let lambda = d_prev / (d_prev - d_cur);
            return Ok(EerResult {
                eer: prev.1 + lambda * (cur.1 - prev.1),
                threshold: prev.0 + lambda * (cur.0 - prev.0),
            });
        }
        prev = cur;
    }
    unreachable!("the upper sentinel always has FAR 0 and FRR 1")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// `n_points` evenly spaced thresholds from below the lowest score to above
/// the highest.
pub fn det_curve(scores: &ScoreSet, n_points: usize) -> Result<Vec<DetPoint>> {
    scores.require_both()?;
    if n_points < 2 {
        return Err(Error::contract("a DET curve needs at least two points"));
    }
    let all = scores.genuine.iter().chain(&scores.impostor).copied();
    let (min, max) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = f64::max((max - min) * 0.01, 1e-9 * (1.0 + math::abs(min).max(math::abs(max))));
    let (lo, hi) = (min - pad, max + pad);
    Ok((0..n_points)
        .map(|i| {
            let t = if i + 1 == n_points { hi } else { lo + (hi - lo) * i as f64 / (n_points - 1) as f64 };
            DetPoint { threshold: t, far: scores.far(t), frr: scores.frr(t) }
        })
        .collect())
}

/// Fraction of pairs decided correctly at `threshold`.
pub fn pair_accuracy(scores: &ScoreSet, threshold: f64) -> f64 {
    let n = scores.genuine.len() + scores.impostor.len();
    if n == 0 {
        return 0.0;
    }
    let accepted = scores.genuine.iter().filter(|&&s| s >= threshold).count();
    let rejected = scores.impostor.iter().filter(|&&s| s < threshold).count();
    (accepted + rejected) as f64 / n as f64
}

/// Smallest operating point whose false-accept rate is at most `target`.
pub fn threshold_for_far(scores: &ScoreSet, target: f64) -> Result<f64> {
    if scores.impostor.is_empty() {
        return Err(Error::contract("need at least one impostor score"));
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::contract(format!("target FAR {target} outside [0, 1]")));
    }
    let probe = ScoreSet { genuine: if scores.genuine.is_empty() { vec![0.0] } else { scores.genuine.clone() }, ..scores.clone() };
    let point = sweep(&probe).into_iter().find(|&(_, far, _)| far <= target).expect("upper sentinel has FAR 0");
    Ok(point.0)
}
