//! The open-world classifier: a label when the reconstruction evidence
//! supports one, a refusal (label −1) otherwise.
//!
//! Decision rule per input `x` with code `y = encode(x)` and pseudo-label
//! `L = pseudo_label(y)`:
//!
//! 1. `d = distance(decode(project(y, L)), x)` — the pseudo-label
//!    reconstruction distance, where `distance` is mean per-pixel squared
//!    error.
//! 2. `d <= accept` → label `L` (branch `CloseAccept`).
//! 3. `d >= refuse` → −1 (branch `FarRefuse`).
//! 4. otherwise compute `d_l` for every label; `L` wins only if `d_L` is a
//!    (non-strict) minimum; else −1 (branches `CrossAccept`/`CrossRefuse`).
//!
//! The expensive measurements are separated from the thresholded decision,
//! so threshold sweeps re-decide cached measurements for free.

use crate::error::{CaeError, Result};
use crate::model::CaeModel;
use crate::tensor::{mse, Tensor};
use serde::{Deserialize, Serialize};

/// Accept/refuse distance thresholds. The defaults are the reference
/// operating point for `[0,1]` images under mean-squared pixel distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Accept immediately at or below this distance.
    pub accept: f64,
    /// Refuse outright at or above this distance.
    pub refuse: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            accept: 0.04,
            refuse: 0.09,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.accept > 0.0 && self.refuse > self.accept) {
            return Err(CaeError::invalid(format!(
                "thresholds must satisfy 0 < accept < refuse, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Which rule decided a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Pseudo-label reconstruction within the accept threshold.
    CloseAccept,
    /// Pseudo-label reconstruction beyond the refuse threshold.
    FarRefuse,
    /// Cross-check confirmed the pseudo-label's distance as minimal.
    CrossAccept,
    /// Cross-check found a smaller distance under another label.
    CrossRefuse,
}

/// Everything measured about one input, independent of thresholds.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub pseudo_label: usize,
    /// Distance of the pseudo-label reconstruction to the input.
    pub pseudo_distance: f64,
    /// Distance of every label's reconstruction to the input.
    pub distances: Vec<f64>,
}

/// A thresholded decision with its evidence.
#[derive(Debug, Clone)]
pub struct Verdict {
    /// `Some(label)` or `None` for a refusal (−1).
    pub label: Option<usize>,
    pub branch: Branch,
    pub pseudo_label: usize,
    pub pseudo_distance: f64,
    pub distances: Vec<f64>,
}

impl Verdict {
    /// The verdict as the conventional integer encoding (−1 = refusal).
    pub fn label_i64(&self) -> i64 {
        self.label.map(|l| l as i64).unwrap_or(-1)
    }
}

/// Measures every input of a batch: pseudo-labels and per-label
/// reconstruction distances.
pub fn measure(model: &mut CaeModel, x: &Tensor<f32>) -> Result<Vec<Measurement>> {
    let n = x.outer();
    let codes = model.encoder.forward(x, crate::nn::Mode::Eval)?;
    let pseudo = model.pseudo_labels_of_codes(&codes);
    let num_labels = model.bank.num_labels();
    let mut distances = vec![vec![0.0f64; num_labels]; n];
    for l in 0..num_labels {
        let labels = vec![l; n];
        let projected = model.project_codes(&codes, &labels);
        let recon = model.decoder.forward(&projected, crate::nn::Mode::Eval)?;
        for i in 0..n {
            distances[i][l] = mse(recon.row(i), x.row(i)) as f64;
        }
    }
    Ok((0..n)
        .map(|i| Measurement {
            pseudo_label: pseudo[i],
            pseudo_distance: distances[i][pseudo[i]],
            distances: std::mem::take(&mut distances[i]),
        })
        .collect())
}

/// Applies the decision rule to one measurement. Pure.
pub fn decide(m: &Measurement, th: Thresholds) -> Verdict {
    let (label, branch) = if m.pseudo_distance <= th.accept {
        (Some(m.pseudo_label), Branch::CloseAccept)
    } else if m.pseudo_distance >= th.refuse {
        (None, Branch::FarRefuse)
    } else if m
        .distances
        .iter()
        .all(|&d| m.distances[m.pseudo_label] <= d)
    {
        (Some(m.pseudo_label), Branch::CrossAccept)
    } else {
        (None, Branch::CrossRefuse)
    };
    Verdict {
        label,
        branch,
        pseudo_label: m.pseudo_label,
        pseudo_distance: m.pseudo_distance,
        distances: m.distances.clone(),
    }
}

/// Classifies a batch of images.
pub fn classify(model: &mut CaeModel, x: &Tensor<f32>, th: Thresholds) -> Result<Vec<Verdict>> {
    th.validate()?;
    Ok(measure(model, x)?.iter().map(|m| decide(m, th)).collect())
}

/// Aggregate quality on a ground-truth-labeled set. Ground truth uses
/// `Some(label)` for in-distribution inputs and `None` for problem images
/// (outliers/adversaries) whose correct verdict is a refusal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenWorldMetrics {
    pub total: usize,
    /// Fraction of in-distribution inputs given their correct label.
    pub accuracy: f64,
    /// Fraction of in-distribution inputs given a wrong label.
    pub wrong_rate: f64,
    /// Fraction of in-distribution inputs refused.
    pub flagged_rate: f64,
    /// Credits correct labels and correct refusals over the whole set.
    pub total_accuracy: f64,
}

/// Scores verdicts against ground truth.
pub fn score(verdicts: &[Verdict], truth: &[Option<usize>]) -> Result<OpenWorldMetrics> {
    if verdicts.is_empty() || verdicts.len() != truth.len() {
        return Err(CaeError::invalid(format!(
            "scoring needs matching non-empty sets ({} verdicts, {} truths)",
            verdicts.len(),
            truth.len()
        )));
    }
    let mut in_dist = 0usize;
    let mut correct = 0usize;
    let mut wrong = 0usize;
    let mut flagged = 0usize;
    let mut total_credit = 0usize;
    for (v, t) in verdicts.iter().zip(truth) {
        match t {
            Some(label) => {
                in_dist += 1;
                match v.label {
                    Some(l) if l == *label => {
                        correct += 1;
                        total_credit += 1;
                    }
                    Some(_) => wrong += 1,
                    None => flagged += 1,
                }
            }
            None => {
                if v.label.is_none() {
                    total_credit += 1;
                }
            }
        }
    }
    let denom = in_dist.max(1) as f64;
    Ok(OpenWorldMetrics {
        total: verdicts.len(),
        accuracy: correct as f64 / denom,
        wrong_rate: wrong as f64 / denom,
        flagged_rate: flagged as f64 / denom,
        total_accuracy: total_credit as f64 / verdicts.len() as f64,
    })
}

/// Classifies a labeled set in batches and scores it.
pub fn evaluate_labeled(
    model: &mut CaeModel,
    images: &Tensor<f32>,
    labels: &[u8],
    th: Thresholds,
    batch: usize,
) -> Result<OpenWorldMetrics> {
    let truth: Vec<Option<usize>> = labels.iter().map(|&l| Some(l as usize)).collect();
    let verdicts = classify_batched(model, images, th, batch)?;
    score(&verdicts, &truth)
}

/// Fraction of a (presumed outlier) set refused.
pub fn refusal_rate(
    model: &mut CaeModel,
    images: &Tensor<f32>,
    th: Thresholds,
    batch: usize,
) -> Result<f64> {
    let verdicts = classify_batched(model, images, th, batch)?;
    Ok(verdicts.iter().filter(|v| v.label.is_none()).count() as f64 / verdicts.len() as f64)
}

/// Batched classification of a large set.
pub fn classify_batched(
    model: &mut CaeModel,
    images: &Tensor<f32>,
    th: Thresholds,
    batch: usize,
) -> Result<Vec<Verdict>> {
    th.validate()?;
    let n = images.outer();
    if n == 0 {
        return Err(CaeError::invalid("empty image set"));
    }
    let batch = batch.max(1);
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let x = images.slice_rows(start..end);
        out.extend(classify(model, &x, th)?);
        start = end;
    }
    Ok(out)
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub accept: f64,
    pub refuse: f64,
    pub metrics: OpenWorldMetrics,
}

/// Re-decides cached measurements over a threshold grid. Grids are given as
/// explicit values; pairs with `accept >= refuse` are skipped.
pub fn threshold_sweep(
    measurements: &[Measurement],
    truth: &[Option<usize>],
    accept_grid: &[f64],
    refuse_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &accept in accept_grid {
        for &refuse in refuse_grid {
            if accept <= 0.0 || refuse <= accept {
                continue;
            }
            let th = Thresholds { accept, refuse };
            let verdicts: Vec<Verdict> = measurements.iter().map(|m| decide(m, th)).collect();
            rows.push(SweepRow {
                accept,
                refuse,
                metrics: score(&verdicts, truth)?,
            });
        }
    }
    Ok(rows)
}
