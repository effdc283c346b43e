//! The list classifier: per-label probabilities, an outlier probability,
//! and a (possibly empty) list of plausible labels with their
//! reconstructions.
//!
//! For an input `x` with per-label reconstructions `x_l` (clamped to
//! `[0,1]`):
//!
//! * `L_l = dis(x, x_l)` — relative distance on raw pixels,
//! * `D_l = dis(x̂, x̂_l)` — the same distance on standardized (binarized)
//!   images,
//! * `E_l = max(D_l · L_l, 1e−12)`,
//! * `P₋₁ = (1 − e^{−(B·E_min)²}) / (1 + e^{−(B·E_min)²})` — outlier
//!   probability, rising from 0 towards 1 as even the best label explains
//!   the input badly,
//! * `P̄_l = (1/E_l) / Σ_j (1/E_j)` and `P_l = (1 − P₋₁) · P̄_l`.
//!
//! The emitted list is every `(l, x_l)` with `P_l > D`.

use crate::error::{CaeError, Result};
use crate::model::CaeModel;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Floor applied to every `E_l` so reciprocals stay finite even for a
/// perfect reconstruction.
pub const E_FLOOR: f64 = 1e-12;

/// Sharpness/threshold knobs of the list classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcaeConfig {
    /// Outlier sharpness: larger values push `P₋₁` towards 1 faster.
    pub b: f64,
    /// Emission threshold: labels with `P_l > d` are listed.
    pub d: f64,
}

impl Default for LcaeConfig {
    fn default() -> Self {
        LcaeConfig { b: 14.0, d: 0.10 }
    }
}

impl LcaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0) || !(self.d > 0.0 && self.d < 1.0) {
            return Err(CaeError::invalid(format!(
                "list classifier needs b > 0 and d in (0,1), got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Full per-input output of the list classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ListVerdict {
    /// Probability the input is an outlier (no valid label).
    pub p_outlier: f64,
    /// `P_l` for every label; `p_outlier + probs.sum() = 1`.
    pub probs: Vec<f64>,
    /// `(label, reconstruction)` for every label with `P_l > d`.
    pub emitted: Vec<(usize, Vec<f32>)>,
    /// Raw-pixel relative distances `L_l`.
    pub l_dis: Vec<f64>,
    /// Standardized relative distances `D_l`.
    pub d_dis: Vec<f64>,
    /// `E_l = max(D_l · L_l, 1e−12)`.
    pub e: Vec<f64>,
}

impl ListVerdict {
    /// Labels of the emitted list.
    pub fn emitted_labels(&self) -> Vec<usize> {
        self.emitted.iter().map(|(l, _)| *l).collect()
    }
}

/// Binarizes an image at its own mean: 1 where strictly above, else 0.
/// A constant image maps to all zeros.
pub fn standardize(x: &[f32]) -> Vec<f32> {
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / x.len().max(1) as f64;
    x.iter()
        .map(|&v| if (v as f64) > mean { 1.0 } else { 0.0 })
        .collect()
}

/// Relative distance `mean(|x−y|) / mean(x+y)`, with the all-zero-sum case
/// defined as 0 (two empty images are identical). In `[0,1]` for
/// nonnegative inputs; exactly 1 against an all-zero image.
pub fn dis(x: &[f32], y: &[f32]) -> f64 {
    assert_eq!(x.len(), y.len(), "dis operand lengths");
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&a, &b) in x.iter().zip(y) {
        num += (a as f64 - b as f64).abs();
        den += a as f64 + b as f64;
    }
    if den <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Combines the two distance readings into floored `E_l` values.
pub fn e_from(l_dis: &[f64], d_dis: &[f64]) -> Vec<f64> {
    l_dis
        .iter()
        .zip(d_dis)
        .map(|(&l, &d)| (l * d).max(E_FLOOR))
        .collect()
}

/// Label shares `P̄_l = (1/E_l) / Σ_j (1/E_j)`: how the non-outlier mass
/// splits across labels. Sums to 1; smaller `E` means a larger share.
pub fn label_shares(e: &[f64]) -> Vec<f64> {
    assert!(!e.is_empty(), "shares need at least one label");
    let inv: Vec<f64> = e.iter().map(|&v| 1.0 / v).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|&v| v / total).collect()
}

/// Outlier probability and per-label probabilities from the `E_l` values.
/// Returns `(p_outlier, probs)` with `p_outlier + probs.sum() == 1`.
pub fn probabilities_from_e(e: &[f64], b: f64) -> (f64, Vec<f64>) {
    let e_min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let t = (b * e_min).powi(2);
    let decay = (-t).exp();
    let p_outlier = (1.0 - decay) / (1.0 + decay);
    let probs = label_shares(e)
        .into_iter()
        .map(|s| (1.0 - p_outlier) * s)
        .collect();
    (p_outlier, probs)
}

/// Runs the full list classifier on a batch of images.
pub fn list_verdicts(
    model: &mut CaeModel,
    x: &Tensor<f32>,
    cfg: LcaeConfig,
) -> Result<Vec<ListVerdict>> {
    cfg.validate()?;
    let n = x.outer();
    let num_labels = model.bank.num_labels();
    let recons = model.reconstruct_all(x)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.row(i);
        let x_std = standardize(xi);
        let mut l_dis = Vec::with_capacity(num_labels);
        let mut d_dis = Vec::with_capacity(num_labels);
        let mut clamped: Vec<Vec<f32>> = Vec::with_capacity(num_labels);
        for recon in &recons {
            let xl: Vec<f32> = recon.row(i).iter().map(|&v| v.clamp(0.0, 1.0)).collect();
            l_dis.push(dis(xi, &xl));
            d_dis.push(dis(&x_std, &standardize(&xl)));
            clamped.push(xl);
        }
        let e = e_from(&l_dis, &d_dis);
        let (p_outlier, probs) = probabilities_from_e(&e, cfg.b);
        let emitted = probs
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p > cfg.d)
            .map(|(l, _)| (l, std::mem::take(&mut clamped[l])))
            .collect();
        out.push(ListVerdict {
            p_outlier,
            probs,
            emitted,
            l_dis,
            d_dis,
            e,
        });
    }
    Ok(out)
}

/// Batched wrapper over [`list_verdicts`] for large sets.
pub fn list_classify_batched(
    model: &mut CaeModel,
    images: &Tensor<f32>,
    cfg: LcaeConfig,
    batch: usize,
) -> Result<Vec<ListVerdict>> {
    cfg.validate()?;
    let n = images.outer();
    if n == 0 {
        return Err(CaeError::invalid("empty image set"));
    }
    let batch = batch.max(1);
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        out.extend(list_verdicts(model, &images.slice_rows(start..end), cfg)?);
        start = end;
    }
    Ok(out)
}

/// Fractions of verdicts with outlier probability above ½ and above ⅘.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub over_half: f64,
    pub over_four_fifths: f64,
    pub total: usize,
}

/// Aggregates outlier probabilities of already-computed verdicts.
pub fn outlier_fractions(verdicts: &[ListVerdict]) -> Result<OutlierReport> {
    if verdicts.is_empty() {
        return Err(CaeError::invalid("outlier report over an empty set"));
    }
    let n = verdicts.len() as f64;
    Ok(OutlierReport {
        over_half: verdicts.iter().filter(|v| v.p_outlier > 0.5).count() as f64 / n,
        over_four_fifths: verdicts.iter().filter(|v| v.p_outlier > 0.8).count() as f64 / n,
        total: verdicts.len(),
    })
}

/// Runs the classifier over a (presumed outlier) set and reports how often
/// it assigns high outlier probability.
pub fn outlier_probability_report(
    model: &mut CaeModel,
    images: &Tensor<f32>,
    cfg: LcaeConfig,
    batch: usize,
) -> Result<OutlierReport> {
    outlier_fractions(&list_classify_batched(model, images, cfg, batch)?)
}

/// How often a two-source mixture's emitted list recovers its sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoupleReport {
    /// Both source labels emitted.
    pub both_found_rate: f64,
    /// At least one source label emitted.
    pub one_found_rate: f64,
    pub total: usize,
}

/// Scores emitted label lists against known source-label pairs.
pub fn decouple_fractions(
    emitted: &[Vec<usize>],
    pairs: &[(usize, usize)],
) -> Result<DecoupleReport> {
    if emitted.is_empty() || emitted.len() != pairs.len() {
        return Err(CaeError::invalid(format!(
            "decouple scoring needs matching non-empty sets ({} lists, {} pairs)",
            emitted.len(),
            pairs.len()
        )));
    }
    let mut both = 0usize;
    let mut one = 0usize;
    for (list, &(a, b)) in emitted.iter().zip(pairs) {
        let has_a = list.contains(&a);
        let has_b = list.contains(&b);
        if has_a && has_b {
            both += 1;
        }
        if has_a || has_b {
            one += 1;
        }
    }
    let n = emitted.len() as f64;
    Ok(DecoupleReport {
        both_found_rate: both as f64 / n,
        one_found_rate: one as f64 / n,
        total: emitted.len(),
    })
}

/// Evaluates source-label recovery on a set of mixed images.
pub fn decouple_eval(
    model: &mut CaeModel,
    images: &Tensor<f32>,
    pairs: &[(usize, usize)],
    cfg: LcaeConfig,
    batch: usize,
) -> Result<DecoupleReport> {
    if images.outer() != pairs.len() {
        return Err(CaeError::invalid(format!(
            "{} mixtures but {} source pairs",
            images.outer(),
            pairs.len()
        )));
    }
    let verdicts = list_classify_batched(model, images, cfg, batch)?;
    let emitted: Vec<Vec<usize>> = verdicts.iter().map(|v| v.emitted_labels()).collect();
    decouple_fractions(&emitted, pairs)
}
