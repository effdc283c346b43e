//! Adversarial example generation and the two-factor creation-rate
//! accounting.
//!
//! Three attack families, each against either the code-based classifier
//! (encoder + projection weights) or a plain logit classifier:
//!
//! * [`pgd`] — signed-gradient ascent on the classification loss, fixed
//!   per-step pixel change, so `steps × step_size` bounds the L∞
//!   perturbation. Optional ε-ball projection and random start (used by
//!   robust-training loops), optional per-sample early stop.
//! * [`jsma`] — greedy saliency attack flipping one pixel at a time to an
//!   extreme, touching at most `k` distinct pixels (L0 budget).
//! * [`strong_attack`] — a 20-step PGD stage followed by a bounded ascent
//!   that keeps the input misclassified *while* making its wrong-label
//!   reconstruction agree with it, aimed at defeating
//!   reconstruction-distance defenses.

use crate::error::{CaeError, Result};
use crate::listclassifier::ListVerdict;
use crate::model::CaeModel;
use crate::nn::{Grads, Mode, Net};
use crate::openworld::Verdict;
use crate::tensor::{Scalar, Tensor};
use crate::training::encoder_loss_batch;
use rand::Rng;

/// Anything a white-box attack can query: per-class scores and input
/// gradients of either the mean classification loss or an arbitrary linear
/// combination of scores.
pub trait AttackTarget {
    fn num_classes(&self) -> usize;
    /// Class scores for a batch, shape `[N, num_classes]`.
    fn scores(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>>;
    /// Mean classification loss over the batch and its gradient with
    /// respect to the input.
    fn loss_grad(&mut self, x: &Tensor<f32>, labels: &[usize]) -> Result<(f64, Tensor<f32>)>;
    /// Input gradient of `Σ_i Σ_c cot[i,c] · score_c(x_i)`.
    fn score_grad(&mut self, x: &Tensor<f32>, cot: &Tensor<f32>) -> Result<Tensor<f32>>;
}

/// Row-wise argmax with ties resolved to the lowest index.
pub fn predicted_labels(scores: &Tensor<f32>) -> Vec<usize> {
    (0..scores.outer())
        .map(|i| {
            let row = scores.row(i);
            row.iter()
                .enumerate()
                .fold(0usize, |best, (j, &v)| if v > row[best] { j } else { best })
        })
        .collect()
}

/// The code classifier as an attack target: scores are the per-label
/// projection weights, the loss is the tempered cross-entropy over them.
pub struct EncoderTarget<'a> {
    pub model: &'a mut CaeModel,
    pub gamma: f32,
}

impl<'a> EncoderTarget<'a> {
    pub fn new(model: &'a mut CaeModel, gamma: f32) -> Self {
        EncoderTarget { model, gamma }
    }
}

impl AttackTarget for EncoderTarget<'_> {
    fn num_classes(&self) -> usize {
        self.model.bank.num_labels()
    }

    fn scores(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let codes = self.model.encoder.forward(x, Mode::Eval)?;
        let c = self.num_classes();
        let mut out = Tensor::zeros(&[x.outer(), c]);
        for i in 0..x.outer() {
            out.row_mut(i)
                .copy_from_slice(&self.model.bank.weights(codes.row(i)));
        }
        Ok(out)
    }

    fn loss_grad(&mut self, x: &Tensor<f32>, labels: &[usize]) -> Result<(f64, Tensor<f32>)> {
        let (codes, cache) = self.model.encoder.forward_cached(x, Mode::Eval)?;
        let labels_u8: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
        let mut dcodes = Tensor::zeros(codes.shape());
        let loss =
            encoder_loss_batch(self.model, &codes, &labels_u8, self.gamma, Some(&mut dcodes));
        let mut grads = Grads::zeros_like(&self.model.encoder);
        let dx = self.model.encoder.backward(&cache, &dcodes, &mut grads);
        Ok((loss as f64, dx))
    }

    fn score_grad(&mut self, x: &Tensor<f32>, cot: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (codes, cache) = self.model.encoder.forward_cached(x, Mode::Eval)?;
        // Each weight is the sum of its block, so a weight cotangent
        // spreads uniformly over the block's code entries.
        let mut dcodes = Tensor::zeros(codes.shape());
        for i in 0..x.outer() {
            let row = dcodes.row_mut(i);
            for l in 0..self.model.bank.num_labels() {
                let g = cot.row(i)[l];
                for v in &mut row[self.model.bank.block_range(l)] {
                    *v = g;
                }
            }
        }
        let mut grads = Grads::zeros_like(&self.model.encoder);
        Ok(self.model.encoder.backward(&cache, &dcodes, &mut grads))
    }
}

/// A plain logit network as an attack target (softmax cross-entropy loss).
pub struct ClassifierTarget<'a> {
    pub net: &'a mut Net<f32>,
}

impl<'a> ClassifierTarget<'a> {
    pub fn new(net: &'a mut Net<f32>) -> Self {
        ClassifierTarget { net }
    }
}

impl AttackTarget for ClassifierTarget<'_> {
    fn num_classes(&self) -> usize {
        self.net.output_shape().iter().product()
    }

    fn scores(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.net.forward(x, Mode::Eval)
    }

    fn loss_grad(&mut self, x: &Tensor<f32>, labels: &[usize]) -> Result<(f64, Tensor<f32>)> {
        let (logits, cache) = self.net.forward_cached(x, Mode::Eval)?;
        let mut dlogits = Tensor::zeros(logits.shape());
        let loss = softmax_cross_entropy(&logits, labels, Some(&mut dlogits));
        let mut grads = Grads::zeros_like(self.net);
        let dx = self.net.backward(&cache, &dlogits, &mut grads);
        Ok((loss, dx))
    }

    fn score_grad(&mut self, x: &Tensor<f32>, cot: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (_, cache) = self.net.forward_cached(x, Mode::Eval)?;
        let mut grads = Grads::zeros_like(self.net);
        Ok(self.net.backward(&cache, cot, &mut grads))
    }
}

/// Mean softmax cross-entropy over logit rows (max-subtracted for
/// stability); optionally writes `d loss / d logits`, already averaged.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    mut dlogits: Option<&mut Tensor<S>>,
) -> f64 {
    let n = logits.outer();
    debug_assert_eq!(n, labels.len());
    let inv_n = S::ONE / S::from_usize(n);
    let mut total = 0.0f64;
    for i in 0..n {
        let row = logits.row(i);
        let label = labels[i];
        debug_assert!(label < row.len());
        let mut max = row[0];
        for &v in &row[1..] {
            max = max.max(v);
        }
        let mut denom = S::ZERO;
        for &v in row {
            denom += (v - max).exp();
        }
        total += (denom.ln() - (row[label] - max)).to_f64();
        if let Some(d) = dlogits.as_deref_mut() {
            let drow = d.row_mut(i);
            for (j, &v) in row.iter().enumerate() {
                let p = (v - max).exp() / denom;
                drow[j] = (p - if j == label { S::ONE } else { S::ZERO }) * inv_n;
            }
        }
    }
    total / n as f64
}

/// One attacked sample: the perturbed image, whether the target now
/// mislabels it, and the perturbation norms.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub image: Vec<f32>,
    pub success: bool,
    pub linf: f64,
    pub l0: usize,
}

fn outcome(original: &[f32], adv: &[f32], success: bool) -> AttackOutcome {
    let mut linf = 0.0f64;
    let mut l0 = 0usize;
    for (&a, &b) in original.iter().zip(adv) {
        let d = (a as f64 - b as f64).abs();
        if d > 0.0 {
            l0 += 1;
        }
        linf = linf.max(d);
    }
    AttackOutcome {
        image: adv.to_vec(),
        success,
        linf,
        l0,
    }
}

/// Knobs of the signed-gradient attack. The defaults are the evaluation
/// attack: deterministic start, no explicit ball (the step budget is the
/// bound), run every step.
#[derive(Debug, Clone, Copy)]
pub struct PgdOptions {
    pub step_size: f32,
    /// Start from a uniform point in the ε-ball (requires `epsilon`).
    pub random_start: bool,
    /// Project every iterate into an L∞ ball of this radius around the
    /// original input.
    pub epsilon: Option<f32>,
    /// Freeze samples as soon as the target mislabels them.
    pub early_stop: bool,
}

impl Default for PgdOptions {
    fn default() -> Self {
        PgdOptions {
            step_size: 0.01,
            random_start: false,
            epsilon: None,
            early_stop: false,
        }
    }
}

/// Signed-gradient ascent on the target's classification loss. Every pixel
/// moves by exactly `±step_size` (or 0 on a zero gradient) per step and
/// iterates stay in `[0,1]`, so the perturbation satisfies
/// `L∞ ≤ steps · step_size` (tighter if `epsilon` projects).
pub fn pgd<T: AttackTarget, R: Rng>(
    target: &mut T,
    x: &Tensor<f32>,
    labels: &[usize],
    steps: usize,
    opts: PgdOptions,
    rng: Option<&mut R>,
) -> Result<Tensor<f32>> {
    if x.outer() != labels.len() {
        return Err(CaeError::invalid(format!(
            "{} inputs but {} labels",
            x.outer(),
            labels.len()
        )));
    }
    let mut adv = x.clone();
    if opts.random_start {
        let eps = opts.epsilon.ok_or_else(|| {
            CaeError::invalid("random start needs an epsilon ball to start inside")
        })?;
        let rng = rng.ok_or_else(|| CaeError::invalid("random start needs an rng"))?;
        for v in adv.data_mut() {
            *v = (*v + rng.gen_range(-eps..=eps)).clamp01();
        }
    }
    let row_len = x.inner_len();
    let mut active = vec![true; x.outer()];
    for _ in 0..steps {
        if opts.early_stop {
            let preds = predicted_labels(&target.scores(&adv)?);
            for (a, (&p, &l)) in active.iter_mut().zip(preds.iter().zip(labels)) {
                if p != l {
                    *a = false;
                }
            }
            if active.iter().all(|a| !a) {
                break;
            }
        }
        let (_, dx) = target.loss_grad(&adv, labels)?;
        for i in 0..x.outer() {
            if !active[i] {
                continue;
            }
            let base = i * row_len;
            for j in 0..row_len {
                let mut v = adv.data()[base + j] + opts.step_size * dx.data()[base + j].signum0();
                if let Some(eps) = opts.epsilon {
                    let orig = x.data()[base + j];
                    v = v.clamp(orig - eps, orig + eps);
                }
                adv.data_mut()[base + j] = v.clamp01();
            }
        }
    }
    Ok(adv)
}

/// [`pgd`] plus per-sample outcome accounting.
pub fn pgd_outcomes<T: AttackTarget, R: Rng>(
    target: &mut T,
    x: &Tensor<f32>,
    labels: &[usize],
    steps: usize,
    opts: PgdOptions,
    rng: Option<&mut R>,
) -> Result<Vec<AttackOutcome>> {
    let adv = pgd(target, x, labels, steps, opts, rng)?;
    outcomes_against(target, x, &adv, labels)
}

/// Scores `adv` against the target and packages per-sample outcomes.
pub fn outcomes_against<T: AttackTarget>(
    target: &mut T,
    x: &Tensor<f32>,
    adv: &Tensor<f32>,
    labels: &[usize],
) -> Result<Vec<AttackOutcome>> {
    let preds = predicted_labels(&target.scores(adv)?);
    Ok((0..x.outer())
        .map(|i| outcome(x.row(i), adv.row(i), preds[i] != labels[i]))
        .collect())
}

/// Greedy saliency attack on one sample: repeatedly pick the unmodified
/// pixel whose move to an extreme most reduces the true class's score
/// advantage, until the label flips or `k` pixels have been touched.
/// The saliency is one gradient of `score_true − Σ_{c≠true} score_c`; a
/// positive entry says "lower this pixel" (target 0), a negative one
/// "raise it" (target 1), ranked by `|saliency| × available travel`.
pub fn jsma<T: AttackTarget>(
    target: &mut T,
    x_row: &[f32],
    input_shape: &[usize],
    label: usize,
    k: usize,
) -> Result<AttackOutcome> {
    let mut shape = vec![1usize];
    shape.extend_from_slice(input_shape);
    let mut adv = Tensor::from_vec(&shape, x_row.to_vec())?;
    let classes = target.num_classes();
    let mut cot = Tensor::zeros(&[1, classes]);
    for c in 0..classes {
        cot.row_mut(0)[c] = if c == label { 1.0 } else { -1.0 };
    }
    let mut modified = vec![false; x_row.len()];
    let mut success = predicted_labels(&target.scores(&adv)?)[0] != label;
    for _ in 0..k {
        if success {
            break;
        }
        let sal = target.score_grad(&adv, &cot)?;
        let mut best: Option<(f64, usize, f32)> = None;
        for (i, &s) in sal.data().iter().enumerate() {
            if modified[i] || s == 0.0 {
                continue;
            }
            let cur = adv.data()[i];
            let (extreme, room) = if s > 0.0 { (0.0, cur) } else { (1.0, 1.0 - cur) };
            let gain = s.abs() as f64 * room as f64;
            if gain > 0.0 && best.map(|(g, _, _)| gain > g).unwrap_or(true) {
                best = Some((gain, i, extreme));
            }
        }
        let Some((_, i, extreme)) = best else {
            break; // every useful pixel is already at its extreme
        };
        adv.data_mut()[i] = extreme;
        modified[i] = true;
        success = predicted_labels(&target.scores(&adv)?)[0] != label;
    }
    Ok(outcome(x_row, adv.data(), success))
}

/// [`jsma`] over every row of a batch.
pub fn jsma_batch<T: AttackTarget>(
    target: &mut T,
    x: &Tensor<f32>,
    labels: &[usize],
    k: usize,
) -> Result<Vec<AttackOutcome>> {
    if x.outer() != labels.len() {
        return Err(CaeError::invalid(format!(
            "{} inputs but {} labels",
            x.outer(),
            labels.len()
        )));
    }
    let shape = x.shape()[1..].to_vec();
    (0..x.outer())
        .map(|i| jsma(target, x.row(i), &shape, labels[i], k))
        .collect()
}

/// What the second stage of the strong attack ascends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage2Objective {
    /// Raise the classification loss while *lowering* the distance between
    /// the input and its pseudo-label reconstruction — the variant that
    /// targets reconstruction-distance defenses.
    ClassAndRecon,
    /// Raise the classification loss only.
    ClassOnly,
}

/// Configuration of [`strong_attack`].
#[derive(Debug, Clone, Copy)]
pub struct StrongConfig {
    pub stage1_steps: usize,
    pub step_size: f32,
    /// Weight of the reconstruction-agreement term in stage 2.
    pub lambda_s: f32,
    pub objective: Stage2Objective,
    pub gamma: f32,
}

impl Default for StrongConfig {
    fn default() -> Self {
        StrongConfig {
            stage1_steps: 20,
            step_size: 0.01,
            lambda_s: 1.0,
            objective: Stage2Objective::ClassAndRecon,
            gamma: 50.0,
        }
    }
}

/// Two-stage attack on the code classifier: a 20-step signed-gradient
/// stage, then — within `bound` per pixel of the stage-1 output — ascent on
/// `class_loss − λ_s · MSE(reconstruction, input)`, which keeps the sample
/// misclassified while making its (wrong-label) reconstruction close, so
/// distance-based acceptance checks pass. `bound = 0` returns the stage-1
/// adversary unchanged.
pub fn strong_attack(
    model: &mut CaeModel,
    x: &Tensor<f32>,
    labels: &[usize],
    bound: f32,
    cfg: &StrongConfig,
) -> Result<Tensor<f32>> {
    let stage1 = {
        let mut target = EncoderTarget::new(model, cfg.gamma);
        pgd::<_, rand_chacha::ChaCha8Rng>(
            &mut target,
            x,
            labels,
            cfg.stage1_steps,
            PgdOptions {
                step_size: cfg.step_size,
                ..PgdOptions::default()
            },
            None,
        )?
    };
    if bound == 0.0 {
        return Ok(stage1);
    }
    if bound < 0.0 {
        return Err(CaeError::invalid("stage-2 bound must be nonnegative"));
    }
    let steps = (bound / cfg.step_size).round() as usize;
    let labels_u8: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    let n = x.outer();
    let mut adv = stage1.clone();
    for _ in 0..steps.max(1) {
        let (codes, enc_cache) = model.encoder.forward_cached(&adv, Mode::Eval)?;
        let mut dcodes = Tensor::zeros(codes.shape());
        encoder_loss_batch(model, &codes, &labels_u8, cfg.gamma, Some(&mut dcodes));
        let mut dx_direct = Tensor::zeros(adv.shape());
        if cfg.objective == Stage2Objective::ClassAndRecon {
            let pseudo = model.pseudo_labels_of_codes(&codes);
            let projected = model.project_codes(&codes, &pseudo);
            let (recon, dec_cache) = model.decoder.forward_cached(&projected, Mode::Eval)?;
            // Ascending −λ_s · mean((recon − adv)²): the reconstruction
            // branch receives −λ_s · 2(recon − adv)/len, the input itself
            // +λ_s · 2(recon − adv)/len.
            let scale = 2.0 * cfg.lambda_s / recon.len() as f32;
            let mut drecon = Tensor::zeros(recon.shape());
            for ((d, &r), &a) in drecon
                .data_mut()
                .iter_mut()
                .zip(recon.data())
                .zip(adv.data())
            {
                *d = -scale * (r - a);
            }
            for ((d, &r), &a) in dx_direct
                .data_mut()
                .iter_mut()
                .zip(recon.data())
                .zip(adv.data())
            {
                *d = scale * (r - a);
            }
            let mut dec_grads = Grads::zeros_like(&model.decoder);
            let dprojected = model.decoder.backward(&dec_cache, &drecon, &mut dec_grads);
            for i in 0..n {
                let r = model.bank.block_range(pseudo[i]);
                let src = &dprojected.row(i)[r.clone()];
                let dst = &mut dcodes.row_mut(i)[r];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut enc_grads = Grads::zeros_like(&model.encoder);
        let dx_enc = model.encoder.backward(&enc_cache, &dcodes, &mut enc_grads);
        for ((a, &s1), (&ge, &gd)) in adv
            .data_mut()
            .iter_mut()
            .zip(stage1.data())
            .zip(dx_enc.data().iter().zip(dx_direct.data()))
        {
            let v = *a + cfg.step_size * (ge + gd).signum0();
            *a = v.clamp(s1 - bound, s1 + bound).clamp01();
        }
    }
    Ok(adv)
}

/// [`strong_attack`] plus per-sample outcome accounting against the code
/// classifier.
pub fn strong_outcomes(
    model: &mut CaeModel,
    x: &Tensor<f32>,
    labels: &[usize],
    bound: f32,
    cfg: &StrongConfig,
) -> Result<Vec<AttackOutcome>> {
    let adv = strong_attack(model, x, labels, bound, cfg)?;
    let mut target = EncoderTarget::new(model, cfg.gamma);
    outcomes_against(&mut target, x, &adv, labels)
}

/// Hardened outliers aimed at the reconstruction-distance check: signed
/// *descent* on `mean((reconstruction_pseudo(x̃) − x̃)²)` within `budget`
/// per pixel of `x`, so the produced images reconstruct well enough that a
/// distance-based acceptance test is tempted to label them. The
/// pseudo-label is re-read every step. Runs `round(budget / step_size)`
/// steps; `budget = 0` returns `x` unchanged.
pub fn reconstruction_descent(
    model: &mut CaeModel,
    x: &Tensor<f32>,
    budget: f32,
    step_size: f32,
) -> Result<Tensor<f32>> {
    if budget < 0.0 || step_size <= 0.0 {
        return Err(CaeError::invalid("need budget >= 0 and step_size > 0"));
    }
    let steps = (budget / step_size).round() as usize;
    let n = x.outer();
    let mut adv = x.clone();
    for _ in 0..steps {
        let (codes, enc_cache) = model.encoder.forward_cached(&adv, Mode::Eval)?;
        let pseudo = model.pseudo_labels_of_codes(&codes);
        let projected = model.project_codes(&codes, &pseudo);
        let (recon, dec_cache) = model.decoder.forward_cached(&projected, Mode::Eval)?;
        // d/dx mean((r(x) − x)²): 2(r − x)/len through the network branch,
        // −2(r − x)/len directly.
        let scale = 2.0 / recon.len() as f32;
        let mut drecon = Tensor::zeros(recon.shape());
        for ((d, &r), &a) in drecon
            .data_mut()
            .iter_mut()
            .zip(recon.data())
            .zip(adv.data())
        {
            *d = scale * (r - a);
        }
        let mut dec_grads = Grads::zeros_like(&model.decoder);
        let dprojected = model.decoder.backward(&dec_cache, &drecon, &mut dec_grads);
        let mut dcodes = Tensor::zeros(codes.shape());
        for i in 0..n {
            let r = model.bank.block_range(pseudo[i]);
            dcodes.row_mut(i)[r.clone()].copy_from_slice(&dprojected.row(i)[r]);
        }
        let mut enc_grads = Grads::zeros_like(&model.encoder);
        let dx_net = model.encoder.backward(&enc_cache, &dcodes, &mut enc_grads);
        for (((a, &x0), &gn), &r) in adv
            .data_mut()
            .iter_mut()
            .zip(x.data())
            .zip(dx_net.data())
            .zip(recon.data())
        {
            let g = gn - scale * (r - *a);
            let v = *a - step_size * g.signum0();
            *a = v.clamp(x0 - budget, x0 + budget).clamp01();
        }
    }
    Ok(adv)
}

/// Mean reconstruction-gap objective the descent above minimizes, one value
/// per batch row.
pub fn reconstruction_gaps(model: &mut CaeModel, x: &Tensor<f32>) -> Result<Vec<f64>> {
    let codes = model.encoder.forward(x, Mode::Eval)?;
    let pseudo = model.pseudo_labels_of_codes(&codes);
    let projected = model.project_codes(&codes, &pseudo);
    let recon = model.decoder.forward(&projected, Mode::Eval)?;
    Ok((0..x.outer())
        .map(|i| crate::tensor::mse::<f32>(recon.row(i), x.row(i)) as f64)
        .collect())
}

/// Hardened outliers aimed at a logit classifier with a reserved class:
/// signed ascent on the cross-entropy toward `class` (usually the noise
/// class) within `budget` per pixel, so the classifier is pushed away from
/// that verdict. Runs `round(budget / step_size)` steps.
pub fn evade_class(
    net: &mut Net<f32>,
    x: &Tensor<f32>,
    class: usize,
    budget: f32,
    step_size: f32,
) -> Result<Tensor<f32>> {
    if budget < 0.0 || step_size <= 0.0 {
        return Err(CaeError::invalid("need budget >= 0 and step_size > 0"));
    }
    let steps = (budget / step_size).round() as usize;
    let labels = vec![class; x.outer()];
    let mut target = ClassifierTarget::new(net);
    pgd::<_, rand_chacha::ChaCha8Rng>(
        &mut target,
        x,
        &labels,
        steps,
        PgdOptions {
            step_size,
            ..PgdOptions::default()
        },
        None,
    )
}

/// The two-factor creation rate: how often the attack fools the front
/// model, times how often the downstream defense then actually accepts a
/// wrong answer.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CreationRate {
    pub fooled_rate: f64,
    pub wrong_given_fooled: f64,
    pub rate: f64,
    pub total: usize,
}

/// Combines per-sample "attack fooled the model" and "downstream answered
/// wrongly" flags. `downstream_wrong` is consulted only where `fooled`
/// holds.
pub fn creation_rate(fooled: &[bool], downstream_wrong: &[bool]) -> Result<CreationRate> {
    if fooled.is_empty() || fooled.len() != downstream_wrong.len() {
        return Err(CaeError::invalid(format!(
            "creation rate needs matching non-empty flags ({} fooled, {} downstream)",
            fooled.len(),
            downstream_wrong.len()
        )));
    }
    let n_fooled = fooled.iter().filter(|&&f| f).count();
    let n_wrong = fooled
        .iter()
        .zip(downstream_wrong)
        .filter(|&(&f, &w)| f && w)
        .count();
    let fooled_rate = n_fooled as f64 / fooled.len() as f64;
    let wrong_given_fooled = if n_fooled == 0 {
        0.0
    } else {
        n_wrong as f64 / n_fooled as f64
    };
    Ok(CreationRate {
        fooled_rate,
        wrong_given_fooled,
        rate: fooled_rate * wrong_given_fooled,
        total: fooled.len(),
    })
}

/// Per-sample "the open-world classifier accepted a wrong label" flags:
/// a refusal or the true label both count as a successful defense.
pub fn openworld_defeated(verdicts: &[Verdict], true_labels: &[usize]) -> Vec<bool> {
    verdicts
        .iter()
        .zip(true_labels)
        .map(|(v, &t)| matches!(v.label, Some(l) if l != t))
        .collect()
}

/// Per-sample "the list classifier's emitted labels miss the truth" flags.
pub fn list_defeated(verdicts: &[ListVerdict], true_labels: &[usize]) -> Vec<bool> {
    verdicts
        .iter()
        .zip(true_labels)
        .map(|(v, &t)| !v.emitted_labels().contains(&t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{baseline_cnn_specs, IMAGE_SHAPE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_classifier(seed: u64, classes: usize) -> Net<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Net::new(&mut rng, &IMAGE_SHAPE, &baseline_cnn_specs(classes)).unwrap()
    }

    #[test]
    fn reconstruction_descent_shrinks_the_gap_within_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut model = CaeModel::new(&mut rng, 9, 10).unwrap();
        let x = random_images(&mut rng, 4);
        let budget = 0.1f32;
        let adv = reconstruction_descent(&mut model, &x, budget, 0.01).unwrap();
        for (&a, &x0) in adv.data().iter().zip(x.data()) {
            assert!((a - x0).abs() <= budget + 1e-6);
            assert!((0.0..=1.0).contains(&a));
        }
        let before = reconstruction_gaps(&mut model, &x).unwrap();
        let after = reconstruction_gaps(&mut model, &adv).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&after) < mean(&before),
            "descent should shrink the mean gap: {} -> {}",
            mean(&before),
            mean(&after)
        );
        // Zero budget is the identity; negative budget is rejected.
        let same = reconstruction_descent(&mut model, &x, 0.0, 0.01).unwrap();
        assert_eq!(same, x);
        assert!(reconstruction_descent(&mut model, &x, -0.1, 0.01).is_err());
        // Determinism.
        let again = reconstruction_descent(&mut model, &x, budget, 0.01).unwrap();
        assert_eq!(adv, again);
    }

    #[test]
    fn evade_class_raises_that_class_loss_within_budget() {
        let mut net = tiny_classifier(77, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = random_images(&mut rng, 4);
        let class = 10usize;
        let labels = vec![class; 4];
        let budget = 0.2f32;
        let adv = evade_class(&mut net, &x, class, budget, 0.01).unwrap();
        for (&a, &x0) in adv.data().iter().zip(x.data()) {
            assert!((a - x0).abs() <= budget + 1e-6);
        }
        let mut target = ClassifierTarget::new(&mut net);
        let (before, _) = target.loss_grad(&x, &labels).unwrap();
        let (after, _) = target.loss_grad(&adv, &labels).unwrap();
        assert!(
            after > before,
            "ascent should raise the class loss: {before} -> {after}"
        );
    }

    fn random_images(rng: &mut ChaCha8Rng, n: usize) -> Tensor<f32> {
        Tensor::from_vec(
            &[n, 1, 28, 28],
            (0..n * 784).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn softmax_ce_matches_closed_forms_and_gradient() {
        // Uniform logits over C classes: loss = ln C.
        let logits = Tensor::<f64>::zeros(&[2, 5]);
        let loss = softmax_cross_entropy(&logits, &[0, 3], None);
        assert!((loss - (5.0f64).ln()).abs() < 1e-6);

        // Finite-difference check in f64.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels = [2usize, 0];
        let logits = Tensor::from_vec(&[2, 3], base.clone()).unwrap();
        let mut d = Tensor::zeros(&[2, 3]);
        softmax_cross_entropy(&logits, &labels, Some(&mut d));
        let h = 1e-6;
        for i in 0..6 {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let lp = softmax_cross_entropy(&Tensor::from_vec(&[2, 3], plus).unwrap(), &labels, None);
            let lm =
                softmax_cross_entropy(&Tensor::from_vec(&[2, 3], minus).unwrap(), &labels, None);
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - d.data()[i]).abs() < 1e-6,
                "logit {i}: fd {fd} vs analytic {}",
                d.data()[i]
            );
        }
    }

    #[test]
    fn pgd_respects_the_step_budget_and_pixel_range() {
        let mut net = tiny_classifier(11, 10);
        let mut target = ClassifierTarget::new(&mut net);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_images(&mut rng, 3);
        let labels = vec![1usize, 2, 3];
        let adv = pgd::<_, ChaCha8Rng>(
            &mut target,
            &x,
            &labels,
            10,
            PgdOptions::default(),
            None,
        )
        .unwrap();
        for (&a, &b) in x.data().iter().zip(adv.data()) {
            assert!((a - b).abs() <= 0.1 + 1e-6);
            assert!((0.0..=1.0).contains(&b));
        }
        // Zero steps: identity.
        let same = pgd::<_, ChaCha8Rng>(
            &mut target,
            &x,
            &labels,
            0,
            PgdOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(same, x);
    }

    #[test]
    fn pgd_ascends_the_loss_monotonically_in_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut model = CaeModel::new(&mut rng, 9, 10).unwrap();
        let x = random_images(&mut rng, 4);
        let labels = vec![0usize, 1, 2, 3];
        let mut losses = Vec::new();
        for steps in [0usize, 3, 6] {
            let mut target = EncoderTarget::new(&mut model, 50.0);
            let adv = pgd::<_, ChaCha8Rng>(
                &mut target,
                &x,
                &labels,
                steps,
                PgdOptions::default(),
                None,
            )
            .unwrap();
            // Per-sample loss via a single-row batch.
            let per_sample: Vec<f64> = (0..4)
                .map(|i| {
                    let row = adv.slice_rows(i..i + 1);
                    target.loss_grad(&row, &labels[i..i + 1]).unwrap().0
                })
                .collect();
            losses.push(per_sample);
        }
        for w in losses.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(b >= a, "loss fell from {a} to {b} with more steps");
            }
        }
    }

    #[test]
    fn pgd_epsilon_ball_and_random_start() {
        let mut net = tiny_classifier(14, 10);
        let mut target = ClassifierTarget::new(&mut net);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = random_images(&mut rng, 2);
        let labels = vec![4usize, 5];
        let opts = PgdOptions {
            epsilon: Some(0.05),
            random_start: true,
            ..PgdOptions::default()
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let adv = pgd(&mut target, &x, &labels, 20, opts, Some(&mut r1)).unwrap();
        for (&a, &b) in x.data().iter().zip(adv.data()) {
            assert!((a - b).abs() <= 0.05 + 1e-6, "left the epsilon ball");
        }
        // Same seed reproduces, different seed differs.
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        let again = pgd(&mut target, &x, &labels, 20, opts, Some(&mut r2)).unwrap();
        assert_eq!(adv, again);
        let mut r3 = ChaCha8Rng::seed_from_u64(100);
        let other = pgd(&mut target, &x, &labels, 20, opts, Some(&mut r3)).unwrap();
        assert_ne!(adv, other);
        // Random start without a ball is a usage error.
        let bad = PgdOptions {
            random_start: true,
            ..PgdOptions::default()
        };
        assert!(pgd(&mut target, &x, &labels, 1, bad, Some(&mut r3)).is_err());
    }

    #[test]
    fn jsma_respects_the_pixel_budget() {
        let mut net = tiny_classifier(16, 10);
        let mut target = ClassifierTarget::new(&mut net);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_images(&mut rng, 2);
        let labels = vec![3usize, 7];
        for k in [0usize, 5, 12] {
            let outs = jsma_batch(&mut target, &x, &labels, k).unwrap();
            for (i, o) in outs.iter().enumerate() {
                assert!(o.l0 <= k, "changed {} pixels with budget {k}", o.l0);
                // Every changed pixel sits at an extreme.
                for (&orig, &now) in x.row(i).iter().zip(&o.image) {
                    if orig != now {
                        assert!(now == 0.0 || now == 1.0);
                    }
                }
            }
            if k == 0 {
                for (i, o) in outs.iter().enumerate() {
                    assert_eq!(o.image, x.row(i));
                    assert_eq!(o.l0, 0);
                }
            }
        }
    }

    #[test]
    fn jsma_success_is_monotone_in_the_budget() {
        // Early stop makes a k-budget run a prefix of a larger-budget run,
        // so successes can only accumulate.
        let mut net = tiny_classifier(18, 10);
        let mut target = ClassifierTarget::new(&mut net);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random_images(&mut rng, 4);
        let labels: Vec<usize> = predicted_labels(&target.scores(&x).unwrap());
        let mut prev: Option<Vec<bool>> = None;
        for k in [10usize, 25, 60] {
            let outs = jsma_batch(&mut target, &x, &labels, k).unwrap();
            let succ: Vec<bool> = outs.iter().map(|o| o.success).collect();
            if let Some(p) = &prev {
                for (a, b) in p.iter().zip(&succ) {
                    assert!(!a | b, "a success disappeared with a larger budget");
                }
            }
            prev = Some(succ);
        }
    }

    #[test]
    fn strong_attack_bounds_and_zero_bound_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut model = CaeModel::new(&mut rng, 9, 10).unwrap();
        let x = random_images(&mut rng, 2);
        let labels = vec![1usize, 2];
        let cfg = StrongConfig {
            stage1_steps: 5,
            ..StrongConfig::default()
        };
        // bound = 0 reproduces the stage-1 attack exactly.
        let s0 = strong_attack(&mut model, &x, &labels, 0.0, &cfg).unwrap();
        let stage1 = {
            let mut target = EncoderTarget::new(&mut model, cfg.gamma);
            pgd::<_, ChaCha8Rng>(
                &mut target,
                &x,
                &labels,
                5,
                PgdOptions::default(),
                None,
            )
            .unwrap()
        };
        assert_eq!(s0, stage1);
        // Stage 2 stays within `bound` of the stage-1 output, in range.
        for objective in [Stage2Objective::ClassAndRecon, Stage2Objective::ClassOnly] {
            let cfg2 = StrongConfig { objective, ..cfg };
            let adv = strong_attack(&mut model, &x, &labels, 0.1, &cfg2).unwrap();
            let stage1b = strong_attack(&mut model, &x, &labels, 0.0, &cfg2).unwrap();
            for (&a, &s) in adv.data().iter().zip(stage1b.data()) {
                assert!((a - s).abs() <= 0.1 + 1e-6);
                assert!((0.0..=1.0).contains(&a));
            }
        }
        assert!(strong_attack(&mut model, &x, &labels, -0.1, &cfg).is_err());
    }

    #[test]
    fn creation_rate_multiplies_the_two_factors() {
        // 40% fooled, and of those 25% get past the defense: rate 10%.
        let fooled = vec![true, true, false, false, false, true, true, false, false, false];
        let wrong = vec![true, false, false, false, false, false, false, false, false, false];
        let r = creation_rate(&fooled, &wrong).unwrap();
        assert!((r.fooled_rate - 0.4).abs() < 1e-12);
        assert!((r.wrong_given_fooled - 0.25).abs() < 1e-12);
        assert!((r.rate - 0.1).abs() < 1e-12);
        // The published worked example is the same identity: 35% fooled
        // with 26.7% slipping through is a 9.345% rate.
        assert!((0.35f64 * 0.267 - 0.09345).abs() < 1e-12);
        // No successes at all: rate 0, no division blowup.
        let none = creation_rate(&[false, false], &[true, true]).unwrap();
        assert_eq!(none.rate, 0.0);
        assert_eq!(none.wrong_given_fooled, 0.0);
        assert!(creation_rate(&[], &[]).is_err());
        assert!(creation_rate(&[true], &[]).is_err());
    }

    #[test]
    fn downstream_defeat_flags() {
        use crate::openworld::Branch;
        let v = |label: Option<usize>| Verdict {
            label,
            branch: Branch::CloseAccept,
            pseudo_label: 0,
            pseudo_distance: 0.0,
            distances: vec![],
        };
        let verdicts = vec![v(Some(3)), v(Some(5)), v(None)];
        let flags = openworld_defeated(&verdicts, &[3, 3, 3]);
        // True label accepted, wrong label accepted, refusal.
        assert_eq!(flags, vec![false, true, false]);

        let lv = |labels: &[usize]| ListVerdict {
            p_outlier: 0.0,
            probs: vec![],
            emitted: labels.iter().map(|&l| (l, vec![])).collect(),
            l_dis: vec![],
            d_dis: vec![],
            e: vec![],
        };
        let lvs = vec![lv(&[3, 7]), lv(&[7]), lv(&[])];
        assert_eq!(list_defeated(&lvs, &[3, 3, 3]), vec![false, true, true]);
    }

    #[test]
    fn encoder_target_scores_match_projection_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut model = CaeModel::new(&mut rng, 9, 10).unwrap();
        let x = random_images(&mut rng, 2);
        let codes = model.encode(&x).unwrap();
        let expect: Vec<Vec<f32>> = (0..2).map(|i| model.bank.weights(codes.row(i))).collect();
        let pseudo = model.pseudo_labels_of_codes(&codes);
        let mut target = EncoderTarget::new(&mut model, 50.0);
        let scores = target.scores(&x).unwrap();
        assert_eq!(scores.shape(), &[2, 10]);
        for i in 0..2 {
            assert_eq!(scores.row(i), &expect[i][..]);
        }
        // Predicted labels agree with pseudo-labels (same tie rule).
        assert_eq!(predicted_labels(&scores), pseudo);
    }

    /// The score-combination gradient agrees with finite differences
    /// through the real encoder (checked in a handful of pixels).
    #[test]
    fn score_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut net = tiny_classifier(31, 4);
        let mut target = ClassifierTarget::new(&mut net);
        let x = random_images(&mut rng, 1);
        let mut cot = Tensor::zeros(&[1, 4]);
        for (c, v) in cot.row_mut(0).iter_mut().enumerate() {
            *v = if c == 1 { 1.0 } else { -1.0 };
        }
        let g = target.score_grad(&x, &cot).unwrap();
        let combo = |t: &mut ClassifierTarget, x: &Tensor<f32>| -> f64 {
            let s = t.scores(x).unwrap();
            s.row(0)
                .iter()
                .zip(cot.row(0))
                .map(|(&a, &c)| (a * c) as f64)
                .sum()
        };
        let h = 1e-3f32;
        for &i in &[0usize, 97, 311, 500, 783] {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            let fd = (combo(&mut target, &plus) - combo(&mut target, &minus)) / (2.0 * h as f64);
            let diff = (fd - g.data()[i] as f64).abs();
            assert!(
                diff < 2e-2 * (1.0 + fd.abs()),
                "pixel {i}: fd {fd} vs analytic {}",
                g.data()[i]
            );
        }
    }
}
