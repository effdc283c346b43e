//! Training: encoder classification loss, joint objective, adversarial
//! objective, termination rule, and the epoch loop.
//!
//! The encoder loss treats the per-label projection weights of a code as
//! class scores: cross-entropy of `softmax(weights / gamma)` against the
//! true label, computed with max-subtraction for stability. The joint
//! objective adds `lambda` times the reconstruction error of the decode of
//! the *true-label* projection. The adversarial objective evaluates the
//! encoder term at a worst-case perturbation of the input (found by
//! projected gradient ascent inside an L-infinity ball) and keeps
//! reconstruction terms for both the perturbed and the clean input.
//!
//! Training stops early once both hold on the training set:
//! - at least `quorum` of samples have encoder loss at or below
//!   `ln(1 + o * exp(-margin / gamma))` (the loss of a code that puts
//!   `margin` more weight on its own block than on every other), and
//! - the mean joint loss is at or below `loss_ceiling`.

use crate::error::{CaeError, Result};
use crate::model::CaeModel;
use crate::nn::{Grads, Mode};
use crate::tensor::{mse, Scalar, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// All knobs of a training run. The default reproduces the reference
/// configuration for ten-label 28x28 data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Softmax temperature over projection weights.
    pub gamma: f64,
    /// Weight of the reconstruction terms in the joint objective.
    pub lambda: f64,
    /// Projection-weight margin in the termination bound.
    pub margin: f64,
    /// Fraction of training samples that must meet the encoder-loss bound.
    pub quorum: f64,
    /// Mean joint-loss ceiling for termination.
    pub loss_ceiling: f64,
    /// Adam learning rate.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Inner ascent steps per batch; 0 disables the adversarial objective
    /// (plain joint training).
    pub attack_steps: usize,
    /// Inner ascent step size; the perturbation budget is
    /// `attack_steps * attack_step_size`.
    pub attack_step_size: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 50.0,
            lambda: 1.0,
            margin: 80.0,
            quorum: 0.95,
            loss_ceiling: 0.08,
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 60,
            attack_steps: 10,
            attack_step_size: 0.01,
            seed: 2024,
        }
    }
}

impl TrainConfig {
    /// Encoder-loss threshold for termination with `o + 1` labels:
    /// `ln(1 + o * exp(-margin / gamma))`.
    pub fn encoder_loss_bound(&self, o: usize) -> f64 {
        (1.0 + o as f64 * (-self.margin / self.gamma).exp()).ln()
    }

    /// L-infinity radius reachable by the inner ascent.
    pub fn attack_budget(&self) -> f64 {
        self.attack_steps as f64 * self.attack_step_size
    }
}

/// Encoder loss of one code against its label: cross-entropy of
/// `softmax(weights / gamma)`, max-subtracted. Returns the loss and, if
/// `dweights` is given, writes `d loss / d weight_l` into it.
pub fn encoder_loss_from_weights<S: Scalar>(
    weights: &[S],
    label: usize,
    gamma: S,
    mut dweights: Option<&mut [S]>,
) -> S {
    debug_assert!(label < weights.len());
    let mut max = weights[0];
    for &w in &weights[1..] {
        max = max.max(w);
    }
    let mut denom = S::ZERO;
    for &w in weights {
        denom += ((w - max) / gamma).exp();
    }
    let loss = denom.ln() - (weights[label] - max) / gamma;
    if let Some(d) = dweights.as_deref_mut() {
        for (i, &w) in weights.iter().enumerate() {
            let p = ((w - max) / gamma).exp() / denom;
            d[i] = (p - if i == label { S::ONE } else { S::ZERO }) / gamma;
        }
    }
    loss
}

/// Mean encoder loss of a batch of codes; optionally writes the gradient
/// with respect to every code entry (already averaged over the batch).
pub fn encoder_loss_batch<S: Scalar>(
    model: &CaeModel,
    codes: &Tensor<S>,
    labels: &[u8],
    gamma: S,
    mut dcodes: Option<&mut Tensor<S>>,
) -> S {
    let n = codes.outer();
    debug_assert_eq!(n, labels.len());
    let bank = &model.bank;
    let num_labels = bank.num_labels();
    let inv_n = S::ONE / S::from_usize(n);
    let mut total = S::ZERO;
    let mut dw = vec![S::ZERO; num_labels];
    for i in 0..n {
        let weights: Vec<S> = bank.weights(codes.row(i));
        let grad_slot = dcodes.as_deref_mut().map(|_| &mut dw[..]);
        let loss =
            encoder_loss_from_weights(&weights, labels[i] as usize, gamma, grad_slot);
        total += loss;
        if let Some(dc) = dcodes.as_deref_mut() {
            // d weight_l / d code_j = 1 inside block l: spread each weight
            // gradient uniformly over its block.
            let row = dc.row_mut(i);
            for l in 0..num_labels {
                let g = dw[l] * inv_n;
                for v in &mut row[bank.block_range(l)] {
                    *v += g;
                }
            }
        }
    }
    total * inv_n
}

/// Per-batch loss readings.
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchLosses {
    pub encoder: f64,
    pub reconstruction: f64,
    pub joint: f64,
}

/// One optimization step on the *joint* objective (no adversary):
/// encoder CE + lambda * MSE(decode(project(code, true label)), x).
/// Returns the batch losses. `opts` are the Adam states of encoder/decoder.
pub fn joint_step(
    model: &mut CaeModel,
    x: &Tensor<f32>,
    labels: &[u8],
    cfg: &TrainConfig,
    enc_opt: &mut crate::nn::Adam<f32>,
    dec_opt: &mut crate::nn::Adam<f32>,
) -> Result<BatchLosses> {
    let (losses, enc_grads, dec_grads) = joint_grads(model, x, labels, cfg, Mode::Train)?;
    enc_opt.step(&mut model.encoder, &enc_grads);
    dec_opt.step(&mut model.decoder, &dec_grads);
    Ok(losses)
}

/// Forward/backward of the joint objective; returns losses and gradients
/// without applying them.
fn joint_grads(
    model: &mut CaeModel,
    x: &Tensor<f32>,
    labels: &[u8],
    cfg: &TrainConfig,
    mode: Mode,
) -> Result<(BatchLosses, Grads<f32>, Grads<f32>)> {
    let n = x.outer();
    let gamma = cfg.gamma as f32;
    let lambda = cfg.lambda as f32;

    let (codes, enc_cache) = model.encoder.forward_cached(x, mode)?;
    let mut dcodes = Tensor::zeros(codes.shape());
    let enc_loss =
        encoder_loss_batch(model, &codes, labels, gamma, Some(&mut dcodes)).to_f64();

    // Reconstruction branch through the true-label projection.
    let label_idx: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let projected = model.project_codes(&codes, &label_idx);
    let (recon, dec_cache) = model.decoder.forward_cached(&projected, mode)?;
    let rec_loss = mse(recon.data(), x.data()).to_f64();

    // d/d recon of lambda * mean((recon - x)^2), averaged over batch rows
    // jointly (the mean runs over every element).
    let scale = 2.0 * lambda / recon.len() as f32;
    let mut drecon = Tensor::zeros(recon.shape());
    for ((d, &r), &t) in drecon
        .data_mut()
        .iter_mut()
        .zip(recon.data())
        .zip(x.data())
    {
        *d = scale * (r - t);
    }

    let mut dec_grads = Grads::zeros_like(&model.decoder);
    let dprojected = model.decoder.backward(&dec_cache, &drecon, &mut dec_grads);
    // Projection passes gradients through only the true-label block.
    for i in 0..n {
        let r = model.bank.block_range(label_idx[i]);
        let src = &dprojected.row(i)[r.clone()];
        // Safe split: dcodes row i block r accumulates.
        let dst = &mut dcodes.row_mut(i)[r];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }

    let mut enc_grads = Grads::zeros_like(&model.encoder);
    model.encoder.backward(&enc_cache, &dcodes, &mut enc_grads);

    Ok((
        BatchLosses {
            encoder: enc_loss,
            reconstruction: rec_loss,
            joint: enc_loss + cfg.lambda * rec_loss,
        },
        enc_grads,
        dec_grads,
    ))
}

/// Worst-case perturbation of `x` for the encoder loss: `steps` rounds of
/// sign-gradient ascent with the given step size, each iterate clamped to
/// the valid pixel range. The encoder runs with frozen statistics. Returns
/// the perturbed batch.
pub fn adversarial_inputs(
    model: &mut CaeModel,
    x: &Tensor<f32>,
    labels: &[u8],
    gamma: f32,
    steps: usize,
    step_size: f32,
) -> Result<Tensor<f32>> {
    let mut adv = x.clone();
    for _ in 0..steps {
        let (codes, cache) = model.encoder.forward_cached(&adv, Mode::Eval)?;
        let mut dcodes = Tensor::zeros(codes.shape());
        encoder_loss_batch(model, &codes, labels, gamma, Some(&mut dcodes));
        let mut grads = Grads::zeros_like(&model.encoder);
        let dx = model.encoder.backward(&cache, &dcodes, &mut grads);
        for (a, &g) in adv.data_mut().iter_mut().zip(dx.data()) {
            *a = (*a + step_size * g.signum0()).clamp01();
        }
    }
    Ok(adv)
}

/// One optimization step on the *adversarial* objective:
/// `CE(x_adv) + lambda * (MSE(F(x_adv), x) + MSE(F(x), x))`
/// where `x_adv` maximizes the encoder loss within the attack budget and
/// `F` decodes the true-label projection.
pub fn adversarial_step(
    model: &mut CaeModel,
    x: &Tensor<f32>,
    labels: &[u8],
    cfg: &TrainConfig,
    enc_opt: &mut crate::nn::Adam<f32>,
    dec_opt: &mut crate::nn::Adam<f32>,
) -> Result<BatchLosses> {
    let gamma = cfg.gamma as f32;
    let lambda = cfg.lambda as f32;
    let adv = adversarial_inputs(
        model,
        x,
        labels,
        gamma,
        cfg.attack_steps,
        cfg.attack_step_size as f32,
    )?;
    let n = x.outer();
    let label_idx: Vec<usize> = labels.iter().map(|&l| l as usize).collect();

    // Branch 1: encoder CE at x_adv plus reconstruction of x from x_adv.
    let (codes_a, enc_cache_a) = model.encoder.forward_cached(&adv, Mode::Train)?;
    let mut dcodes_a = Tensor::zeros(codes_a.shape());
    let enc_loss =
        encoder_loss_batch(model, &codes_a, labels, gamma, Some(&mut dcodes_a)).to_f64();
    let projected_a = model.project_codes(&codes_a, &label_idx);
    let (recon_a, dec_cache_a) = model.decoder.forward_cached(&projected_a, Mode::Train)?;
    let rec_loss_a = mse(recon_a.data(), x.data()).to_f64();

    let scale = 2.0 * lambda / recon_a.len() as f32;
    let mut drecon_a = Tensor::zeros(recon_a.shape());
    for ((d, &r), &t) in drecon_a
        .data_mut()
        .iter_mut()
        .zip(recon_a.data())
        .zip(x.data())
    {
        *d = scale * (r - t);
    }
    let mut dec_grads = Grads::zeros_like(&model.decoder);
    let dprojected_a = model
        .decoder
        .backward(&dec_cache_a, &drecon_a, &mut dec_grads);
    for i in 0..n {
        let r = model.bank.block_range(label_idx[i]);
        let src = &dprojected_a.row(i)[r.clone()];
        let dst = &mut dcodes_a.row_mut(i)[r];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    let mut enc_grads = Grads::zeros_like(&model.encoder);
    model.encoder.backward(&enc_cache_a, &dcodes_a, &mut enc_grads);

    // Branch 2: clean reconstruction term MSE(F(x), x).
    let (codes_c, enc_cache_c) = model.encoder.forward_cached(x, Mode::Train)?;
    let projected_c = model.project_codes(&codes_c, &label_idx);
    let (recon_c, dec_cache_c) = model.decoder.forward_cached(&projected_c, Mode::Train)?;
    let rec_loss_c = mse(recon_c.data(), x.data()).to_f64();
    let mut drecon_c = Tensor::zeros(recon_c.shape());
    for ((d, &r), &t) in drecon_c
        .data_mut()
        .iter_mut()
        .zip(recon_c.data())
        .zip(x.data())
    {
        *d = scale * (r - t);
    }
    let dprojected_c = model
        .decoder
        .backward(&dec_cache_c, &drecon_c, &mut dec_grads);
    let mut dcodes_c = Tensor::zeros(codes_c.shape());
    for i in 0..n {
        let r = model.bank.block_range(label_idx[i]);
        let src = &dprojected_c.row(i)[r.clone()];
        let dst = &mut dcodes_c.row_mut(i)[r];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    model.encoder.backward(&enc_cache_c, &dcodes_c, &mut enc_grads);

    enc_opt.step(&mut model.encoder, &enc_grads);
    dec_opt.step(&mut model.decoder, &dec_grads);

    let rec_total = rec_loss_a + rec_loss_c;
    Ok(BatchLosses {
        encoder: enc_loss,
        reconstruction: rec_total,
        joint: enc_loss + cfg.lambda * rec_total,
    })
}

/// Per-epoch training log entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_encoder_loss: f64,
    pub mean_reconstruction_loss: f64,
    pub mean_joint_loss: f64,
    /// Fraction of training samples whose clean encoder loss meets the
    /// termination bound.
    pub bound_fraction: f64,
    pub seconds: f64,
}

/// Complete training record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    pub terminated_early: bool,
    pub total_seconds: f64,
}

impl TrainReport {
    /// Renders the per-epoch log as CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "epoch,mean_encoder_loss,mean_reconstruction_loss,mean_joint_loss,bound_fraction,seconds\n",
        );
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.4},{:.1}\n",
                e.epoch,
                e.mean_encoder_loss,
                e.mean_reconstruction_loss,
                e.mean_joint_loss,
                e.bound_fraction,
                e.seconds
            ));
        }
        s
    }
}

/// Measures the termination quantities on (a sample of) the training set
/// with frozen statistics: per-sample clean encoder losses and the mean
/// joint loss.
pub fn termination_readings(
    model: &mut CaeModel,
    images: &Tensor<f32>,
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let gamma = cfg.gamma as f32;
    let bound = cfg.encoder_loss_bound(model.bank.max_label());
    let n = images.outer();
    let batch = cfg.batch_size.max(1);
    let mut below = 0usize;
    let mut joint_sum = 0.0f64;
    let mut start = 0usize;
    while start < n {
        let end = (start + batch).min(n);
        let x = images.slice_rows(start..end);
        let lab = &labels[start..end];
        let codes = model.encoder.forward(&x, Mode::Eval)?;
        let label_idx: Vec<usize> = lab.iter().map(|&l| l as usize).collect();
        let projected = model.project_codes(&codes, &label_idx);
        let recon = model.decoder.forward(&projected, Mode::Eval)?;
        for i in 0..codes.outer() {
            let weights = model.bank.weights(codes.row(i));
            let el = encoder_loss_from_weights(
                &weights,
                label_idx[i],
                gamma,
                None,
            )
            .to_f64();
            if el <= bound {
                below += 1;
            }
            let rl = mse(recon.row(i), x.row(i)).to_f64();
            joint_sum += el + cfg.lambda * rl;
        }
        start = end;
    }
    Ok((below as f64 / n as f64, joint_sum / n as f64))
}

/// Progress callback invoked after every epoch.
pub type EpochHook<'a> = dyn FnMut(&EpochStats) + 'a;

/// Trains a model on labeled images. Shuffles per epoch from the config
/// seed, applies the adversarial objective (or the plain joint objective
/// when `attack_steps == 0`), and stops early when the termination rule
/// holds. Returns the per-epoch report.
pub fn train(
    model: &mut CaeModel,
    images: &Tensor<f32>,
    labels: &[u8],
    cfg: &TrainConfig,
    mut hook: Option<&mut EpochHook<'_>>,
) -> Result<TrainReport> {
    let n = images.outer();
    if n == 0 || n != labels.len() {
        return Err(CaeError::invalid(format!(
            "training set: {n} images, {} labels",
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l as usize > model.bank.max_label()) {
        return Err(CaeError::invalid("label outside the mask bank range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut enc_opt = crate::nn::Adam::new(&model.encoder, cfg.learning_rate);
    let mut dec_opt = crate::nn::Adam::new(&model.decoder, cfg.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::new();
    let mut terminated_early = false;
    let run_start = Instant::now();

    for epoch in 0..cfg.max_epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        let mut sums = BatchLosses::default();
        let mut batches = 0usize;
        let mut start = 0usize;
        while start < n {
            let end = (start + cfg.batch_size).min(n);
            let idx = &order[start..end];
            let rows: Vec<&[f32]> = idx.iter().map(|&i| images.row(i)).collect();
            let x = Tensor::stack_rows(&rows, &images.shape()[1..])?;
            let lab: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let losses = if cfg.attack_steps == 0 {
                joint_step(model, &x, &lab, cfg, &mut enc_opt, &mut dec_opt)?
            } else {
                adversarial_step(model, &x, &lab, cfg, &mut enc_opt, &mut dec_opt)?
            };
            if !losses.joint.is_finite() {
                return Err(CaeError::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {batches}"
                )));
            }
            sums.encoder += losses.encoder;
            sums.reconstruction += losses.reconstruction;
            sums.joint += losses.joint;
            batches += 1;
            start = end;
        }
        let (bound_fraction, mean_joint) = termination_readings(model, images, labels, cfg)?;
        let stats = EpochStats {
            epoch,
            mean_encoder_loss: sums.encoder / batches as f64,
            mean_reconstruction_loss: sums.reconstruction / batches as f64,
            mean_joint_loss: mean_joint,
            bound_fraction,
            seconds: t0.elapsed().as_secs_f64(),
        };
        if let Some(h) = hook.as_deref_mut() {
            h(&stats);
        }
        epochs.push(stats);
        if bound_fraction >= cfg.quorum && mean_joint <= cfg.loss_ceiling {
            terminated_early = true;
            break;
        }
    }

    Ok(TrainReport {
        config: cfg.clone(),
        epochs,
        terminated_early,
        total_seconds: run_start.elapsed().as_secs_f64(),
    })
}
