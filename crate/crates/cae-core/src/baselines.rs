//! The two comparison classifiers: a plain CNN trained to put noise into
//! an eleventh "none of the digits" class, and an adversarially trained
//! ten-class CNN (worst-case perturbed batches, randomized-start signed
//! PGD inside the loop).
//!
//! Both use the same convolutional stack (`baseline_cnn_specs`) and the
//! same data/attack plumbing as the autoencoder pipeline, so their rates
//! are directly comparable.

use crate::attacks::{pgd, softmax_cross_entropy, ClassifierTarget, PgdOptions};
use crate::error::{CaeError, Result};
use crate::model::{baseline_cnn_specs, IMAGE_SHAPE};
use crate::nn::{Adam, Grads, Mode, Net};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which baseline a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Eleven outputs; index 10 is the noise/outlier class, reported as −1.
    #[serde(rename = "outlier-11")]
    Outlier11,
    /// Ten outputs, adversarially trained.
    #[serde(rename = "madry-10")]
    Madry10,
}

impl BaselineKind {
    pub fn num_classes(self) -> usize {
        match self {
            BaselineKind::Outlier11 => 11,
            BaselineKind::Madry10 => 10,
        }
    }
}

/// Index of the noise class in the eleven-way head.
pub const NOISE_CLASS: usize = 10;

/// Baseline training knobs. The adversarial fields only matter for the
/// adversarially trained variant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// L∞ radius of the inner perturbation (0 degenerates to standard
    /// training).
    pub epsilon: f32,
    pub attack_steps: usize,
    pub attack_step_size: f32,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 5,
            seed: 2024,
            epsilon: 0.1,
            attack_steps: 10,
            attack_step_size: 0.01,
        }
    }
}

/// Per-epoch readings of a baseline run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BaselineEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub seconds: f64,
}

/// Progress callback invoked after every epoch.
pub type BaselineHook<'a> = dyn FnMut(&BaselineEpoch) + 'a;

fn validate(cfg: &BaselineConfig) -> Result<()> {
    if cfg.batch_size == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(CaeError::invalid(format!(
            "baseline config needs positive batch size, epochs, learning rate: {cfg:?}"
        )));
    }
    Ok(())
}

/// One cross-entropy descent step; returns the batch loss and how many
/// rows the pre-update network already classified correctly.
fn ce_step(
    net: &mut Net<f32>,
    opt: &mut Adam<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
) -> Result<(f64, usize)> {
    let (logits, cache) = net.forward_cached(x, Mode::Train)?;
    let mut dlogits = Tensor::zeros(logits.shape());
    let loss = softmax_cross_entropy(&logits, labels, Some(&mut dlogits));
    let correct = crate::attacks::predicted_labels(&logits)
        .iter()
        .zip(labels)
        .filter(|&(p, l)| p == l)
        .count();
    let mut grads = Grads::zeros_like(net);
    net.backward(&cache, &dlogits, &mut grads);
    opt.step(net, &grads);
    Ok((loss, correct))
}

fn gather_rows(images: &Tensor<f32>, idx: &[usize]) -> Tensor<f32> {
    let mut shape = images.shape().to_vec();
    shape[0] = idx.len();
    let row_len = images.inner_len();
    let mut out = Tensor::zeros(&shape);
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(images.row(i));
        let _ = row_len;
    }
    out
}

/// Trains the eleven-class outlier-aware CNN: every epoch interleaves one
/// batch of labeled digits with one batch of noise (labeled as the noise
/// class), one-to-one.
pub fn train_outlier_cnn(
    images: &Tensor<f32>,
    labels: &[u8],
    noise: &Tensor<f32>,
    cfg: &BaselineConfig,
    mut hook: Option<&mut BaselineHook<'_>>,
) -> Result<(Net<f32>, Vec<BaselineEpoch>)> {
    validate(cfg)?;
    if images.outer() == 0 || images.outer() != labels.len() || noise.outer() == 0 {
        return Err(CaeError::invalid(format!(
            "outlier training needs non-empty sets: {} digits, {} labels, {} noise",
            images.outer(),
            labels.len(),
            noise.outer()
        )));
    }
    if labels.iter().any(|&l| l as usize >= NOISE_CLASS) {
        return Err(CaeError::invalid("digit labels must stay below the noise class"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Net::new(&mut rng, &IMAGE_SHAPE, &baseline_cnn_specs(11))?;
    let mut opt = Adam::new(&net, cfg.learning_rate);
    let mut report = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = std::time::Instant::now();
        let mut digit_idx: Vec<usize> = (0..images.outer()).collect();
        let mut noise_idx: Vec<usize> = (0..noise.outer()).collect();
        digit_idx.shuffle(&mut rng);
        noise_idx.shuffle(&mut rng);
        let mut total_loss = 0.0;
        let mut total_correct = 0usize;
        let mut total_seen = 0usize;
        let batches = digit_idx
            .chunks(cfg.batch_size)
            .count()
            .max(noise_idx.chunks(cfg.batch_size).count());
        let mut digit_chunks = digit_idx.chunks(cfg.batch_size);
        let mut noise_chunks = noise_idx.chunks(cfg.batch_size);
        for _ in 0..batches {
            if let Some(chunk) = digit_chunks.next() {
                let x = gather_rows(images, chunk);
                let y: Vec<usize> = chunk.iter().map(|&i| labels[i] as usize).collect();
                let (loss, correct) = ce_step(&mut net, &mut opt, &x, &y)?;
                total_loss += loss * chunk.len() as f64;
                total_correct += correct;
                total_seen += chunk.len();
            }
            if let Some(chunk) = noise_chunks.next() {
                let x = gather_rows(noise, chunk);
                let y = vec![NOISE_CLASS; chunk.len()];
                let (loss, correct) = ce_step(&mut net, &mut opt, &x, &y)?;
                total_loss += loss * chunk.len() as f64;
                total_correct += correct;
                total_seen += chunk.len();
            }
        }
        let stats = BaselineEpoch {
            epoch,
            mean_loss: total_loss / total_seen as f64,
            train_accuracy: total_correct as f64 / total_seen as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(h) = hook.as_deref_mut() {
            h(&stats);
        }
        report.push(stats);
    }
    Ok((net, report))
}

/// Adversarial training of the ten-class CNN: every batch is replaced by
/// its worst-case perturbation (randomized-start signed PGD inside an
/// ε-ball) before the descent step. `epsilon = 0` trains on clean batches.
pub fn train_madry_cnn(
    images: &Tensor<f32>,
    labels: &[u8],
    cfg: &BaselineConfig,
    mut hook: Option<&mut BaselineHook<'_>>,
) -> Result<(Net<f32>, Vec<BaselineEpoch>)> {
    validate(cfg)?;
    if images.outer() == 0 || images.outer() != labels.len() {
        return Err(CaeError::invalid(format!(
            "training set: {} images, {} labels",
            images.outer(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l as usize >= 10) {
        return Err(CaeError::invalid("labels must be ten-class"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Net::new(&mut rng, &IMAGE_SHAPE, &baseline_cnn_specs(10))?;
    let mut opt = Adam::new(&net, cfg.learning_rate);
    let perturb = cfg.epsilon > 0.0 && cfg.attack_steps > 0;
    let mut report = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = std::time::Instant::now();
        let mut idx: Vec<usize> = (0..images.outer()).collect();
        idx.shuffle(&mut rng);
        let mut total_loss = 0.0;
        let mut total_correct = 0usize;
        for chunk in idx.chunks(cfg.batch_size) {
            let x = gather_rows(images, chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i] as usize).collect();
            let x_train = if perturb {
                let mut target = ClassifierTarget::new(&mut net);
                pgd(
                    &mut target,
                    &x,
                    &y,
                    cfg.attack_steps,
                    PgdOptions {
                        step_size: cfg.attack_step_size,
                        epsilon: Some(cfg.epsilon),
                        random_start: true,
                        early_stop: false,
                    },
                    Some(&mut rng),
                )?
            } else {
                x
            };
            let (loss, correct) = ce_step(&mut net, &mut opt, &x_train, &y)?;
            total_loss += loss * chunk.len() as f64;
            total_correct += correct;
        }
        let stats = BaselineEpoch {
            epoch,
            mean_loss: total_loss / images.outer() as f64,
            train_accuracy: total_correct as f64 / images.outer() as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(h) = hook.as_deref_mut() {
            h(&stats);
        }
        report.push(stats);
    }
    Ok((net, report))
}

/// Argmax prediction; on an eleven-way head the noise class comes back as
/// −1, so the result is directly comparable with open-world verdicts.
pub fn baseline_predict(net: &mut Net<f32>, x: &Tensor<f32>) -> Result<Vec<i64>> {
    let logits = net.forward(x, Mode::Eval)?;
    let wide = logits.shape()[1] == 11;
    Ok(crate::attacks::predicted_labels(&logits)
        .into_iter()
        .map(|p| {
            if wide && p == NOISE_CLASS {
                -1
            } else {
                p as i64
            }
        })
        .collect())
}

/// Batched accuracy of a baseline on labeled digits.
pub fn baseline_accuracy(
    net: &mut Net<f32>,
    images: &Tensor<f32>,
    labels: &[u8],
    batch: usize,
) -> Result<f64> {
    let preds = baseline_predict_batched(net, images, batch)?;
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(CaeError::invalid("accuracy needs matching non-empty sets"));
    }
    Ok(preds
        .iter()
        .zip(labels)
        .filter(|&(&p, &l)| p == l as i64)
        .count() as f64
        / preds.len() as f64)
}

/// Fraction of a (presumed outlier) set the eleven-way head sends to −1.
pub fn outlier_recognition_rate(
    net: &mut Net<f32>,
    images: &Tensor<f32>,
    batch: usize,
) -> Result<f64> {
    let preds = baseline_predict_batched(net, images, batch)?;
    if preds.is_empty() {
        return Err(CaeError::invalid("recognition rate over an empty set"));
    }
    Ok(preds.iter().filter(|&&p| p == -1).count() as f64 / preds.len() as f64)
}

/// Batched [`baseline_predict`] for large sets.
pub fn baseline_predict_batched(
    net: &mut Net<f32>,
    images: &Tensor<f32>,
    batch: usize,
) -> Result<Vec<i64>> {
    let n = images.outer();
    let batch = batch.max(1);
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        out.extend(baseline_predict(net, &images.slice_rows(start..end))?);
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(seed: u64, n_per_class: usize, classes: usize) -> (Tensor<f32>, Vec<u8>) {
        // Linearly separable "images": class c lights up a distinct patch.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_per_class * classes;
        let mut data = vec![0.0f32; n * 784];
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % classes;
            labels.push(c as u8);
            for j in 0..784 {
                let base = if j / 78 == c { 0.9 } else { 0.05 };
                data[i * 784 + j] = (base + rng.gen_range(-0.05..0.05f32)).clamp(0.0, 1.0);
            }
        }
        (Tensor::from_vec(&[n, 1, 28, 28], data).unwrap(), labels)
    }

    #[test]
    fn outlier_cnn_learns_digits_and_noise_apart() {
        let (digits, labels) = blobs(41, 12, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = Tensor::from_vec(
            &[48, 1, 28, 28],
            (0..48 * 784).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
        )
        .unwrap();
        let cfg = BaselineConfig {
            epochs: 6,
            batch_size: 16,
            ..BaselineConfig::default()
        };
        let (mut net, report) =
            train_outlier_cnn(&digits, &labels, &noise, &cfg, None).unwrap();
        assert_eq!(report.len(), 6);
        assert!(report.last().unwrap().mean_loss < report.first().unwrap().mean_loss);
        // Digits classified, noise flagged as -1.
        let acc = baseline_accuracy(&mut net, &digits, &labels, 32).unwrap();
        assert!(acc > 0.9, "digit accuracy {acc}");
        let rec = outlier_recognition_rate(&mut net, &noise, 32).unwrap();
        assert!(rec > 0.9, "noise recognition {rec}");
        // Eleven-way head can emit -1, and did; predictions deterministic.
        let p1 = baseline_predict(&mut net, &noise).unwrap();
        let p2 = baseline_predict(&mut net, &noise).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn madry_training_learns_and_never_emits_minus_one() {
        let (digits, labels) = blobs(43, 10, 4);
        let cfg = BaselineConfig {
            epochs: 10,
            batch_size: 16,
            epsilon: 0.05,
            attack_steps: 3,
            ..BaselineConfig::default()
        };
        let (mut net, report) = train_madry_cnn(&digits, &labels, &cfg, None).unwrap();
        assert!(report.last().unwrap().mean_loss < report.first().unwrap().mean_loss);
        let preds = baseline_predict(&mut net, &digits).unwrap();
        assert!(preds.iter().all(|&p| (0..10).contains(&p)));
        let acc = baseline_accuracy(&mut net, &digits, &labels, 32).unwrap();
        assert!(acc > 0.9, "accuracy {acc}");
    }

    #[test]
    fn zero_epsilon_matches_standard_training_exactly() {
        let (digits, labels) = blobs(44, 6, 3);
        let clean_cfg = BaselineConfig {
            epochs: 2,
            batch_size: 8,
            epsilon: 0.0,
            ..BaselineConfig::default()
        };
        let via_zero = train_madry_cnn(&digits, &labels, &clean_cfg, None).unwrap().0;
        let via_no_steps = train_madry_cnn(
            &digits,
            &labels,
            &BaselineConfig {
                attack_steps: 0,
                epsilon: 0.1,
                ..clean_cfg
            },
            None,
        )
        .unwrap()
        .0;
        // Both degenerate paths produce identical parameters.
        let a = via_zero.named_tensors();
        let b = via_no_steps.named_tensors();
        assert_eq!(a.len(), b.len());
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb, "tensor {na} differs");
        }
    }

    #[test]
    fn eleven_way_checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let net = Net::<f32>::new(&mut rng, &IMAGE_SHAPE, &baseline_cnn_specs(11)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.ckpt");
        crate::checkpoint::save_classifier(
            &path,
            &net,
            serde_json::json!({"baseline": "outlier-11"}),
        )
        .unwrap();
        let (mut back, meta) = crate::checkpoint::load_classifier(&path).unwrap();
        assert_eq!(meta["baseline"], "outlier-11");
        let x = Tensor::from_vec(
            &[2, 1, 28, 28],
            (0..2 * 784).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
        )
        .unwrap();
        let mut orig = net.clone();
        assert_eq!(
            orig.forward(&x, Mode::Eval).unwrap(),
            back.forward(&x, Mode::Eval).unwrap()
        );
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let (digits, labels) = blobs(46, 2, 2);
        let cfg = BaselineConfig::default();
        let empty = Tensor::zeros(&[0, 1, 28, 28]);
        assert!(train_outlier_cnn(&digits, &labels, &empty, &cfg, None).is_err());
        assert!(train_madry_cnn(&empty, &[], &cfg, None).is_err());
        let bad_labels = vec![10u8; digits.outer()];
        assert!(train_madry_cnn(&digits, &bad_labels, &cfg, None).is_err());
        assert!(
            train_outlier_cnn(&digits, &bad_labels, &digits, &cfg, None).is_err()
        );
        let zero_epochs = BaselineConfig {
            epochs: 0,
            ..BaselineConfig::default()
        };
        assert!(train_madry_cnn(&digits, &labels, &zero_epochs, None).is_err());
    }
}
