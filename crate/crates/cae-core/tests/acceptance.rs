//! End-to-end acceptance gates over the shipped artifacts: the default
//! trained autoencoder, the two comparison baselines, the bundled MNIST
//! copy, and the deterministic formula/property suites.
//!
//! Runs as a plain binary (`harness = false`), strictly sequentially, and
//! always prints exactly one verdict line per criterion:
//!
//! ```text
//! criterion 1: PASS — accuracy 98.1%, wrong 0.6%, flagged 1.3% ...
//! ```
//!
//! The process exits nonzero when any criterion fails. If a committed
//! checkpoint is missing the suite retrains it with the default
//! configuration instead of skipping (slow, and says so loudly).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cae_core::attacks::{
    jsma_batch, list_defeated, openworld_defeated, outcomes_against, pgd, pgd_outcomes,
    reconstruction_descent, strong_outcomes, AttackOutcome, ClassifierTarget, EncoderTarget,
    PgdOptions, StrongConfig,
};
use cae_core::baselines::{
    baseline_predict_batched, train_madry_cnn, train_outlier_cnn, BaselineConfig, NOISE_CLASS,
};
use cae_core::checkpoint;
use cae_core::datagen::{
    blended_noise, centered_noise_patch, load_labeled_images, mixtures, natural_outliers,
    stripe_patterns, LabeledImages,
};
use cae_core::existence::{
    build_piecewise_ed, check_resolution, verify_theorem, voronoi_assign, BoxN, OpenSetSpec,
    Region,
};
use cae_core::listclassifier::{
    decouple_eval, list_classify_batched, outlier_probability_report, probabilities_from_e,
    LcaeConfig,
};
use cae_core::masks::MaskBank;
use cae_core::model::CaeModel;
use cae_core::nn::{LayerSpec, Mode, Net};
use cae_core::openworld::{classify_batched, evaluate_labeled, refusal_rate, Thresholds};
use cae_core::tensor::Tensor;
use cae_core::training::{encoder_loss_from_weights, train, TrainConfig};

/// Batch size for evaluation passes (memory-bound, not a tuning knob).
const BATCH: usize = 256;
/// Seed every evaluation stream derives from, with a per-kind offset so no
/// two synthetic sets share a stream.
const SEED: u64 = 2024;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mnist(split: &str) -> LabeledImages {
    let dir = root().join("data/mnist");
    load_labeled_images(
        dir.join(format!("{split}-images-idx3-ubyte.gz")),
        dir.join(format!("{split}-labels-idx1-ubyte.gz")),
    )
    .expect("bundled MNIST should load")
}

/// Loads the default autoencoder checkpoint, retraining it with the default
/// configuration if it is missing.
fn load_or_train_cae() -> CaeModel {
    let path = root().join("artifacts/cae-default.ckpt");
    match checkpoint::load_cae(&path) {
        Ok((model, _)) => model,
        Err(e) => {
            eprintln!(
                "WARNING: {} unavailable ({e}); retraining with the default \
                 configuration — this takes on the order of an hour on CPU",
                path.display()
            );
            let set = mnist("train");
            let cfg = TrainConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut model = CaeModel::new(&mut rng, 9, 10).expect("model construction");
            train(&mut model, &set.images, &set.labels, &cfg, None).expect("training");
            model
        }
    }
}

/// Loads a baseline checkpoint, checking its kind tag, retraining on miss.
fn load_or_train_baseline(kind: &str) -> Net<f32> {
    let path = root().join(format!("artifacts/{kind}.ckpt"));
    match checkpoint::load_classifier(&path) {
        Ok((net, meta)) => {
            let tagged = meta.get("kind").and_then(|v| v.as_str()).unwrap_or("");
            assert_eq!(tagged, kind, "{} holds a {tagged:?} net", path.display());
            net
        }
        Err(e) => {
            eprintln!(
                "WARNING: {} unavailable ({e}); retraining the {kind} baseline \
                 with its default configuration (slow)",
                path.display()
            );
            let set = mnist("train");
            let cfg = BaselineConfig::default();
            let (net, _) = match kind {
                "outlier-11" => {
                    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed + 1);
                    let noise = cae_core::datagen::noise_outliers(&mut noise_rng, set.len());
                    train_outlier_cnn(&set.images, &set.labels, &noise, &cfg, None)
                        .expect("baseline training")
                }
                "madry-10" => train_madry_cnn(&set.images, &set.labels, &cfg, None)
                    .expect("baseline training"),
                other => panic!("unknown baseline kind {other:?}"),
            };
            net
        }
    }
}

fn usize_labels(labels: &[u8]) -> Vec<usize> {
    labels.iter().map(|&l| l as usize).collect()
}

fn tensor_of(outcomes: &[AttackOutcome]) -> Tensor<f32> {
    let n = outcomes.len();
    let data: Vec<f32> = outcomes.iter().flat_map(|o| o.image.iter().copied()).collect();
    Tensor::from_vec(&[n, 1, 28, 28], data).expect("adversarial batch shape")
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

// --- criterion 1: open-world accuracy on the clean test set ---------------

fn criterion_1(model: &mut CaeModel, test: &LabeledImages) -> Result<String, String> {
    let t0 = Instant::now();
    let m = evaluate_labeled(model, &test.images, &test.labels, Thresholds::default(), BATCH)
        .map_err(|e| e.to_string())?;
    let detail = format!(
        "accuracy {}, wrong {}, flagged {} on {} clean test images ({:.0}s)",
        pct(m.accuracy),
        pct(m.wrong_rate),
        pct(m.flagged_rate),
        m.total,
        t0.elapsed().as_secs_f64()
    );
    if m.accuracy >= 0.975 && m.wrong_rate <= 0.012 && m.flagged_rate <= 0.025 {
        Ok(detail)
    } else {
        Err(format!("{detail}; need accuracy >= 97.5%, wrong <= 1.2%, flagged <= 2.5%"))
    }
}

// --- criterion 2: list-classifier coverage and list sizes -----------------

fn criterion_2(model: &mut CaeModel, test: &LabeledImages) -> Result<String, String> {
    let lists = list_classify_batched(model, &test.images, LcaeConfig::default(), BATCH)
        .map_err(|e| e.to_string())?;
    let n = lists.len() as f64;
    let mut covered = 0usize;
    let mut singles = 0usize;
    let mut size_sum = 0usize;
    for (v, &truth) in lists.iter().zip(&test.labels) {
        let labels = v.emitted_labels();
        if labels.contains(&(truth as usize)) {
            covered += 1;
        }
        if labels.len() == 1 {
            singles += 1;
        }
        size_sum += labels.len();
    }
    let coverage = covered as f64 / n;
    let mean_size = size_sum as f64 / n;
    let single_share = singles as f64 / n;
    let detail = format!(
        "coverage {}, mean list size {mean_size:.2}, singletons {} over {} lists",
        pct(coverage),
        pct(single_share),
        lists.len()
    );
    if coverage >= 0.998 && mean_size <= 2.2 && single_share >= 0.5 {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; need coverage >= 99.8%, mean size <= 2.2, singletons >= 50%"
        ))
    }
}

// --- criterion 3: outlier refusal, plain and hardened ---------------------

fn outlier_batch(kind: usize, n: usize) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + kind as u64);
    match kind {
        1 => blended_noise(&mut rng, n),
        2 => stripe_patterns(&mut rng, n),
        3 => centered_noise_patch(&mut rng, n),
        4 => natural_outliers(root().join("data/natural32/patches.bin.gz"), n)
            .expect("natural patch corpus"),
        other => panic!("unknown outlier kind {other}"),
    }
}

fn criterion_3(model: &mut CaeModel, outlier11: &mut Net<f32>) -> Result<String, String> {
    let n = 1000usize;
    let th = Thresholds::default();
    let err = |e: cae_core::CaeError| e.to_string();

    let mut flags = Vec::new();
    let mut over_half = Vec::new();
    for kind in 1..=4usize {
        let x = outlier_batch(kind, n);
        flags.push(refusal_rate(model, &x, th, BATCH).map_err(err)?);
        over_half.push(
            outlier_probability_report(model, &x, LcaeConfig::default(), BATCH)
                .map_err(err)?
                .over_half,
        );
    }

    // Hardened variants: noise images pushed toward acceptance, separately
    // against the reconstruction check and against the 11-class baseline.
    let mut hardened_cae = Vec::new();
    let mut hardened_baseline = Vec::new();
    for (offset, budget) in [(11u64, 0.1f32), (12, 0.2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + offset);
        let base = blended_noise(&mut rng, n);
        let vs_cae = reconstruction_descent(model, &base, budget, 0.01).map_err(err)?;
        hardened_cae.push(refusal_rate(model, &vs_cae, th, BATCH).map_err(err)?);
        let vs_baseline =
            cae_core::attacks::evade_class(outlier11, &base, NOISE_CLASS, budget, 0.01)
                .map_err(err)?;
        let preds = baseline_predict_batched(outlier11, &vs_baseline, BATCH).map_err(err)?;
        hardened_baseline
            .push(preds.iter().filter(|&&p| p == -1).count() as f64 / preds.len() as f64);
    }

    let detail = format!(
        "flags {}/{}/{}/{} (types 1-4), P(outlier)>1/2 on {}/{}/{}/{}; hardened: this \
         classifier {}/{}, 11-class baseline {} on the lighter variant",
        pct(flags[0]),
        pct(flags[1]),
        pct(flags[2]),
        pct(flags[3]),
        pct(over_half[0]),
        pct(over_half[1]),
        pct(over_half[2]),
        pct(over_half[3]),
        pct(hardened_cae[0]),
        pct(hardened_cae[1]),
        pct(hardened_baseline[0]),
    );
    let plain_ok = flags.iter().all(|&f| f >= 0.99) && over_half.iter().all(|&f| f >= 0.99);
    let hardened_ok = hardened_cae.iter().all(|&f| f >= 0.95) && hardened_baseline[0] < 0.85;
    if plain_ok && hardened_ok {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; need plain flags and P(outlier)>1/2 >= 99%, hardened >= 95% here \
             while the baseline drops below 85%"
        ))
    }
}

// --- criterion 4: adversary creation-rate ordering and list-size caps -----

#[derive(Clone, Copy)]
enum AttackSpec {
    /// Signed-gradient ascent, `n` steps of 0.01.
    SignedGradient(usize),
    /// Saliency-guided pixel flips, at most `n` pixels.
    Saliency(usize),
    /// 20-step signed-gradient stage, then a bounded second stage.
    TwoStage(f32),
}

struct AttackRow {
    name: &'static str,
    spec: AttackSpec,
    samples: usize,
    /// Rows whose creation rate must not exceed the adversarially trained
    /// baseline's.
    ordered: bool,
}

fn craft_on_encoder(
    model: &mut CaeModel,
    x: &Tensor<f32>,
    labels: &[usize],
    spec: AttackSpec,
) -> Result<Vec<AttackOutcome>, String> {
    let err = |e: cae_core::CaeError| e.to_string();
    match spec {
        AttackSpec::SignedGradient(steps) => {
            let mut target = EncoderTarget::new(model, 50.0);
            pgd_outcomes::<_, ChaCha8Rng>(&mut target, x, labels, steps, PgdOptions::default(), None)
                .map_err(err)
        }
        AttackSpec::Saliency(k) => {
            let mut target = EncoderTarget::new(model, 50.0);
            jsma_batch(&mut target, x, labels, k).map_err(err)
        }
        AttackSpec::TwoStage(bound) => {
            strong_outcomes(model, x, labels, bound, &StrongConfig::default()).map_err(err)
        }
    }
}

fn craft_on_classifier(
    net: &mut Net<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
    spec: AttackSpec,
) -> Result<Vec<AttackOutcome>, String> {
    let err = |e: cae_core::CaeError| e.to_string();
    let mut target = ClassifierTarget::new(net);
    match spec {
        AttackSpec::SignedGradient(steps) => {
            pgd_outcomes::<_, ChaCha8Rng>(&mut target, x, labels, steps, PgdOptions::default(), None)
                .map_err(err)
        }
        AttackSpec::Saliency(k) => jsma_batch(&mut target, x, labels, k).map_err(err),
        AttackSpec::TwoStage(bound) => {
            let stage1 = pgd::<_, ChaCha8Rng>(
                &mut target,
                x,
                labels,
                20,
                PgdOptions::default(),
                None,
            )
            .map_err(err)?;
            let steps2 = (bound / 0.01).round() as usize;
            let adv = pgd::<_, ChaCha8Rng>(
                &mut target,
                &stage1,
                labels,
                steps2,
                PgdOptions {
                    epsilon: Some(bound),
                    ..PgdOptions::default()
                },
                None,
            )
            .map_err(err)?;
            outcomes_against(&mut target, x, &adv, labels).map_err(err)
        }
    }
}

fn criterion_4(
    model: &mut CaeModel,
    madry: &mut Net<f32>,
    test: &LabeledImages,
) -> Result<String, String> {
    let err = |e: cae_core::CaeError| e.to_string();
    let rows = [
        AttackRow { name: "1.10", spec: AttackSpec::SignedGradient(10), samples: 1000, ordered: false },
        AttackRow { name: "1.20", spec: AttackSpec::SignedGradient(20), samples: 1000, ordered: false },
        AttackRow { name: "1.30", spec: AttackSpec::SignedGradient(30), samples: 1000, ordered: false },
        AttackRow { name: "2.40", spec: AttackSpec::Saliency(40), samples: 400, ordered: false },
        AttackRow { name: "2.60", spec: AttackSpec::Saliency(60), samples: 400, ordered: true },
        AttackRow { name: "2.80", spec: AttackSpec::Saliency(80), samples: 400, ordered: true },
        AttackRow { name: "3.0", spec: AttackSpec::TwoStage(0.0), samples: 1000, ordered: false },
        AttackRow { name: "3.1", spec: AttackSpec::TwoStage(0.1), samples: 1000, ordered: false },
        AttackRow { name: "3.2", spec: AttackSpec::TwoStage(0.2), samples: 1000, ordered: true },
    ];
    let th = Thresholds::default();
    let mut orderings = Vec::new();
    let mut lcae_max: (f64, &str) = (0.0, "-");
    let mut nlabels_max: (f64, &str) = (0.0, "-");
    let mut violations = Vec::new();

    for row in &rows {
        let t0 = Instant::now();
        let set = test.slice(0..row.samples);
        let labels = usize_labels(&set.labels);

        // Against this system: craft on the encoder, then score the full
        // pipeline (accept/refuse verdicts and emitted lists).
        let outcomes = craft_on_encoder(model, &set.images, &labels, row.spec)?;
        let fooled: Vec<bool> = outcomes.iter().map(|o| o.success).collect();
        let adv = tensor_of(&outcomes);
        let verdicts = classify_batched(model, &adv, th, BATCH).map_err(err)?;
        let ow_defeated = openworld_defeated(&verdicts, &labels);
        let lists = list_classify_batched(model, &adv, LcaeConfig::default(), BATCH)
            .map_err(err)?;
        let l_defeated = list_defeated(&lists, &labels);

        let n = row.samples as f64;
        let cae_rate = fooled
            .iter()
            .zip(&ow_defeated)
            .filter(|&(&f, &d)| f && d)
            .count() as f64
            / n;
        let lcae_rate = fooled
            .iter()
            .zip(&l_defeated)
            .filter(|&(&f, &d)| f && d)
            .count() as f64
            / n;
        let nlabels =
            lists.iter().map(|v| v.emitted.len()).sum::<usize>() as f64 / n;

        if lcae_rate > lcae_max.0 {
            lcae_max = (lcae_rate, row.name);
        }
        if nlabels > nlabels_max.0 {
            nlabels_max = (nlabels, row.name);
        }
        if lcae_rate > 0.05 {
            violations.push(format!("list-creation {} on {}", pct(lcae_rate), row.name));
        }
        if nlabels > 4.5 {
            violations.push(format!("mean list size {nlabels:.2} on {}", row.name));
        }

        if row.ordered {
            let at = craft_on_classifier(madry, &set.images, &labels, row.spec)?;
            let at_rate = at.iter().filter(|o| o.success).count() as f64 / n;
            orderings.push(format!("{} {}<={}", row.name, pct(cae_rate), pct(at_rate)));
            if cae_rate > at_rate {
                violations.push(format!(
                    "creation {} vs adversarially trained {} on {}",
                    pct(cae_rate),
                    pct(at_rate),
                    row.name
                ));
            }
        }
        eprintln!(
            "  attack {}: creation {} list-creation {} mean-list {:.2} ({:.0}s)",
            row.name,
            pct(cae_rate),
            pct(lcae_rate),
            nlabels,
            t0.elapsed().as_secs_f64()
        );
    }

    let detail = format!(
        "creation vs adversarially trained: {}; worst list-creation {} ({}), worst mean \
         list size {:.2} ({})",
        orderings.join(", "),
        pct(lcae_max.0),
        lcae_max.1,
        nlabels_max.0,
        nlabels_max.1
    );
    if violations.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; violated: {}", violations.join("; ")))
    }
}

// --- criterion 5: mixed-digit source recovery -----------------------------

fn criterion_5(model: &mut CaeModel, test: &LabeledImages) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let (mixed, sources) = mixtures(&mut rng, &test.images, &test.labels, 1000);
    let pairs: Vec<(usize, usize)> = sources
        .iter()
        .map(|m| (m.first_label as usize, m.second_label as usize))
        .collect();
    let report = decouple_eval(model, &mixed, &pairs, LcaeConfig::default(), BATCH)
        .map_err(|e| e.to_string())?;
    let detail = format!(
        "at least one source {}, both sources {} on {} mixtures",
        pct(report.one_found_rate),
        pct(report.both_found_rate),
        report.total
    );
    if report.one_found_rate >= 0.95 && report.both_found_rate >= 0.40 {
        Ok(detail)
    } else {
        Err(format!("{detail}; need >= 95% and >= 40%"))
    }
}

// --- criterion 6: deterministic formula and property suite ----------------

fn check_masks() -> Result<(), String> {
    let bank = MaskBank::new(9, 10).map_err(|e| e.to_string())?;
    if bank.code_len() != 100 || bank.num_labels() != 10 || bank.block_len() != 10 {
        return Err("mask bank dimensions off".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let code: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for l in 0..10 {
        let mask: Vec<f64> = bank.mask(l);
        let range = bank.block_range(l);
        if range != (10 * l..10 * l + 10) {
            return Err(format!("block {l} spans {range:?}"));
        }
        for (i, &m) in mask.iter().enumerate() {
            let want = if range.contains(&i) { 1.0 } else { 0.0 };
            if m != want {
                return Err(format!("mask {l} entry {i} is {m}"));
            }
        }
        let want: f64 = code[range.clone()].iter().sum();
        if (bank.weight(&code, l) - want).abs() > 1e-12 {
            return Err(format!("weight {l} disagrees with its block sum"));
        }
        let projected = bank.project(&code, l);
        for (i, &v) in projected.iter().enumerate() {
            let want = if range.contains(&i) { code[i] } else { 0.0 };
            if v != want {
                return Err(format!("projection {l} entry {i} is {v}"));
            }
        }
    }
    // Argmax with ties resolving to the lowest label.
    if bank.pseudo_label(&vec![0.0f64; 100]) != 0 {
        return Err("all-zero code should pseudo-label 0".into());
    }
    let mut tied = vec![0.0f64; 100];
    for i in 30..40 {
        tied[i] = 0.5;
    }
    for i in 70..80 {
        tied[i] = 0.5;
    }
    if bank.pseudo_label(&tied) != 3 {
        return Err("tie between blocks 3 and 7 should resolve to 3".into());
    }
    Ok(())
}

fn check_probability_split() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    for _ in 0..10_000 {
        let e: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..0.3)).collect();
        let (p_out, probs) = probabilities_from_e(&e, 14.0);
        let total = p_out + probs.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("probability mass {total} off unity"));
        }
    }
    // Published worked example: a digit-1 reading whose label share must
    // come back as 0.888 to three decimals.
    let e = [
        0.0182, 0.0002, 0.0080, 0.0727, 0.0075, 0.0727, 0.0255, 0.0074, 0.0099, 0.0727,
    ];
    let (p_out, probs) = probabilities_from_e(&e, 14.0);
    let share = probs[1] / (1.0 - p_out);
    if (share - 0.888).abs() >= 5e-4 {
        return Err(format!("reference label share {share:.4}, want 0.888"));
    }
    Ok(())
}

fn check_loss_constants() -> Result<(), String> {
    // Equal projection weights: cross-entropy of the uniform 10-way split.
    for w in [0.0f64, 5.0, -3.0] {
        let loss = encoder_loss_from_weights(&[w; 10], 4, 50.0, None);
        if (loss - 10f64.ln()).abs() > 1e-12 {
            return Err(format!("symmetric loss {loss}, want ln 10"));
        }
    }
    // Termination bound at the default margin and temperature.
    let bound = TrainConfig::default().encoder_loss_bound(9);
    let exact = (1.0 + 9.0 * (-1.6f64).exp()).ln();
    if (bound - exact).abs() > 1e-12 {
        return Err(format!("termination bound {bound}, want {exact}"));
    }
    if (bound - 1.03582).abs() >= 5e-4 {
        return Err(format!("termination bound {bound} far from 1.03582"));
    }
    Ok(())
}

/// Central-difference check of the full backward pass on a 2-pixel input
/// through a 4-unit hidden layer.
fn check_gradients() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let mut net: Net<f64> = Net::new(
        &mut rng,
        &[2],
        &[
            LayerSpec::Linear { in_features: 2, out_features: 4 },
            LayerSpec::Relu,
            LayerSpec::Linear { in_features: 4, out_features: 3 },
        ],
    )
    .map_err(|e| e.to_string())?;
    let x = Tensor::from_vec(
        &[3, 2],
        (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .map_err(|e| e.to_string())?;
    let labels = [0usize, 1, 2];

    let frozen = net.clone();
    let loss_of = |net: &Net<f64>, x: &Tensor<f64>| -> f64 {
        let mut n = net.clone();
        let y = n.forward(x, Mode::Eval).expect("toy forward");
        cae_core::attacks::softmax_cross_entropy(&y, &labels, None)
    };

    let (y, cache) = net.forward_cached(&x, Mode::Eval).map_err(|e| e.to_string())?;
    let mut dlogits = Tensor::zeros(y.shape());
    cae_core::attacks::softmax_cross_entropy(&y, &labels, Some(&mut dlogits));
    let mut grads = cae_core::nn::Grads::zeros_like(&net);
    let dx = net.backward(&cache, &dlogits, &mut grads);

    let eps = 1e-5;
    let close = |num: f64, got: f64| (num - got).abs() <= 1e-4 * (1.0 + num.abs());
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += eps;
        let mut xm = x.clone();
        xm.data_mut()[i] -= eps;
        let num = (loss_of(&frozen, &xp) - loss_of(&frozen, &xm)) / (2.0 * eps);
        if !close(num, dx.data()[i]) {
            return Err(format!(
                "input gradient {i}: numeric {num} vs backward {}",
                dx.data()[i]
            ));
        }
    }
    for slot in 0..grads.slots().len() {
        for entry in 0..grads.slots()[slot].len() {
            let perturb = |delta: f64| {
                let mut n2 = frozen.clone();
                let mut k = 0;
                n2.visit_params_mut(|p| {
                    if k == slot {
                        p.data_mut()[entry] += delta;
                    }
                    k += 1;
                });
                loss_of(&n2, &x)
            };
            let num = (perturb(eps) - perturb(-eps)) / (2.0 * eps);
            let got = grads.slots()[slot].data()[entry];
            if !close(num, got) {
                return Err(format!(
                    "parameter gradient {slot}/{entry}: numeric {num} vs backward {got}"
                ));
            }
        }
    }
    Ok(())
}

/// One hundred attacks on an untrained model must respect their budgets:
/// the signed-gradient L∞ ball and the saliency pixel count.
fn check_attack_budgets() -> Result<(), String> {
    let err = |e: cae_core::CaeError| e.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut model = CaeModel::new(&mut rng, 9, 10).map_err(err)?;
    let x = Tensor::from_vec(
        &[50, 1, 28, 28],
        (0..50 * 784).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
    )
    .map_err(err)?;
    let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();

    let steps = 10usize;
    let mut target = EncoderTarget::new(&mut model, 50.0);
    let signed =
        pgd_outcomes::<_, ChaCha8Rng>(&mut target, &x, &labels, steps, PgdOptions::default(), None)
            .map_err(err)?;
    for (i, o) in signed.iter().enumerate() {
        if o.linf > steps as f64 * 0.01 + 1e-5 {
            return Err(format!("signed-gradient attack {i} moved {} in L∞", o.linf));
        }
        if o.image.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(format!("signed-gradient attack {i} left [0,1]"));
        }
    }

    let k = 40usize;
    let saliency = jsma_batch(&mut target, &x, &labels, k).map_err(err)?;
    for (i, o) in saliency.iter().enumerate() {
        if o.l0 > k {
            return Err(format!("saliency attack {i} touched {} pixels", o.l0));
        }
        if o.image.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(format!("saliency attack {i} left [0,1]"));
        }
    }
    Ok(())
}

fn criterion_6() -> Result<String, String> {
    let t0 = Instant::now();
    check_masks()?;
    check_probability_split()?;
    check_loss_constants()?;
    check_gradients()?;
    check_attack_budgets()?;
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "masks, probability split on 10^4 draws, reference label share 0.888, ln 10, \
         termination bound, gradient checks, 100 attack budgets — all exact ({secs:.1}s)"
    );
    if secs < 60.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; suite must finish under a minute"))
    }
}

// --- criterion 7: constructive encoder/decoder existence ------------------

/// Independent nearest-anchor oracle: sort all distances, demand a strict
/// unique minimum.
fn brute_force_assign(anchors: &[Vec<f64>], y: &[f64], a: &BoxN) -> Option<usize> {
    if !a.contains_open(y) {
        return None;
    }
    let mut dists: Vec<(f64, usize)> = anchors
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(y).map(|(&v, &w)| (v - w) * (v - w)).sum(), i))
        .collect();
    dists.sort_by(|l, r| l.0.partial_cmp(&r.0).unwrap().then(l.1.cmp(&r.1)));
    if dists.len() > 1 && dists[0].0 == dists[1].0 {
        return None;
    }
    Some(dists[0].1)
}

fn criterion_7() -> Result<String, String> {
    let t0 = Instant::now();
    let err = |e: cae_core::CaeError| e.to_string();
    let boxed = |min: [f64; 2], max: [f64; 2]| {
        BoxN::new(min.to_vec(), max.to_vec()).expect("acceptance box")
    };
    let sets = vec![
        OpenSetSpec { label: 0, region: Region::Boxes(vec![boxed([0.1, 0.1], [0.4, 0.4])]) },
        OpenSetSpec { label: 1, region: Region::Boxes(vec![boxed([0.6, 0.6], [0.9, 0.9])]) },
    ];
    let (k, gamma) = (30usize, 0.1f64);
    check_resolution(2, 2, k, gamma).map_err(err)?;
    let ed = build_piecewise_ed(&sets, 2, k).map_err(err)?;
    let report = verify_theorem(&ed, &sets, 0.1, gamma, 100_000, SEED).map_err(err)?;
    let recovered: Vec<String> = report
        .per_label
        .iter()
        .map(|r| pct(r.recovered_fraction))
        .collect();
    if report.overlap_fraction != 0.0 {
        return Err(format!("target boxes overlap with rate {}", report.overlap_fraction));
    }
    if report.roundtrip_mismatches != 0 {
        return Err(format!("{} decode round trips missed", report.roundtrip_mismatches));
    }
    if !report.holds || report.per_label.iter().any(|r| r.recovered_fraction <= 0.9) {
        return Err(format!("recovered fractions {} below 90%", recovered.join("/")));
    }

    // Voronoi assignment against the sort-based oracle on 10^5 points.
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let a = boxed([0.0, 0.0], [1.0, 1.0]);
    let anchors: Vec<Vec<f64>> = (0..17)
        .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
        .collect();
    for i in 0..100_000 {
        let y = vec![rng.gen_range(-0.1..1.1), rng.gen_range(-0.1..1.1)];
        let fast = voronoi_assign(&anchors, &y, &a);
        let slow = brute_force_assign(&anchors, &y, &a);
        if fast != slow {
            return Err(format!("assignment {i} at {y:?}: {fast:?} vs oracle {slow:?}"));
        }
    }

    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "overlap 0, exact round trips, recovered {} per label on 10^5 draws; Voronoi \
         matches the oracle on 10^5 points ({secs:.1}s)",
        recovered.join("/")
    );
    if secs <= 60.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; must finish within a minute"))
    }
}

// --- driver ---------------------------------------------------------------

fn main() {
    let t0 = Instant::now();
    eprintln!("loading artifacts and the bundled test split...");
    let mut model = load_or_train_cae();
    let mut outlier11 = load_or_train_baseline("outlier-11");
    let mut madry = load_or_train_baseline("madry-10");
    let test = mnist("t10k");
    assert_eq!(test.len(), 10_000, "test split should hold 10000 images");

    let mut failures = 0usize;
    let mut run = |n: usize, body: &mut dyn FnMut() -> Result<String, String>| {
        let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS — {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n}: FAIL — {detail}");
            }
        }
    };

    run(1, &mut || criterion_1(&mut model, &test));
    run(2, &mut || criterion_2(&mut model, &test));
    run(3, &mut || criterion_3(&mut model, &mut outlier11));
    run(4, &mut || criterion_4(&mut model, &mut madry, &test));
    run(5, &mut || criterion_5(&mut model, &test));
    run(6, &mut || criterion_6());
    run(7, &mut || criterion_7());

    println!(
        "acceptance: {}/7 criteria passed in {:.0}s",
        7 - failures,
        t0.elapsed().as_secs_f64()
    );
    std::process::exit(if failures == 0 { 0 } else { 1 });
}
