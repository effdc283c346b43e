//! Times one optimization step of the autoencoder pair at batch size 128.
//!
//! Run with `cargo run --release -p cae-core --example throughput` to size
//! training budgets for the machine at hand.

use cae_core::nn::{Grads, Mode};
use cae_core::tensor::Tensor;
use cae_core::CaeModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = CaeModel::new(&mut rng, 9, 10).unwrap();
    let batch = 128usize;
    let x = Tensor::from_vec(
        &[batch, 1, 28, 28],
        (0..batch * 784).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
    )
    .unwrap();

    let mut enc_grads = Grads::zeros_like(&model.encoder);
    let mut dec_grads = Grads::zeros_like(&model.decoder);

    // Warm up once, then measure.
    for round in 0..4 {
        let t0 = Instant::now();
        let iters = 5;
        for _ in 0..iters {
            let (codes, enc_cache) = model.encoder.forward_cached(&x, Mode::Train).unwrap();
            let (recon, dec_cache) = model.decoder.forward_cached(&codes, Mode::Train).unwrap();
            let mut drecon = recon.clone();
            for v in drecon.data_mut() {
                *v *= 2.0 / 784.0 / batch as f32;
            }
            enc_grads.zero();
            dec_grads.zero();
            let dcodes = model.decoder.backward(&dec_cache, &drecon, &mut dec_grads);
            let _dx = model.encoder.backward(&enc_cache, &dcodes, &mut enc_grads);
        }
        let dt = t0.elapsed().as_secs_f64() / iters as f64;
        if round > 0 {
            println!(
                "full fwd+bwd step, batch {batch}: {:.1} ms  ({:.1} ms/image-pass)",
                dt * 1e3,
                dt * 1e3 / batch as f64
            );
        }
    }

    // Encoder-only pass (the inner loop of adversarial example search).
    for round in 0..2 {
        let t0 = Instant::now();
        let iters = 10;
        for _ in 0..iters {
            let (codes, enc_cache) = model.encoder.forward_cached(&x, Mode::Eval).unwrap();
            let mut dcodes = codes.clone();
            for v in dcodes.data_mut() {
                *v *= 1e-3;
            }
            enc_grads.zero();
            let _dx = model.encoder.backward(&enc_cache, &dcodes, &mut enc_grads);
        }
        let dt = t0.elapsed().as_secs_f64() / iters as f64;
        if round > 0 {
            println!("encoder fwd+bwd, batch {batch}: {:.1} ms", dt * 1e3);
        }
    }
}
