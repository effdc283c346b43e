//! Adam optimizer with bias-corrected first and second moments.

use super::net::{Grads, Net};
use crate::tensor::{Scalar, Tensor};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Optimizer state paired with one network's parameter list.
pub struct Adam<S> {
    lr: S,
    t: i32,
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(net: &Net<S>, lr: f64) -> Self {
        let mut m = Vec::new();
        net.visit_params(|p| m.push(Tensor::zeros(p.shape())));
        let v = m.clone();
        Adam {
            lr: S::from_f64(lr),
            t: 0,
            m,
            v,
        }
    }

    /// Applies one update from already-averaged gradients.
    pub fn step(&mut self, net: &mut Net<S>, grads: &Grads<S>) {
        self.t += 1;
        let b1 = S::from_f64(BETA1);
        let b2 = S::from_f64(BETA2);
        let eps = S::from_f64(EPS);
        let corr1 = S::ONE / (S::ONE - S::from_f64(BETA1.powi(self.t)));
        let corr2 = S::ONE / (S::ONE - S::from_f64(BETA2.powi(self.t)));
        let lr = self.lr;
        let mut slot = 0usize;
        net.visit_params_mut(|p| {
            let g = grads.slots()[slot].data();
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (S::ONE - b1) * g[i];
                v[i] = b2 * v[i] + (S::ONE - b2) * g[i] * g[i];
                let mhat = m[i] * corr1;
                let vhat = v[i] * corr2;
                p.data_mut()[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
            slot += 1;
        });
        debug_assert_eq!(slot, grads.slots().len(), "slot count");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Mode};
    use crate::tensor::mse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A two-layer perceptron fit to a fixed nonlinear map must reduce its
    /// loss by a large factor in a few hundred steps.
    #[test]
    fn adam_fits_a_small_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Net::<f32>::new(
            &mut rng,
            &[2],
            &[
                LayerSpec::Linear {
                    in_features: 2,
                    out_features: 16,
                },
                LayerSpec::Relu,
                LayerSpec::Linear {
                    in_features: 16,
                    out_features: 1,
                },
            ],
        )
        .unwrap();
        let xs: Vec<f32> = (0..32)
            .flat_map(|i| {
                let a = (i as f32) / 16.0 - 1.0;
                [a, a * a]
            })
            .collect();
        let x = Tensor::from_vec(&[32, 2], xs).unwrap();
        let target: Vec<f32> = (0..32)
            .map(|i| {
                let a = (i as f32) / 16.0 - 1.0;
                (3.0 * a).sin()
            })
            .collect();

        let mut opt = Adam::new(&net, 1e-2);
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..300 {
            let (y, cache) = net.forward_cached(&x, Mode::Train).unwrap();
            last = mse(y.data(), &target).to_f64();
            first.get_or_insert(last);
            // d/dy of mean squared error.
            let mut dy = y.clone();
            for (d, &t) in dy.data_mut().iter_mut().zip(&target) {
                *d = 2.0 * (*d - t) / 32.0;
            }
            let mut grads = Grads::zeros_like(&net);
            net.backward(&cache, &dy, &mut grads);
            opt.step(&mut net, &grads);
        }
        let first = first.unwrap();
        assert!(
            last < first / 50.0,
            "loss should collapse: first {first}, last {last}"
        );
    }
}
