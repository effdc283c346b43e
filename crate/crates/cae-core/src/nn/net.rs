//! Layer sequencing: shape-checked construction, cached forward passes, and
//! reverse-order backpropagation.

use super::layers::{
    max_pool2x2, max_pool2x2_backward, relu, relu_backward, BatchNorm2d, BnCache, Conv2d, Linear,
};
use super::LayerSpec;
use crate::error::{CaeError, Result};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Whether a forward pass uses batch statistics (and updates running
/// estimates) or frozen running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One materialized layer.
#[derive(Debug, Clone)]
pub enum Layer<S> {
    Conv2d(Conv2d<S>),
    BatchNorm2d(BatchNorm2d<S>),
    Relu,
    MaxPool2x2,
    Flatten,
    Reshape(Vec<usize>),
    Linear(Linear<S>),
}

/// Per-layer forward state retained for the backward pass.
enum CacheItem<S> {
    Conv { x: Tensor<S>, h: usize, w: usize },
    Bn { bn: BnCache<S>, hw: usize },
    Relu { y: Tensor<S> },
    Pool { idx: Vec<u32>, in_shape: Vec<usize> },
    Shape { in_shape: Vec<usize> },
    Linear { x: Tensor<S> },
}

/// Opaque record of one cached forward pass.
pub struct ForwardCache<S> {
    items: Vec<CacheItem<S>>,
}

/// A shape-checked sequence of layers with a fixed per-sample input shape.
#[derive(Debug, Clone)]
pub struct Net<S> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<S>>,
    /// Per-sample shape after each layer.
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Net<S> {
    /// Builds the network, validating that each layer accepts its
    /// predecessor's output shape, and initializes parameters from `rng`.
    pub fn new<R: Rng>(rng: &mut R, input_shape: &[usize], specs: &[LayerSpec]) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let bad = |why: String| CaeError::invalid(format!("layer {i}: {why}"));
            match spec {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    pad,
                } => {
                    if shape.len() != 3 || shape[0] != *in_channels {
                        return Err(bad(format!(
                            "conv expects [{in_channels}, h, w], found {shape:?}"
                        )));
                    }
                    let (h, w) = (shape[1], shape[2]);
                    if h + 2 * pad < *kernel || w + 2 * pad < *kernel {
                        return Err(bad(format!("kernel {kernel} exceeds padded input {shape:?}")));
                    }
                    let conv = Conv2d::new(rng, *in_channels, *out_channels, *kernel, *pad);
                    let (oh, ow) = conv.out_hw(h, w);
                    shape = vec![*out_channels, oh, ow];
                    layers.push(Layer::Conv2d(conv));
                }
                LayerSpec::BatchNorm2d { channels } => {
                    if shape.len() != 3 || shape[0] != *channels {
                        return Err(bad(format!(
                            "batch norm expects [{channels}, h, w], found {shape:?}"
                        )));
                    }
                    layers.push(Layer::BatchNorm2d(BatchNorm2d::new(*channels)));
                }
                LayerSpec::Relu => layers.push(Layer::Relu),
                LayerSpec::MaxPool2x2 => {
                    if shape.len() != 3 || shape[1] < 2 || shape[2] < 2 {
                        return Err(bad(format!("pool expects [c, h>=2, w>=2], found {shape:?}")));
                    }
                    shape = vec![shape[0], shape[1] / 2, shape[2] / 2];
                    layers.push(Layer::MaxPool2x2);
                }
                LayerSpec::Flatten => {
                    shape = vec![shape.iter().product()];
                    layers.push(Layer::Flatten);
                }
                LayerSpec::Reshape { shape: to } => {
                    let have: usize = shape.iter().product();
                    let want: usize = to.iter().product();
                    if have != want {
                        return Err(bad(format!("cannot reshape {shape:?} into {to:?}")));
                    }
                    shape = to.clone();
                    layers.push(Layer::Reshape(to.clone()));
                }
                LayerSpec::Linear {
                    in_features,
                    out_features,
                } => {
                    if shape.len() != 1 || shape[0] != *in_features {
                        return Err(bad(format!(
                            "linear expects [{in_features}], found {shape:?}"
                        )));
                    }
                    layers.push(Layer::Linear(Linear::new(rng, *in_features, *out_features)));
                    shape = vec![*out_features];
                }
            }
            shapes.push(shape.clone());
        }
        Ok(Net {
            input_shape: input_shape.to_vec(),
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(Vec::as_slice).unwrap_or(&self.input_shape)
    }

    /// The architecture as buildable layer descriptions.
    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv2d(c) => LayerSpec::Conv2d {
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    kernel: c.kernel,
                    pad: c.pad,
                },
                Layer::BatchNorm2d(b) => LayerSpec::BatchNorm2d { channels: b.channels },
                Layer::Relu => LayerSpec::Relu,
                Layer::MaxPool2x2 => LayerSpec::MaxPool2x2,
                Layer::Flatten => LayerSpec::Flatten,
                Layer::Reshape(s) => LayerSpec::Reshape { shape: s.clone() },
                Layer::Linear(l) => LayerSpec::Linear {
                    in_features: l.in_features,
                    out_features: l.out_features,
                },
            })
            .collect()
    }

    fn batched(shape: &[usize], n: usize) -> Vec<usize> {
        let mut s = Vec::with_capacity(shape.len() + 1);
        s.push(n);
        s.extend_from_slice(shape);
        s
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        if x.shape().len() != self.input_shape.len() + 1
            || x.shape()[1..] != self.input_shape[..]
        {
            return Err(CaeError::shape(
                format!("[n, {:?}]", self.input_shape),
                x.shape(),
            ));
        }
        Ok(())
    }

    /// Forward pass without retaining gradient state. `Eval` mode never
    /// mutates the network; `Train` mode updates batch-norm running
    /// statistics.
    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        self.forward_impl(x, mode, false).map(|(y, _)| y)
    }

    /// Forward pass retaining everything the backward pass needs.
    pub fn forward_cached(
        &mut self,
        x: &Tensor<S>,
        mode: Mode,
    ) -> Result<(Tensor<S>, ForwardCache<S>)> {
        self.forward_impl(x, mode, true)
            .map(|(y, c)| (y, c.expect("cache requested")))
    }

    fn forward_impl(
        &mut self,
        x: &Tensor<S>,
        mode: Mode,
        keep: bool,
    ) -> Result<(Tensor<S>, Option<ForwardCache<S>>)> {
        self.check_input(x)?;
        let n = x.outer();
        let mut cur = x.clone();
        let mut shape = self.input_shape.clone();
        let mut items = Vec::new();
        for (li, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv2d(conv) => {
                    let (h, w) = (shape[1], shape[2]);
                    let y = conv.forward(&cur, h, w);
                    if keep {
                        items.push(CacheItem::Conv { x: cur, h, w });
                    }
                    cur = y;
                }
                Layer::BatchNorm2d(bn) => {
                    let hw = shape[1] * shape[2];
                    let (y, cache) = bn.forward(&cur, hw, mode == Mode::Train);
                    if keep {
                        items.push(CacheItem::Bn { bn: cache, hw });
                    }
                    cur = y;
                }
                Layer::Relu => {
                    let y = relu(&cur);
                    if keep {
                        items.push(CacheItem::Relu { y: y.clone() });
                    }
                    cur = y;
                }
                Layer::MaxPool2x2 => {
                    let (c, h, w) = (shape[0], shape[1], shape[2]);
                    let (y, idx) = max_pool2x2(&cur, c, h, w);
                    if keep {
                        items.push(CacheItem::Pool {
                            idx,
                            in_shape: cur.shape().to_vec(),
                        });
                    }
                    cur = y;
                }
                Layer::Flatten | Layer::Reshape(_) => {
                    if keep {
                        items.push(CacheItem::Shape {
                            in_shape: cur.shape().to_vec(),
                        });
                    }
                    cur = cur.reshape(&Self::batched(&self.shapes[li], n))?;
                }
                Layer::Linear(lin) => {
                    let y = lin.forward(&cur);
                    if keep {
                        items.push(CacheItem::Linear { x: cur });
                    }
                    cur = y;
                }
            }
            shape = self.shapes[li].clone();
        }
        Ok((cur, keep.then_some(ForwardCache { items })))
    }

    /// Backpropagates `dy` through the cached pass. Parameter gradients are
    /// accumulated into `grads`; the return value is the gradient with
    /// respect to the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache<S>,
        dy: &Tensor<S>,
        grads: &mut Grads<S>,
    ) -> Tensor<S> {
        assert_eq!(cache.items.len(), self.layers.len(), "cache/layer count");
        let mut d = dy.clone();
        let mut slot = grads.slots.len();
        for (layer, item) in self.layers.iter().zip(cache.items.iter()).rev() {
            match (layer, item) {
                (Layer::Conv2d(conv), CacheItem::Conv { x, h, w }) => {
                    slot -= 2;
                    let (dw, db) = grads.pair_mut(slot);
                    d = conv.backward(x, &d, *h, *w, dw, db);
                }
                (Layer::BatchNorm2d(bn), CacheItem::Bn { bn: c, hw }) => {
                    slot -= 2;
                    let (dg, dbeta) = grads.pair_mut(slot);
                    d = bn.backward(c, &d, *hw, dg, dbeta);
                }
                (Layer::Relu, CacheItem::Relu { y }) => {
                    d = relu_backward(y, &d);
                }
                (Layer::MaxPool2x2, CacheItem::Pool { idx, in_shape }) => {
                    d = max_pool2x2_backward(&d, idx, in_shape);
                }
                (Layer::Flatten, CacheItem::Shape { in_shape })
                | (Layer::Reshape(_), CacheItem::Shape { in_shape }) => {
                    d = d.reshape(in_shape).expect("cached shape");
                }
                (Layer::Linear(lin), CacheItem::Linear { x }) => {
                    slot -= 2;
                    let (dw, db) = grads.pair_mut(slot);
                    d = lin.backward(x, &d, dw, db);
                }
                _ => unreachable!("cache item does not match layer"),
            }
        }
        debug_assert_eq!(slot, 0, "all gradient slots consumed");
        d
    }

    /// Visits learnable parameters in a stable order (per layer: weight then
    /// bias, or gamma then beta).
    pub fn visit_params(&self, mut f: impl FnMut(&Tensor<S>)) {
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    f(&c.weight);
                    f(&c.bias);
                }
                Layer::BatchNorm2d(b) => {
                    f(&b.gamma);
                    f(&b.beta);
                }
                Layer::Linear(l) => {
                    f(&l.weight);
                    f(&l.bias);
                }
                _ => {}
            }
        }
    }

    /// Mutable variant of [`visit_params`](Self::visit_params), same order.
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&mut Tensor<S>)) {
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    f(&mut c.weight);
                    f(&mut c.bias);
                }
                Layer::BatchNorm2d(b) => {
                    f(&mut b.gamma);
                    f(&mut b.beta);
                }
                Layer::Linear(l) => {
                    f(&mut l.weight);
                    f(&mut l.bias);
                }
                _ => {}
            }
        }
    }

    /// Named tensors for serialization: learnable parameters plus batch-norm
    /// running statistics, keyed `layer{i}.{name}`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv2d(c) => {
                    out.push((format!("layer{i}.weight"), &c.weight));
                    out.push((format!("layer{i}.bias"), &c.bias));
                }
                Layer::BatchNorm2d(b) => {
                    out.push((format!("layer{i}.gamma"), &b.gamma));
                    out.push((format!("layer{i}.beta"), &b.beta));
                    out.push((format!("layer{i}.running_mean"), &b.running_mean));
                    out.push((format!("layer{i}.running_var"), &b.running_var));
                }
                Layer::Linear(l) => {
                    out.push((format!("layer{i}.weight"), &l.weight));
                    out.push((format!("layer{i}.bias"), &l.bias));
                }
                _ => {}
            }
        }
        out
    }

    /// Replaces a named tensor loaded from a checkpoint.
    pub fn set_named_tensor(&mut self, name: &str, value: Tensor<S>) -> Result<()> {
        let (layer_part, field) = name
            .split_once('.')
            .ok_or_else(|| CaeError::Checkpoint(format!("malformed tensor name {name:?}")))?;
        let idx: usize = layer_part
            .strip_prefix("layer")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CaeError::Checkpoint(format!("malformed tensor name {name:?}")))?;
        let layer = self
            .layers
            .get_mut(idx)
            .ok_or_else(|| CaeError::Checkpoint(format!("no layer {idx} for {name:?}")))?;
        let slot: &mut Tensor<S> = match (layer, field) {
            (Layer::Conv2d(c), "weight") => &mut c.weight,
            (Layer::Conv2d(c), "bias") => &mut c.bias,
            (Layer::BatchNorm2d(b), "gamma") => &mut b.gamma,
            (Layer::BatchNorm2d(b), "beta") => &mut b.beta,
            (Layer::BatchNorm2d(b), "running_mean") => &mut b.running_mean,
            (Layer::BatchNorm2d(b), "running_var") => &mut b.running_var,
            (Layer::Linear(l), "weight") => &mut l.weight,
            (Layer::Linear(l), "bias") => &mut l.bias,
            _ => {
                return Err(CaeError::Checkpoint(format!(
                    "tensor {name:?} does not exist in this architecture"
                )))
            }
        };
        if slot.shape() != value.shape() {
            return Err(CaeError::Checkpoint(format!(
                "tensor {name:?}: stored shape {:?} does not match architecture {:?}",
                value.shape(),
                slot.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    /// Converts the whole network (parameters and running statistics)
    /// into another scalar type.
    pub fn cast<T: Scalar>(&self) -> Net<T> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    kernel: c.kernel,
                    pad: c.pad,
                    weight: c.weight.cast(),
                    bias: c.bias.cast(),
                }),
                Layer::BatchNorm2d(b) => Layer::BatchNorm2d(BatchNorm2d {
                    channels: b.channels,
                    gamma: b.gamma.cast(),
                    beta: b.beta.cast(),
                    running_mean: b.running_mean.cast(),
                    running_var: b.running_var.cast(),
                }),
                Layer::Relu => Layer::Relu,
                Layer::MaxPool2x2 => Layer::MaxPool2x2,
                Layer::Flatten => Layer::Flatten,
                Layer::Reshape(s) => Layer::Reshape(s.clone()),
                Layer::Linear(lin) => Layer::Linear(Linear {
                    in_features: lin.in_features,
                    out_features: lin.out_features,
                    weight: lin.weight.cast(),
                    bias: lin.bias.cast(),
                }),
            })
            .collect();
        Net {
            input_shape: self.input_shape.clone(),
            layers,
            shapes: self.shapes.clone(),
        }
    }
}

/// Gradient accumulator shaped like a network's parameter list.
pub struct Grads<S> {
    slots: Vec<Tensor<S>>,
}

impl<S: Scalar> Grads<S> {
    pub fn zeros_like(net: &Net<S>) -> Self {
        let mut slots = Vec::new();
        net.visit_params(|p| slots.push(Tensor::zeros(p.shape())));
        Grads { slots }
    }

    pub fn zero(&mut self) {
        for t in &mut self.slots {
            t.data_mut().fill(S::ZERO);
        }
    }

    /// Scales every gradient, e.g. by `1/batch`.
    pub fn scale(&mut self, s: S) {
        for t in &mut self.slots {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }

    /// Adds another accumulator element-wise.
    pub fn add_assign(&mut self, other: &Grads<S>) {
        assert_eq!(self.slots.len(), other.slots.len(), "gradient slot count");
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn slots(&self) -> &[Tensor<S>] {
        &self.slots
    }

    /// Mutable access to the weight/bias pair starting at `slot`.
    fn pair_mut(&mut self, slot: usize) -> (&mut Tensor<S>, &mut Tensor<S>) {
        let (a, b) = self.slots[slot..].split_at_mut(1);
        (&mut a[0], &mut b[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_conv_net() -> Net<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        Net::new(
            &mut rng,
            &[1, 6, 6],
            &[
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel: 3,
                    pad: 1,
                },
                LayerSpec::BatchNorm2d { channels: 2 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2x2,
                LayerSpec::Flatten,
                LayerSpec::Linear {
                    in_features: 2 * 3 * 3,
                    out_features: 4,
                },
            ],
        )
        .unwrap()
    }

    fn scalar_loss(net: &mut Net<f64>, x: &Tensor<f64>, mode: Mode) -> f64 {
        // A fixed nonlinear readout so every output influences the loss
        // differently.
        let y = net.forward(x, mode).unwrap();
        y.data()
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 + 1.0) * 0.3 * v * v + 0.1 * v)
            .sum()
    }

    fn loss_grad(y: &Tensor<f64>) -> Tensor<f64> {
        let mut d = y.clone();
        for (i, v) in d.data_mut().iter_mut().enumerate() {
            *v = (i as f64 + 1.0) * 0.6 * *v + 0.1;
        }
        d
    }

    /// Central-difference check of input gradients and parameter gradients
    /// for the full layer mix, in both batch-statistics and running-
    /// statistics modes.
    #[test]
    fn backward_matches_finite_differences() {
        for mode in [Mode::Train, Mode::Eval] {
            let mut net = tiny_conv_net();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let x = {
                use rand::Rng;
                let data: Vec<f64> = (0..2 * 36).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Tensor::from_vec(&[2, 1, 6, 6], data).unwrap()
            };

            // Freeze running stats so Train-mode loss evaluations are pure
            // functions of the input (forward in Train mode updates them).
            let frozen = net.clone();
            let (y, cache) = net.forward_cached(&x, mode).unwrap();
            let mut grads = Grads::zeros_like(&net);
            let dx = net.backward(&cache, &loss_grad(&y), &mut grads);

            let eps = 1e-5;
            // Input gradient.
            for i in (0..x.len()).step_by(7) {
                let mut xp = x.clone();
                xp.data_mut()[i] += eps;
                let mut xm = x.clone();
                xm.data_mut()[i] -= eps;
                let mut np = frozen.clone();
                let mut nm = frozen.clone();
                let num = (scalar_loss(&mut np, &xp, mode) - scalar_loss(&mut nm, &xm, mode))
                    / (2.0 * eps);
                let got = dx.data()[i];
                assert!(
                    (num - got).abs() <= 1e-6 * (1.0 + num.abs()),
                    "{mode:?} input grad {i}: numeric {num} vs backward {got}"
                );
            }

            // Parameter gradients: perturb one entry of every parameter slot.
            let n_slots = grads.slots().len();
            for slot in 0..n_slots {
                let probe = grads.slots()[slot].len() / 2;
                let perturb = |delta: f64| {
                    let mut n2 = frozen.clone();
                    let mut k = 0;
                    n2.visit_params_mut(|p| {
                        if k == slot {
                            p.data_mut()[probe] += delta;
                        }
                        k += 1;
                    });
                    scalar_loss(&mut n2, &x, mode)
                };
                let num = (perturb(eps) - perturb(-eps)) / (2.0 * eps);
                let got = grads.slots()[slot].data()[probe];
                assert!(
                    (num - got).abs() <= 1e-6 * (1.0 + num.abs()),
                    "{mode:?} param slot {slot}: numeric {num} vs backward {got}"
                );
            }
        }
    }

    #[test]
    fn shapes_flow_through_the_stack() {
        let mut net = tiny_conv_net();
        assert_eq!(net.output_shape(), &[4]);
        let x = Tensor::zeros(&[3, 1, 6, 6]);
        let y = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[3, 4]);
    }

    #[test]
    fn construction_rejects_shape_breaks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = Net::<f32>::new(
            &mut rng,
            &[1, 6, 6],
            &[LayerSpec::Linear {
                in_features: 36,
                out_features: 4,
            }],
        );
        assert!(err.is_err(), "linear after 3-d input must fail");

        let err = Net::<f32>::new(
            &mut rng,
            &[2, 6, 6],
            &[LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                pad: 1,
            }],
        );
        assert!(err.is_err(), "channel mismatch must fail");
    }

    #[test]
    fn eval_forward_is_pure() {
        let mut net = tiny_conv_net();
        let x = Tensor::from_vec(&[1, 1, 6, 6], (0..36).map(|i| i as f64 * 0.1).collect()).unwrap();
        let y1 = net.forward(&x, Mode::Eval).unwrap();
        let y2 = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y1, y2);

        // Train mode moves running statistics, changing later eval output.
        let _ = net.forward(&x, Mode::Train).unwrap();
        let y3 = net.forward(&x, Mode::Eval).unwrap();
        assert_ne!(y1, y3);
    }

    #[test]
    fn specs_round_trip_through_construction() {
        let net = tiny_conv_net();
        let specs = net.specs();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rebuilt = Net::<f64>::new(&mut rng, &[1, 6, 6], &specs).unwrap();
        assert_eq!(rebuilt.specs(), specs);
        assert_eq!(rebuilt.output_shape(), net.output_shape());
    }

    #[test]
    fn named_tensors_round_trip() {
        let net = tiny_conv_net();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut other = Net::<f64>::new(&mut rng, &[1, 6, 6], &net.specs()).unwrap();
        for (name, t) in net.named_tensors() {
            other.set_named_tensor(&name, t.clone()).unwrap();
        }
        let a = net.named_tensors();
        let b = other.named_tensors();
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb);
        }
        // Unknown names and wrong shapes are rejected.
        assert!(other
            .set_named_tensor("layer0.gamma", Tensor::zeros(&[2]))
            .is_err());
        assert!(other
            .set_named_tensor("layer0.weight", Tensor::zeros(&[3, 3]))
            .is_err());
    }

    #[test]
    fn max_pool_drops_odd_tails() {
        use super::super::layers::max_pool2x2;
        // 3x3 plane: only the top-left 2x2 window pools; row/col 2 dropped.
        let x = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0, 2.0, 9.0, 4.0, 3.0, 9.0, 9.0, 9.0, 9.0])
            .unwrap();
        let (y, idx) = max_pool2x2(&x, 1, 3, 3);
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx, vec![3]);
    }
}
