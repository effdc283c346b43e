//! The classification-autoencoder: fixed 28x28 encoder/decoder
//! architectures wired to a [`MaskBank`].
//!
//! The encoder maps `[N, 1, 28, 28]` images to nonnegative codes of length
//! `(o + 1) * m0` (a final ReLU keeps codes nonnegative, which is what makes
//! projection weights usable as class scores). The decoder maps codes back
//! to `[N, 1, 28, 28]`. Classification-related reconstruction always decodes
//! a *projected* code: the code with every block except one label's zeroed.

use crate::error::Result;
use crate::masks::MaskBank;
use crate::nn::{LayerSpec, Mode, Net};
use crate::tensor::Tensor;
use rand::Rng;

/// Encoder stack for 28x28 single-channel images producing `code_len`
/// outputs: three conv/batch-norm/pool stages (10, 28, 28 channels; spatial
/// 28 -> 14 -> 7 -> 3), then two fully connected layers.
pub fn encoder_specs(code_len: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 10,
            kernel: 3,
            pad: 1,
        },
        LayerSpec::BatchNorm2d { channels: 10 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::Conv2d {
            in_channels: 10,
            out_channels: 28,
            kernel: 3,
            pad: 1,
        },
        LayerSpec::BatchNorm2d { channels: 28 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::Conv2d {
            in_channels: 28,
            out_channels: 28,
            kernel: 3,
            pad: 1,
        },
        LayerSpec::BatchNorm2d { channels: 28 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::Flatten,
        LayerSpec::Linear {
            in_features: 28 * 3 * 3,
            out_features: 168,
        },
        LayerSpec::Relu,
        LayerSpec::Linear {
            in_features: 168,
            out_features: code_len,
        },
        LayerSpec::Relu,
    ]
}

/// Decoder stack from `code_len` inputs back to one 28x28 channel: three
/// widening fully connected layers, a reshape to `[3, 30, 30]`, an unpadded
/// 3x3 convolution down to 28x28, and a 1x1 convolution to one channel.
pub fn decoder_specs(code_len: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Linear {
            in_features: code_len,
            out_features: 252,
        },
        LayerSpec::Relu,
        LayerSpec::Linear {
            in_features: 252,
            out_features: 600,
        },
        LayerSpec::Relu,
        LayerSpec::Linear {
            in_features: 600,
            out_features: 2700,
        },
        LayerSpec::Relu,
        LayerSpec::Reshape {
            shape: vec![3, 30, 30],
        },
        LayerSpec::Conv2d {
            in_channels: 3,
            out_channels: 28,
            kernel: 3,
            pad: 0,
        },
        LayerSpec::BatchNorm2d { channels: 28 },
        LayerSpec::Relu,
        LayerSpec::Conv2d {
            in_channels: 28,
            out_channels: 1,
            kernel: 1,
            pad: 0,
        },
        LayerSpec::Relu,
    ]
}

/// Plain classifier CNN used by the comparison baselines: three conv/pool
/// stages (32, 64, 64 channels) and two fully connected layers emitting
/// `num_classes` logits.
pub fn baseline_cnn_specs(num_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 32,
            kernel: 3,
            pad: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::Conv2d {
            in_channels: 32,
            out_channels: 64,
            kernel: 3,
            pad: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::Conv2d {
            in_channels: 64,
            out_channels: 64,
            kernel: 3,
            pad: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::Flatten,
        LayerSpec::Linear {
            in_features: 64 * 3 * 3,
            out_features: 128,
        },
        LayerSpec::Relu,
        LayerSpec::Linear {
            in_features: 128,
            out_features: num_classes,
        },
    ]
}

/// Image geometry every model in this crate is built for.
pub const IMAGE_SHAPE: [usize; 3] = [1, 28, 28];
/// Pixels per image.
pub const IMAGE_LEN: usize = 28 * 28;

/// Encoder/decoder pair plus the label masks that tie them together.
#[derive(Debug, Clone)]
pub struct CaeModel {
    pub encoder: Net<f32>,
    pub decoder: Net<f32>,
    pub bank: MaskBank,
}

impl CaeModel {
    /// Fresh model for labels `0..=o` with `m0` code entries per label.
    pub fn new<R: Rng>(rng: &mut R, o: usize, m0: usize) -> Result<Self> {
        let bank = MaskBank::new(o, m0)?;
        let encoder = Net::new(rng, &IMAGE_SHAPE, &encoder_specs(bank.code_len()))?;
        let decoder = Net::new(rng, &[bank.code_len()], &decoder_specs(bank.code_len()))?;
        Ok(CaeModel {
            encoder,
            decoder,
            bank,
        })
    }

    pub fn code_len(&self) -> usize {
        self.bank.code_len()
    }

    /// Encodes a batch of images using frozen (inference) statistics.
    pub fn encode(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.encoder.forward(x, Mode::Eval)
    }

    /// Decodes a batch of codes using frozen statistics.
    pub fn decode(&mut self, codes: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.decoder.forward(codes, Mode::Eval)
    }

    /// Pseudo-label of every code row.
    pub fn pseudo_labels_of_codes(&self, codes: &Tensor<f32>) -> Vec<usize> {
        (0..codes.outer())
            .map(|i| self.bank.pseudo_label(codes.row(i)))
            .collect()
    }

    /// Pseudo-labels straight from images.
    pub fn pseudo_labels(&mut self, x: &Tensor<f32>) -> Result<Vec<usize>> {
        let codes = self.encode(x)?;
        Ok(self.pseudo_labels_of_codes(&codes))
    }

    /// Projects every code row onto one label per row.
    pub fn project_codes(&self, codes: &Tensor<f32>, labels: &[usize]) -> Tensor<f32> {
        let mut out = Tensor::zeros(codes.shape());
        for i in 0..codes.outer() {
            self.bank
                .project_into(codes.row(i), labels[i], out.row_mut(i));
        }
        out
    }

    /// Reconstruction through a per-row label: encode, project onto that
    /// label, decode.
    pub fn reconstruct_as(&mut self, x: &Tensor<f32>, labels: &[usize]) -> Result<Tensor<f32>> {
        let codes = self.encode(x)?;
        let projected = self.project_codes(&codes, labels);
        self.decode(&projected)
    }

    /// Reconstruction through each row's pseudo-label; returns the images
    /// and the labels used.
    pub fn reconstruct(&mut self, x: &Tensor<f32>) -> Result<(Tensor<f32>, Vec<usize>)> {
        let codes = self.encode(x)?;
        let labels = self.pseudo_labels_of_codes(&codes);
        let projected = self.project_codes(&codes, &labels);
        Ok((self.decode(&projected)?, labels))
    }

    /// Reconstructions of the same batch through every label: entry `l` is
    /// the decode of every code projected onto label `l`.
    pub fn reconstruct_all(&mut self, x: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
        let codes = self.encode(x)?;
        let mut out = Vec::with_capacity(self.bank.num_labels());
        for l in 0..self.bank.num_labels() {
            let labels = vec![l; codes.outer()];
            let projected = self.project_codes(&codes, &labels);
            out.push(self.decode(&projected)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_line_up_end_to_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = CaeModel::new(&mut rng, 9, 10).unwrap();
        assert_eq!(model.code_len(), 100);
        assert_eq!(model.encoder.output_shape(), &[100]);
        assert_eq!(model.decoder.output_shape(), &[1, 28, 28]);

        let x = Tensor::zeros(&[2, 1, 28, 28]);
        let codes = model.encode(&x).unwrap();
        assert_eq!(codes.shape(), &[2, 100]);
        let y = model.decode(&codes).unwrap();
        assert_eq!(y.shape(), &[2, 1, 28, 28]);
    }

    #[test]
    fn codes_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = CaeModel::new(&mut rng, 9, 10).unwrap();
        let x = {
            use rand::Rng;
            let data: Vec<f32> = (0..3 * 784).map(|_| rng.gen_range(0.0..1.0)).collect();
            Tensor::from_vec(&[3, 1, 28, 28], data).unwrap()
        };
        let codes = model.encode(&x).unwrap();
        assert!(codes.data().iter().all(|&v| v >= 0.0));
        // Decoder output is nonnegative too (final ReLU).
        let y = model.decode(&codes).unwrap();
        assert!(y.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn reconstruct_as_decodes_only_the_requested_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = CaeModel::new(&mut rng, 9, 10).unwrap();
        let x = {
            use rand::Rng;
            let data: Vec<f32> = (0..784).map(|_| rng.gen_range(0.0..1.0)).collect();
            Tensor::from_vec(&[1, 1, 28, 28], data).unwrap()
        };
        let codes = model.encode(&x).unwrap();
        // Projecting a code whose block is all zero must reconstruct the
        // same image as decoding the zero code.
        let mut zero_block = None;
        for l in 0..10 {
            if codes.row(0)[model.bank.block_range(l)].iter().all(|&v| v == 0.0) {
                zero_block = Some(l);
                break;
            }
        }
        if let Some(l) = zero_block {
            let rec = model.reconstruct_as(&x, &[l]).unwrap();
            let zero = model.decode(&Tensor::zeros(&[1, 100])).unwrap();
            assert_eq!(rec, zero);
        }

        // reconstruct_all returns one batch per label.
        let all = model.reconstruct_all(&x).unwrap();
        assert_eq!(all.len(), 10);
        for t in &all {
            assert_eq!(t.shape(), &[1, 1, 28, 28]);
        }
    }

    #[test]
    fn baseline_cnn_emits_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Net::<f32>::new(&mut rng, &IMAGE_SHAPE, &baseline_cnn_specs(11)).unwrap();
        assert_eq!(net.output_shape(), &[11]);
        let y = net
            .forward(&Tensor::zeros(&[2, 1, 28, 28]), Mode::Eval)
            .unwrap();
        assert_eq!(y.shape(), &[2, 11]);
    }
}
