//! Classification-autoencoder (CAE) for open-world image classification.
//!
//! The encoder compresses each labeled image into a per-label block of the
//! code vector (its *compression space*) and doubles as a coarse classifier;
//! the decoder reconstructs the image from a single compression space. The
//! gap between input and reconstruction is what flags outliers and
//! adversaries. On top of the trained pair this crate provides:
//!
//! - the open-world classifier (label or `-1`) and its accuracy metrics,
//! - the list classifier, which emits every label whose reconstruction is
//!   probably the input, with an explicit outlier probability,
//! - outlier generators, gradient attacks (PGD, saliency, two-stage), and the
//!   two comparison baselines (an 11-class outlier CNN and an adversarially
//!   trained CNN),
//! - a constructive checker that builds piecewise-constant encoder/decoder
//!   pairs from cube tessellations and Voronoi regions and verifies the
//!   recovery guarantees by Monte Carlo.
//!
//! Everything is seeded and deterministic: same config, same bytes.

pub mod attacks;
pub mod baselines;
pub mod checkpoint;
pub mod datagen;
pub mod error;
pub mod existence;
pub mod listclassifier;
pub mod masks;
pub mod model;
pub mod nn;
pub mod openworld;
pub mod tensor;
pub mod training;

pub use error::{CaeError, Result};
pub use masks::MaskBank;
pub use model::CaeModel;
pub use tensor::Tensor;
