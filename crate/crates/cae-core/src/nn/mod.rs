//! A small convolutional-network stack: layer definitions, cached
//! forward/backward passes, and the Adam optimizer.
//!
//! Networks are flat layer sequences described by [`LayerSpec`] values, so an
//! architecture can be serialized next to its weights and rebuilt exactly.
//! All computation is generic over [`crate::tensor::Scalar`]: training runs
//! in `f32`, gradient checks run the identical code in `f64`.
//!
//! Design points that matter for reproducibility:
//!
//! - Batch normalization keeps biased variance estimates both for
//!   normalization and for the running statistics.
//! - ReLU and max-pooling use the zero subgradient at ties/zero.
//! - Backward passes accumulate sample contributions in a fixed order, so
//!   results do not depend on thread scheduling.

mod adam;
mod layers;
mod net;

pub use adam::Adam;
pub use layers::{BatchNorm2d, Conv2d, Linear};
pub use net::{ForwardCache, Grads, Mode, Net};

use serde::{Deserialize, Serialize};

/// Serializable description of one layer.
///
/// Convolutions are stride-1 with square kernels; pooling is fixed 2x2
/// stride-2 with floor semantics (trailing odd rows/columns are dropped).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        pad: usize,
    },
    BatchNorm2d {
        channels: usize,
    },
    Relu,
    MaxPool2x2,
    Flatten,
    /// Reinterprets `[N, len]` as `[N, shape...]`.
    Reshape {
        shape: Vec<usize>,
    },
    Linear {
        in_features: usize,
        out_features: usize,
    },
}
