//! Tensors, layers, the two-stream segmentation network, training and
//! pixel-level metrics.

pub mod checkpoint;
pub mod dataset;
pub mod dfnet;
mod error;
pub mod gradcheck;
mod mask;
pub mod metrics;
pub mod nn;
pub mod ops;
mod scalar;
pub mod tape;
mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use dfnet::{build_model, Arch, ArchConfig, Model};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use mask::{fuse_avg, fuse_max, BinaryMask, ProbabilityMask};
pub use nn::Mode;
pub use scalar::Scalar;
pub use tape::{BnMode, Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
