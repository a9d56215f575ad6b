//! Forward/backward numeric kernels for every layer used by the three
//! network architectures.
//!
//! Kernels are plain functions over [`crate::tensor::Tensor`] plus a
//! parameter struct per layer kind. Backward functions return gradients for
//! a scalar sum-loss; the `1/batch` averaging happens once, in the loss
//! gradient. Each output element is accumulated in a fixed index order, so
//! results do not depend on the rayon thread count.

mod batchnorm;
mod conv;
mod fc;
mod init;
mod loss;
mod merge;
mod pool;
mod prelu;

pub use batchnorm::{
    batchnorm_backward, batchnorm_eval, batchnorm_forward, batchnorm_forward_cached,
    BatchNormParams, BnCache, BnGrads,
};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams};
pub use fc::{fc_backward, fc_forward, FcGrads, FcParams};
pub use init::{he_init, he_std};
pub use loss::logsoftmax_nll;
pub use merge::{concat_channels, residual_add, split_channels};
pub use pool::{maxpool2_backward, maxpool2_forward};
pub use prelu::{prelu_backward, prelu_forward, PReluParams};

/// Whether a layer runs with batch statistics (training) or frozen running
/// statistics (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
