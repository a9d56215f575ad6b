//! Surface-defect classification engine.
//!
//! A self-contained CNN stack for binary and multi-class surface inspection:
//! dense NCHW tensors with hand-written forward/backward kernels, three
//! network architectures (SurfNet, FastInf, MultiVis), a manifest-driven
//! dataset pipeline, a procedural defect-image generator, an RMSProp
//! training loop and an evaluation/benchmark harness.
//!
//! Everything is deterministic under a `u64` seed: kernels accumulate in a
//! fixed index order (results are independent of the rayon thread count),
//! and all stochastic steps derive their RNG from (seed, stream, index).

pub mod data;
pub mod error;
pub mod eval;
mod matmul;
pub mod network;
pub mod ops;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Param, Tensor};
