//! Network descriptions, builders, executors and checkpoints for the three
//! architectures.

mod build;
mod checkpoint;
mod exec;
mod spec;
mod state;

pub use build::{
    build_fastinf, build_multivis, build_surfnet, MultiVisPlan, FASTINF_CHANNELS, SURFNET_CHANNELS,
};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use exec::{backward, forward_eval, forward_train, ForwardTape};
pub use spec::{LayerSpec, MergeSpec, NetworkSpec, ShapeWalk};
pub use state::{
    ConvBlockState, LayerState, NetworkState, ParamKind, ParamSlot, BN_EPSILON, BN_MOMENTUM,
};
