//! Manifest-driven dataset pipeline: aggregation, cleansing, balancing,
//! offline rotations, preprocessing and seeded batching.

mod batch;
mod image;
mod manifest;
pub mod neu;
mod pipeline;
mod preprocess;

pub use batch::{BatchIter, LoadedDataset};
pub use image::{GrayImage, SourceKind};
pub use manifest::{DatasetManifest, Origin, SampleRecord, Split, MANIFEST_VERSION};
pub use pipeline::{
    aggregate, balance, cleanse, offline_rotations, write_rejection_report,
    write_shortfall_report, AggregateLog, CleanseThresholds, RejectReason, Rejection, Shortfall,
    SourceSpec,
};
pub use preprocess::{test_preprocess, train_preprocess, PreprocessConfig};
