//! Procedural synthetic data: parametric label images rendered into defect
//! and non-defect grayscale surface images.

mod corpus;
mod label;
mod render;
mod texture;

pub use corpus::{generate_dataset, GeneratorConfig, DEFECT_CLASS, NON_DEFECT_CLASS};
pub use label::{
    generate_label, LabelImage, PositionBias, Region, ShapeKind, ShapeParams, EDGE_BAND_FRACTION,
    MIN_REGION_PIXELS,
};
pub use render::{render_defect, DefectStyle, FEATHER_RADIUS};
pub use texture::{render_texture, TextureParams};
