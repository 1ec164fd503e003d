//! Single-object localization through a size-routed CNN.
//!
//! The pipeline: annotated frames become square crops with 14x14 ROI and 7x7
//! center grid targets; a three-branch network with a shared trunk maps each
//! crop to two spatial probability heads; an exponential loss trains only
//! the branch a sample activates plus the shared layers; thresholded decode
//! turns the heads back into a box; and a tracking harness runs the decode
//! loop frame to frame with IoU and failure-rate evaluation.

pub mod annotations;
pub mod decode;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod image;
pub mod loss;
pub mod mask;
pub mod net;
pub mod track;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{classify_size, BoundingBox, SizeClass};
pub use grid::{GridMask, ProbMatrix};
pub use image::ImageBuf;
pub use mask::{
    center_mask_from_box, roi_mask_from_box, synthesize_sample, AnnotatedFrame,
    LocalizationTargets, TrainingSample, CENTER_GRID, ROI_GRID,
};
pub use net::{
    forward, gradient, init_parameters, LocalizationOutput, ModelParameters, WidthConfig,
};
