//! GAN-based unsupervised change detection for a single image pair.
//!
//! The pipeline expands the pair `(I₀, I₁)` into a training set, trains a
//! generator against a clip-fed critic under a quadratic-penalty objective,
//! then compares generated samples to obtain a change map. [`divlab`] checks
//! the objective's divergence properties on small discrete problems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divlab;
pub mod error;
pub mod eval;
pub mod expand;
pub mod image;
pub mod infer;
pub mod nets;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use image::{
    bilinear_resize, extract_clip, global_max_normalize, l2_distance, load_image, save_image, BinaryChangeMap,
    ChangeIntensityMap, ClipRegion, ImageTensor,
};
pub use scalar::Scalar;

pub type Image = ImageTensor<f32>;
pub type Image64 = ImageTensor<f64>;
