//! End-to-end steering prediction from video with interpretable attention.
//!
//! The pipeline has three stages:
//!
//! 1. A strided convolutional encoder turns each 80x160 HSV frame into a
//!    feature cube, and an attention LSTM decodes the cube sequence into
//!    inverse-turning-radius predictions plus per-frame attention weights.
//! 2. Training machinery: penalized L1 loss, Adam, Xavier init, consecutive
//!    window sampling, optional convolutional pretraining with an FC head.
//! 3. A causal saliency stage that upsamples attention into heat maps,
//!    samples particles, clusters them in space-time with DBSCAN, wraps each
//!    cluster in per-frame convex hulls, and keeps only the blobs whose
//!    occlusion actually degrades prediction accuracy.
//!
//! A deterministic synthetic road-scene generator with ground-truth causal
//! region masks makes the whole chain testable without real driving data.

pub mod dataset;
pub mod decoder;
pub mod encoder;
mod error;
pub mod image;
pub mod model;
pub mod overlay;
pub mod par;
pub mod preprocess;
pub mod rng;
pub mod saliency;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
