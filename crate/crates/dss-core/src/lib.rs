//! Pose estimation and violent-activity classification for aerial imagery.
//!
//! The pipeline detects what a person in a cropped image region is doing, in
//! four stages:
//!
//! 1. [`scatter`] — a hand-crafted two-layer wavelet scattering front-end built
//!    on the dual-tree complex wavelet transform. It turns a grayscale region
//!    into a stack of translation-tolerant feature maps.
//! 2. [`priors`] — unsupervised PCA filter learning used to initialize the
//!    convolution layers of the regression network.
//! 3. [`net`] — a small convolutional regression network trained with a robust
//!    (Tukey biweight) loss to predict 14 body keypoints per region.
//! 4. [`pose`] + [`svm`] — skeleton construction, limb-orientation features,
//!    and a Gaussian-kernel one-vs-one SVM that labels the activity.
//!
//! [`data`] provides the annotation format, dataset splitting, and a synthetic
//! stick-figure generator used as ground truth for end-to-end evaluation.
//! [`io`] holds the on-disk formats (float arrays with JSON sidecars, model
//! checkpoints, CSV reports). [`pipeline`] wires the stages together for the
//! CLI.

pub mod data;
pub mod error;
pub mod io;
pub mod net;
pub mod pipeline;
pub mod pose;
pub mod priors;
pub mod scatter;
pub mod svm;

pub use error::DssError;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, DssError>;
