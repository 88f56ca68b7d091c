//! Joint learning of a keypoint detector and a view-invariant local
//! descriptor on synthetic depth-image pairs.
//!
//! The pipeline renders depth views of a triangle mesh, trains a small
//! Siamese convolutional network with a contrastive + score multi-task loss
//! using correspondences labeled on the fly by 3D proximity, and evaluates
//! the result with a repository-based nearest-neighbor matching protocol.

pub mod config;
pub mod depthsynth;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod loss;
pub mod net;
pub mod sampling;
pub mod train;

pub use error::{Error, Result};
