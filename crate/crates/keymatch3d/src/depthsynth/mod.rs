//! Synthetic depth data: mesh rendering, a parametric sensor-noise
//! stand-in, depth normalization, and pose-annotated pair generation.

mod dataset;
mod depth;
mod manifest;
mod mesh;
mod noise;
mod pairs;
mod render;

pub use dataset::{synthesize_dataset, CALIBRATION_VIEWS};
pub use depth::{DepthImage, NetworkInput};
pub use manifest::{DatasetManifest, PairRef};
pub use mesh::TriangleMesh;
pub use noise::{apply_noise, NoiseParams};
pub use pairs::{calibrate_depth_range, sample_viewpoint, PairGenerator, PairGenConfig, RenderedPair};
pub use render::render_depth;
