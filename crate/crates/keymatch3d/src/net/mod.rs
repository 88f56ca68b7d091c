//! The trainable detector/descriptor network and its numeric primitives.

mod checkpoint;
mod model;
mod ops;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{
    backward_from_keypoints, cell_center, extract_keypoints, forward, ExtractionCache,
    ForwardState, Keypoint, KeypointSet, KeypointTrace, ModelGrads, ModelParams, NetConfig,
    SelectionMode, CHANNELS, FEATURE_STRIDE,
};
pub use ops::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, maxpool2_backward,
    maxpool2_forward, relu_backward, relu_forward, roi_pool, roi_pool_backward, sigmoid,
    BilinearSample, ConvLayer, FcLayer, RoiBox,
};
pub use tensor::Tensor;
