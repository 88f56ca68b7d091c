//! The detector/descriptor network: a 4-layer convolutional backbone with
//! a sigmoid score head (one score per feature cell) and an RoI-pooled
//! fully-connected descriptor head. Forward and backward are fully manual.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::depthsynth::NetworkInput;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::net::ops::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, maxpool2_backward,
    maxpool2_forward, relu_backward, relu_forward, roi_pool, roi_pool_backward, sigmoid,
    BilinearSample, ConvLayer, FcLayer, RoiBox,
};
use crate::net::tensor::Tensor;

/// Backbone channel plan: input 3, then the four conv layers.
pub const CHANNELS: [usize; 5] = [3, 16, 32, 64, 64];
/// Spatial downsampling between image and feature map (two 2x2 pools).
pub const FEATURE_STRIDE: usize = 4;
/// Initial score-head bias; see [`ModelParams::init`].
pub const SCORE_BIAS_INIT: f64 = -2.0;

/// Architecture hyperparameters echoed into checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Descriptor dimension.
    pub descriptor_dim: usize,
    /// Side of the square RoI around each keypoint, image pixels.
    pub roi_size: u32,
    /// RoI pooling grid resolution P (output is PxPxC).
    pub pool_size: u32,
    /// Default keypoint budget per image.
    pub keypoints_per_image: u32,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            descriptor_dim: 128,
            roi_size: 32,
            pool_size: 4,
            keypoints_per_image: 50,
        }
    }
}

impl NetConfig {
    pub fn fc_input_dim(&self) -> usize {
        (self.pool_size * self.pool_size) as usize * CHANNELS[4]
    }
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cfg: NetConfig,
    pub conv: [ConvLayer; 4],
    /// 1x1 conv producing the score logit per feature cell.
    pub score: ConvLayer,
    /// Descriptor head mapping the pooled PxPxC patch to d values.
    pub fc: FcLayer,
}

impl ModelParams {
    /// Xavier-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases
    /// except the score head, reproducible from the seed.
    ///
    /// The score bias starts negative so cells with no evidence — all-zero
    /// features, e.g. invalid-depth background whose input is constant 0 —
    /// score sigmoid(bias) well below every cell with positive activations
    /// the detector could latch onto. With a zero bias such cells all tie
    /// at exactly 0.5 and can crowd out the real surface at initialization,
    /// leaving the training signal empty.
    pub fn init(cfg: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv_layer = |in_c: usize, out_c: usize, k: usize| {
            let mut l = ConvLayer::zeros(in_c, out_c, k);
            let bound = (6.0 / ((in_c * k * k + out_c * k * k) as f64)).sqrt();
            for w in l.weights.iter_mut() {
                *w = rng.gen_range(-bound..bound);
            }
            l
        };
        let conv = [
            conv_layer(CHANNELS[0], CHANNELS[1], 3),
            conv_layer(CHANNELS[1], CHANNELS[2], 3),
            conv_layer(CHANNELS[2], CHANNELS[3], 3),
            conv_layer(CHANNELS[3], CHANNELS[4], 3),
        ];
        let mut score = conv_layer(CHANNELS[4], 1, 1);
        score.bias[0] = SCORE_BIAS_INIT;
        let fc_in = cfg.fc_input_dim();
        let mut fc = FcLayer::zeros(fc_in, cfg.descriptor_dim);
        let bound = (6.0 / ((fc_in + cfg.descriptor_dim) as f64)).sqrt();
        for w in fc.weights.iter_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        Self { cfg, conv, score, fc }
    }

    pub fn zeros_like(&self) -> ModelGrads {
        ModelGrads {
            conv: [
                ConvLayer::zeros(self.conv[0].in_c, self.conv[0].out_c, self.conv[0].k),
                ConvLayer::zeros(self.conv[1].in_c, self.conv[1].out_c, self.conv[1].k),
                ConvLayer::zeros(self.conv[2].in_c, self.conv[2].out_c, self.conv[2].k),
                ConvLayer::zeros(self.conv[3].in_c, self.conv[3].out_c, self.conv[3].k),
            ],
            score: ConvLayer::zeros(self.score.in_c, self.score.out_c, self.score.k),
            fc: FcLayer::zeros(self.fc.in_dim, self.fc.out_dim),
        }
    }

    /// Visits every parameter buffer in a fixed order (the checkpoint and
    /// optimizer order).
    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v = Vec::new();
        for l in self.conv.iter_mut() {
            v.push(&mut l.weights);
            v.push(&mut l.bias);
        }
        v.push(&mut self.score.weights);
        v.push(&mut self.score.bias);
        v.push(&mut self.fc.weights);
        v.push(&mut self.fc.bias);
        v
    }

    pub fn buffers(&self) -> Vec<&Vec<f64>> {
        let mut v = Vec::new();
        for l in self.conv.iter() {
            v.push(&l.weights);
            v.push(&l.bias);
        }
        v.push(&self.score.weights);
        v.push(&self.score.bias);
        v.push(&self.fc.weights);
        v.push(&self.fc.bias);
        v
    }
}

/// Gradient accumulators, shape-matched 1:1 with [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub conv: [ConvLayer; 4],
    pub score: ConvLayer,
    pub fc: FcLayer,
}

impl ModelGrads {
    pub fn add(&mut self, other: &ModelGrads) {
        let add_conv = |a: &mut ConvLayer, b: &ConvLayer| {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        };
        for i in 0..4 {
            add_conv(&mut self.conv[i], &other.conv[i]);
        }
        add_conv(&mut self.score, &other.score);
        for (x, y) in self.fc.weights.iter_mut().zip(&other.fc.weights) {
            *x += y;
        }
        for (x, y) in self.fc.bias.iter_mut().zip(&other.fc.bias) {
            *x += y;
        }
    }

    pub fn buffers(&self) -> Vec<&Vec<f64>> {
        let mut v = Vec::new();
        for l in self.conv.iter() {
            v.push(&l.weights);
            v.push(&l.bias);
        }
        v.push(&self.score.weights);
        v.push(&self.score.bias);
        v.push(&self.fc.weights);
        v.push(&self.fc.bias);
        v
    }
}

/// Cached activations from one forward pass, as needed by backward.
#[derive(Debug, Clone)]
pub struct ForwardState {
    pub input: Tensor,
    pre1: Tensor,
    post1: Tensor,
    pool1_argmax: Vec<usize>,
    pool1_out: Tensor,
    pre2: Tensor,
    post2: Tensor,
    pool2_argmax: Vec<usize>,
    pool2_out: Tensor,
    pre3: Tensor,
    post3: Tensor,
    pre4: Tensor,
    /// conv5_3-style shared representation (after the last relu).
    pub feature_map: Tensor,
    pub score_logits: Tensor,
    /// Sigmoid scores, one per feature cell, strictly in (0,1).
    pub score_map: Tensor,
}

/// Runs the backbone and score head. Input dimensions must be divisible
/// by the feature stride (callers pad).
pub fn forward(params: &ModelParams, input: &NetworkInput) -> Result<ForwardState> {
    let (w, h) = (input.width as usize, input.height as usize);
    if w % FEATURE_STRIDE != 0 || h % FEATURE_STRIDE != 0 {
        return Err(Error::domain(format!(
            "input {w}x{h} not divisible by feature stride {FEATURE_STRIDE}"
        )));
    }
    // replicate the single normalized channel into 3 identical channels
    let mut data = Vec::with_capacity(3 * w * h);
    for _ in 0..3 {
        data.extend_from_slice(&input.channel);
    }
    let x = Tensor::from_data(3, h, w, data)?;

    let pre1 = conv2d_forward(&x, &params.conv[0])?;
    let post1 = relu_forward(&pre1);
    let (pool1_out, pool1_argmax) = maxpool2_forward(&post1)?;
    let pre2 = conv2d_forward(&pool1_out, &params.conv[1])?;
    let post2 = relu_forward(&pre2);
    let (pool2_out, pool2_argmax) = maxpool2_forward(&post2)?;
    let pre3 = conv2d_forward(&pool2_out, &params.conv[2])?;
    let post3 = relu_forward(&pre3);
    let pre4 = conv2d_forward(&post3, &params.conv[3])?;
    let feature_map = relu_forward(&pre4);
    let score_logits = conv2d_forward(&feature_map, &params.score)?;
    let score_map = Tensor {
        c: 1,
        h: score_logits.h,
        w: score_logits.w,
        data: score_logits.data.iter().map(|&z| sigmoid(z)).collect(),
    };
    Ok(ForwardState {
        input: x,
        pre1,
        post1,
        pool1_argmax,
        pool1_out,
        pre2,
        post2,
        pool2_argmax,
        pool2_out,
        pre3,
        post3,
        pre4,
        feature_map,
        score_logits,
        score_map,
    })
}

/// A detected keypoint: image location, saliency score, descriptor, and
/// the feature cell it came from.
#[derive(Debug, Clone)]
pub struct Keypoint {
    pub x: Point2,
    pub s: f64,
    pub f: Vec<f64>,
    pub cell: (usize, usize),
}

/// Keypoints ordered by descending score (in top-score mode), at most t.
#[derive(Debug, Clone)]
pub struct KeypointSet {
    pub keypoints: Vec<Keypoint>,
    /// Set when NMS left fewer than the requested t candidates.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    TopScore,
    Random,
}

/// Per-keypoint pooling cache needed to route descriptor gradients back.
#[derive(Debug, Clone)]
pub struct KeypointTrace {
    pub cell: (usize, usize),
    pub pooled: Vec<f64>,
    pub samples: Vec<BilinearSample>,
}

/// Forward state plus the per-keypoint traces of one extraction.
#[derive(Debug, Clone)]
pub struct ExtractionCache {
    pub state: ForwardState,
    pub traces: Vec<KeypointTrace>,
}

/// Image-coordinate center of a feature cell.
pub fn cell_center(row: usize, col: usize) -> Point2 {
    let s = FEATURE_STRIDE as f64;
    Point2::new((col as f64 + 0.5) * s - 0.5, (row as f64 + 0.5) * s - 0.5)
}

/// Selects t keypoints (greedy by score with optional NMS, or uniformly at
/// random) and computes their descriptors via RoI pooling + the fc head.
pub fn extract_keypoints<R: Rng>(
    params: &ModelParams,
    input: &NetworkInput,
    t: usize,
    mode: SelectionMode,
    nms_radius: Option<f64>,
    rng: &mut R,
) -> Result<(KeypointSet, ExtractionCache)> {
    let state = forward(params, input)?;
    let (fh, fw) = (state.score_map.h, state.score_map.w);
    let n_cells = fh * fw;
    if t == 0 || t > n_cells {
        return Err(Error::domain(format!(
            "t={t} out of range for {n_cells} feature cells"
        )));
    }

    let selected: Vec<usize> = match mode {
        SelectionMode::TopScore => {
            let mut order: Vec<usize> = (0..n_cells).collect();
            order.sort_by(|&a, &b| {
                state.score_map.data[b]
                    .partial_cmp(&state.score_map.data[a])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            match nms_radius {
                None => order.into_iter().take(t).collect(),
                Some(r) => {
                    let mut kept: Vec<usize> = Vec::with_capacity(t);
                    let mut centers: Vec<Point2> = Vec::with_capacity(t);
                    for idx in order {
                        let c = cell_center(idx / fw, idx % fw);
                        if centers.iter().all(|p| (p - c).norm() >= r) {
                            kept.push(idx);
                            centers.push(c);
                            if kept.len() == t {
                                break;
                            }
                        }
                    }
                    kept
                }
            }
        }
        SelectionMode::Random => {
            // partial Fisher-Yates for t distinct cells
            let mut pool: Vec<usize> = (0..n_cells).collect();
            for i in 0..t {
                let j = rng.gen_range(i..n_cells);
                pool.swap(i, j);
            }
            pool.truncate(t);
            pool
        }
    };

    let truncated = selected.len() < t;
    let b = params.cfg.roi_size as f64;
    let p = params.cfg.pool_size as usize;
    let stride = FEATURE_STRIDE as f64;
    let mut keypoints = Vec::with_capacity(selected.len());
    let mut traces = Vec::with_capacity(selected.len());
    for idx in selected {
        let (row, col) = (idx / fw, idx % fw);
        let center = cell_center(row, col);
        let roi = RoiBox {
            x0: (center.x - b / 2.0) / stride,
            y0: (center.y - b / 2.0) / stride,
            x1: (center.x + b / 2.0) / stride,
            y1: (center.y + b / 2.0) / stride,
        };
        let (pooled_t, samples) = roi_pool(&state.feature_map, &roi, p)?;
        // flatten channel-major to the fc input layout
        let pooled = pooled_t.data;
        let f = fc_forward(&pooled, &params.fc)?;
        keypoints.push(Keypoint {
            x: center,
            s: state.score_map.data[idx],
            f,
            cell: (row, col),
        });
        traces.push(KeypointTrace {
            cell: (row, col),
            pooled,
            samples,
        });
    }
    Ok((
        KeypointSet {
            keypoints,
            truncated,
        },
        ExtractionCache { state, traces },
    ))
}

/// Routes per-keypoint descriptor and score gradients back to parameter
/// gradients. Descriptor gradients flow fc -> roi_pool -> backbone; score
/// gradients flow through the score head at the selected cells only.
/// Keypoint coordinates and box extents carry no gradient.
pub fn backward_from_keypoints(
    params: &ModelParams,
    cache: &ExtractionCache,
    desc_grads: &[Vec<f64>],
    score_grads: &[f64],
) -> Result<ModelGrads> {
    let n = cache.traces.len();
    if desc_grads.len() != n || score_grads.len() != n {
        return Err(Error::domain(format!(
            "gradient lists ({}, {}) misaligned with {} keypoints",
            desc_grads.len(),
            score_grads.len(),
            n
        )));
    }
    let state = &cache.state;
    let mut grads = params.zeros_like();
    let mut feat_grad = Tensor::zeros(
        state.feature_map.c,
        state.feature_map.h,
        state.feature_map.w,
    );
    let p = params.cfg.pool_size as usize;

    // descriptor branch
    for (trace, dg) in cache.traces.iter().zip(desc_grads) {
        if dg.len() != params.cfg.descriptor_dim {
            return Err(Error::domain("descriptor gradient has wrong dimension"));
        }
        let g_pooled = fc_backward(&trace.pooled, &params.fc, dg, &mut grads.fc)?;
        let g_pooled_t = Tensor::from_data(state.feature_map.c, p, p, g_pooled)?;
        roi_pool_backward(&mut feat_grad, &trace.samples, &g_pooled_t);
    }

    // score branch: sigmoid derivative then the 1x1 conv, selected cells only
    let fw = state.score_map.w;
    let mut logit_grad = Tensor::zeros(1, state.score_map.h, state.score_map.w);
    for (trace, &sg) in cache.traces.iter().zip(score_grads) {
        let (row, col) = trace.cell;
        let s = state.score_map.at(0, row, col);
        logit_grad.data[row * fw + col] += sg * s * (1.0 - s);
    }
    let (score_feat_grad, score_param_grads) =
        conv2d_backward(&state.feature_map, &params.score, &logit_grad)?;
    grads.score = score_param_grads;
    for (a, b) in feat_grad.data.iter_mut().zip(&score_feat_grad.data) {
        *a += b;
    }

    // backbone
    let g = relu_backward(&state.pre4, &feat_grad);
    let (g, c4) = conv2d_backward(&state.post3, &params.conv[3], &g)?;
    grads.conv[3] = c4;
    let g = relu_backward(&state.pre3, &g);
    let (g, c3) = conv2d_backward(&state.pool2_out, &params.conv[2], &g)?;
    grads.conv[2] = c3;
    let g = maxpool2_backward(state.post2.shape(), &state.pool2_argmax, &g);
    let g = relu_backward(&state.pre2, &g);
    let (g, c2) = conv2d_backward(&state.pool1_out, &params.conv[1], &g)?;
    grads.conv[1] = c2;
    let g = maxpool2_backward(state.post1.shape(), &state.pool1_argmax, &g);
    let g = relu_backward(&state.pre1, &g);
    let (_, c1) = conv2d_backward(&state.input, &params.conv[0], &g)?;
    grads.conv[0] = c1;

    Ok(grads)
}
