//! Numeric primitives with manual backward passes. Every backward here is
//! checked against central finite differences in the test suite.

use crate::error::{Error, Result};
use crate::net::tensor::Tensor;

/// Same-padding stride-1 convolution layer. Weights are laid out
/// `[out_c][in_c][k][k]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_c: usize, out_c: usize, k: usize) -> Self {
        Self {
            in_c,
            out_c,
            k,
            weights: vec![0.0; out_c * in_c * k * k],
            bias: vec![0.0; out_c],
        }
    }

    #[inline]
    fn weight(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((oc * self.in_c + ic) * self.k + ky) * self.k + kx]
    }
}

pub fn conv2d_forward(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    if input.c != layer.in_c {
        return Err(Error::domain(format!(
            "conv input has {} channels, layer expects {}",
            input.c, layer.in_c
        )));
    }
    let (h, w) = (input.h, input.w);
    let pad = layer.k / 2;
    let mut out = Tensor::zeros(layer.out_c, h, w);
    for oc in 0..layer.out_c {
        let b = layer.bias[oc];
        for y in 0..h {
            out.row_mut(oc, y).fill(b);
        }
        for ic in 0..layer.in_c {
            for ky in 0..layer.k {
                let dy = ky as isize - pad as isize;
                for kx in 0..layer.k {
                    let dx = kx as isize - pad as isize;
                    let wgt = layer.weight(oc, ic, ky, kx);
                    if wgt == 0.0 {
                        continue;
                    }
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize - dy.max(0)) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx.max(0)) as usize;
                    for y in y0..y1 {
                        let src = input.row(ic, (y as isize + dy) as usize);
                        let dst = out.row_mut(oc, y);
                        for x in x0..x1 {
                            dst[x] += wgt * src[(x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns (input gradient, weight gradient, bias gradient).
pub fn conv2d_backward(
    input: &Tensor,
    layer: &ConvLayer,
    grad_out: &Tensor,
) -> Result<(Tensor, ConvLayer)> {
    if grad_out.shape() != (layer.out_c, input.h, input.w) {
        return Err(Error::domain("conv backward shape mismatch"));
    }
    let (h, w) = (input.h, input.w);
    let pad = layer.k / 2;
    let mut grad_in = Tensor::zeros(input.c, h, w);
    let mut grads = ConvLayer::zeros(layer.in_c, layer.out_c, layer.k);
    for oc in 0..layer.out_c {
        let mut gb = 0.0;
        for y in 0..h {
            gb += grad_out.row(oc, y).iter().sum::<f64>();
        }
        grads.bias[oc] = gb;
        for ic in 0..layer.in_c {
            for ky in 0..layer.k {
                let dy = ky as isize - pad as isize;
                for kx in 0..layer.k {
                    let dx = kx as isize - pad as isize;
                    let wgt = layer.weight(oc, ic, ky, kx);
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize - dy.max(0)) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx.max(0)) as usize;
                    let mut gw = 0.0;
                    for y in y0..y1 {
                        let go = grad_out.row(oc, y);
                        let src_y = (y as isize + dy) as usize;
                        {
                            let src = input.row(ic, src_y);
                            for x in x0..x1 {
                                gw += go[x] * src[(x as isize + dx) as usize];
                            }
                        }
                        let gi = grad_in.row_mut(ic, src_y);
                        for x in x0..x1 {
                            gi[(x as isize + dx) as usize] += wgt * go[x];
                        }
                    }
                    grads.weights[((oc * layer.in_c + ic) * layer.k + ky) * layer.k + kx] = gw;
                }
            }
        }
    }
    Ok((grad_in, grads))
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    Tensor {
        c: input.c,
        h: input.h,
        w: input.w,
        data: input.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// `pre` is the pre-activation input that was fed to the forward pass.
pub fn relu_backward(pre: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor {
        c: pre.c,
        h: pre.h,
        w: pre.w,
        data: pre
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and the flat
/// input index of each winning element (ties go to the scan-order first).
pub fn maxpool2_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    if input.h % 2 != 0 || input.w % 2 != 0 {
        return Err(Error::domain(format!(
            "maxpool2 needs even dims, got {}x{}",
            input.h, input.w
        )));
    }
    let (oh, ow) = (input.h / 2, input.w / 2);
    let mut out = Tensor::zeros(input.c, oh, ow);
    let mut argmax = vec![0usize; input.c * oh * ow];
    for c in 0..input.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let y = oy * 2 + dy;
                        let x = ox * 2 + dx;
                        let idx = (c * input.h + y) * input.w + x;
                        let v = input.data[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                let oidx = (c * oh + oy) * ow + ox;
                out.data[oidx] = best;
                argmax[oidx] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2_backward(
    input_shape: (usize, usize, usize),
    argmax: &[usize],
    grad_out: &Tensor,
) -> Tensor {
    let mut grad_in = Tensor::zeros(input_shape.0, input_shape.1, input_shape.2);
    for (o, &src) in argmax.iter().enumerate() {
        grad_in.data[src] += grad_out.data[o];
    }
    grad_in
}

/// Fully-connected layer, weights `[out][in]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FcLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }
}

pub fn fc_forward(input: &[f64], layer: &FcLayer) -> Result<Vec<f64>> {
    if input.len() != layer.in_dim {
        return Err(Error::domain(format!(
            "fc input length {} != {}",
            input.len(),
            layer.in_dim
        )));
    }
    let mut out = layer.bias.clone();
    for (o, out_v) in out.iter_mut().enumerate() {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        *out_v += row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
    }
    Ok(out)
}

/// Returns the input gradient and accumulates parameter gradients into
/// `grads` (shape-matched FcLayer used as an accumulator).
pub fn fc_backward(
    input: &[f64],
    layer: &FcLayer,
    grad_out: &[f64],
    grads: &mut FcLayer,
) -> Result<Vec<f64>> {
    if grad_out.len() != layer.out_dim || input.len() != layer.in_dim {
        return Err(Error::domain("fc backward shape mismatch"));
    }
    let mut grad_in = vec![0.0; layer.in_dim];
    for (o, &g) in grad_out.iter().enumerate() {
        grads.bias[o] += g;
        let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let grow = &mut grads.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        for i in 0..layer.in_dim {
            grow[i] += g * input[i];
            grad_in[i] += g * wrow[i];
        }
    }
    Ok(grad_in)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Axis-aligned box in feature-map coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// One bilinear sample: four source cells and their weights.
#[derive(Debug, Clone, Copy)]
pub struct BilinearSample {
    pub idx: [usize; 4],
    pub w: [f64; 4],
}

/// Bilinear RoI pooling: samples a PxP grid of sub-cell points inside the
/// box. Out-of-bounds sample points clamp to the feature-map edge. Returns
/// the pooled (C, P, P) tensor and the sample cache used by the backward
/// scatter.
pub fn roi_pool(
    feature: &Tensor,
    roi: &RoiBox,
    p: usize,
) -> Result<(Tensor, Vec<BilinearSample>)> {
    let (fw, fh) = (feature.w as f64, feature.h as f64);
    if roi.x1 < 0.0 || roi.y1 < 0.0 || roi.x0 > fw - 1.0 || roi.y0 > fh - 1.0 {
        return Err(Error::domain(format!(
            "roi {roi:?} does not intersect the {fw}x{fh} feature map"
        )));
    }
    let bw = roi.x1 - roi.x0;
    let bh = roi.y1 - roi.y0;
    let mut samples = Vec::with_capacity(p * p);
    let mut out = Tensor::zeros(feature.c, p, p);
    for py in 0..p {
        for px in 0..p {
            let sx = (roi.x0 + (px as f64 + 0.5) * bw / p as f64).clamp(0.0, fw - 1.0);
            let sy = (roi.y0 + (py as f64 + 0.5) * bh / p as f64).clamp(0.0, fh - 1.0);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(feature.w - 1);
            let y1 = (y0 + 1).min(feature.h - 1);
            let ax = sx - x0 as f64;
            let ay = sy - y0 as f64;
            let sample = BilinearSample {
                idx: [
                    y0 * feature.w + x0,
                    y0 * feature.w + x1,
                    y1 * feature.w + x0,
                    y1 * feature.w + x1,
                ],
                w: [
                    (1.0 - ax) * (1.0 - ay),
                    ax * (1.0 - ay),
                    (1.0 - ax) * ay,
                    ax * ay,
                ],
            };
            for c in 0..feature.c {
                let base = c * feature.h * feature.w;
                let v = sample
                    .idx
                    .iter()
                    .zip(&sample.w)
                    .map(|(&i, &w)| feature.data[base + i] * w)
                    .sum();
                out.set(c, py, px, v);
            }
            samples.push(sample);
        }
    }
    Ok((out, samples))
}

/// Scatters pooled-output gradients back to the four bilinear source cells
/// of every sample, accumulating into `grad_feature`.
pub fn roi_pool_backward(grad_feature: &mut Tensor, samples: &[BilinearSample], grad_out: &Tensor) {
    let plane = grad_feature.h * grad_feature.w;
    let p = grad_out.h;
    for (si, sample) in samples.iter().enumerate() {
        let (py, px) = (si / p, si % p);
        for c in 0..grad_feature.c {
            let g = grad_out.at(c, py, px);
            let base = c * plane;
            for k in 0..4 {
                grad_feature.data[base + sample.idx[k]] += g * sample.w[k];
            }
        }
    }
}
