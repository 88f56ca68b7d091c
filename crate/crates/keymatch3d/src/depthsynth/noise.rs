use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::depthsynth::DepthImage;

/// Parametric stand-in for structured-light sensor noise: depth-dependent
/// Gaussian jitter, random pixel dropout, and shadowing near depth
/// discontinuities. Not a physical simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Constant part of the noise sigma, meters.
    pub sigma_base: f64,
    /// Quadratic depth coefficient: sigma(z) = sigma_base + sigma_quadratic * z^2.
    pub sigma_quadratic: f64,
    /// Fraction of valid pixels dropped to invalid.
    pub dropout_prob: f64,
    /// Chebyshev radius (pixels) invalidated around depth discontinuities.
    pub edge_shadow_width: u32,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            sigma_base: 0.002,
            sigma_quadratic: 0.002,
            dropout_prob: 0.02,
            edge_shadow_width: 2,
        }
    }
}

/// Depth-gradient magnitude (m/px) above which a pixel counts as lying on
/// a discontinuity for edge shadowing.
const EDGE_GRAD_THRESHOLD: f32 = 0.05;

/// Applies the noise model. Deterministic for a fixed rng state. With all
/// parameters zero this is the identity.
pub fn apply_noise<R: Rng>(depth: &DepthImage, params: &NoiseParams, rng: &mut R) -> DepthImage {
    let mut out = depth.clone();
    let (w, h) = (depth.width, depth.height);

    // edge mask from the clean input so jitter cannot fabricate edges
    let mut shadowed = vec![false; depth.data.len()];
    if params.edge_shadow_width > 0 {
        let r = params.edge_shadow_width as i64;
        for y in 0..h {
            for x in 0..w {
                if !depth.is_valid(x, y) || !is_discontinuity(depth, x, y) {
                    continue;
                }
                for dy in -r..=r {
                    for dx in -r..=r {
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                            shadowed[(ny as u32 * w + nx as u32) as usize] = true;
                        }
                    }
                }
            }
        }
    }

    let gauss = Normal::new(0.0, 1.0).unwrap();
    for i in 0..out.data.len() {
        let z = out.data[i];
        if z <= 0.0 {
            continue;
        }
        if shadowed[i] {
            out.data[i] = 0.0;
            continue;
        }
        if params.dropout_prob > 0.0 && rng.gen_range(0.0..1.0) < params.dropout_prob {
            out.data[i] = 0.0;
            continue;
        }
        let sigma = params.sigma_base + params.sigma_quadratic * (z as f64) * (z as f64);
        if sigma > 0.0 {
            let noisy = z as f64 + sigma * gauss.sample(rng);
            // never turn a valid pixel invalid through jitter alone
            out.data[i] = noisy.max(1e-6) as f32;
        }
    }
    out
}

fn is_discontinuity(depth: &DepthImage, x: u32, y: u32) -> bool {
    let z = depth.at(x, y);
    let check = |nx: i64, ny: i64| -> bool {
        if nx < 0 || ny < 0 || nx >= depth.width as i64 || ny >= depth.height as i64 {
            return false;
        }
        let nz = depth.at(nx as u32, ny as u32);
        nz > 0.0 && (nz - z).abs() > EDGE_GRAD_THRESHOLD
    };
    check(x as i64 - 1, y as i64)
        || check(x as i64 + 1, y as i64)
        || check(x as i64, y as i64 - 1)
        || check(x as i64, y as i64 + 1)
}
