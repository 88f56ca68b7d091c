//! The multi-task objective: a population-normalized contrastive loss over
//! descriptor pairs plus a score loss rewarding many high-scoring positive
//! keypoints, combined with weights lambda_c / lambda_s. All gradients are
//! analytic and finite-difference checked.

use crate::error::{Error, Result};
use crate::net::Keypoint;
use crate::sampling::PairBatch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_c: f64,
    pub lambda_s: f64,
    /// Contrastive margin on raw Euclidean descriptor distance.
    pub margin: f64,
    /// Score-loss trade-off between keypoint count and score magnitude.
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_c: 1.0,
            lambda_s: 1.0,
            margin: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_c < 0.0 || self.lambda_s < 0.0 || self.gamma < 0.0 {
            return Err(Error::config("loss weights must be nonnegative"));
        }
        if self.margin <= 0.0 {
            return Err(Error::config("contrastive margin must be > 0"));
        }
        Ok(())
    }
}

/// Loss values and the per-keypoint gradients to backpropagate.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: f64,
    pub contrastive: f64,
    pub score0: f64,
    pub score1: f64,
    pub desc_grads0: Vec<Vec<f64>>,
    pub desc_grads1: Vec<Vec<f64>>,
    pub score_grads0: Vec<f64>,
    pub score_grads1: Vec<f64>,
}

/// Numeric floor applied to scores before the log.
const SCORE_CLAMP: f64 = 1e-7;

/// Contrastive loss over the feature pairs of a batch. Positive pairs
/// contribute ||f0-f1||^2 / (2 N_pos); negatives max(0, v - ||f0-f1||)^2 /
/// (2 N_neg). Classes with zero population contribute 0. Unpaired
/// keypoints contribute nothing. Returns the scalar and per-keypoint
/// descriptor gradients for both images (zero rows for unpaired keypoints).
pub fn contrastive_loss(
    batch: &PairBatch,
    kps0: &[Keypoint],
    kps1: &[Keypoint],
    margin: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let d = kps0
        .first()
        .or(kps1.first())
        .map(|k| k.f.len())
        .unwrap_or(0);
    let mut g0 = vec![vec![0.0; d]; kps0.len()];
    let mut g1 = vec![vec![0.0; d]; kps1.len()];
    let mut loss = 0.0;
    let n_pos = batch.n_pos as f64;
    let n_neg = batch.n_neg as f64;
    for pair in &batch.pairs {
        let f0 = &kps0[pair.i].f;
        let f1 = &kps1[pair.j].f;
        if f0.len() != f1.len() {
            return Err(Error::domain("descriptor dimensions differ across images"));
        }
        let diff: Vec<f64> = f0.iter().zip(f1).map(|(a, b)| a - b).collect();
        let dist_sq: f64 = diff.iter().map(|v| v * v).sum();
        let dist = dist_sq.sqrt();
        if pair.label {
            loss += dist_sq / (2.0 * n_pos);
            for k in 0..d {
                g0[pair.i][k] += diff[k] / n_pos;
                g1[pair.j][k] -= diff[k] / n_pos;
            }
        } else if dist < margin {
            let slack = margin - dist;
            loss += slack * slack / (2.0 * n_neg);
            if dist > 0.0 {
                let scale = -slack / (n_neg * dist);
                for k in 0..d {
                    g0[pair.i][k] += scale * diff[k];
                    g1[pair.j][k] -= scale * diff[k];
                }
            }
            // dist == 0: subgradient 0 at the non-differentiable point
        }
    }
    Ok((loss, g0, g1))
}

/// Score loss for one image: 1/(1+N_pos) - gamma * sum_i l_i log s_i /
/// (1+N_pos). N_pos is a constant count, so only the log term carries
/// gradient: dL/ds_i = -gamma * l_i / ((1+N_pos) * s_i).
pub fn score_loss(
    scores: &[f64],
    labels: &[bool],
    n_pos: usize,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::domain("scores and labels length mismatch"));
    }
    if scores.iter().any(|&s| s <= 0.0 || s >= 1.0) {
        return Err(Error::domain("scores must lie strictly in (0,1)"));
    }
    let denom = 1.0 + n_pos as f64;
    let mut log_sum = 0.0;
    let mut grads = vec![0.0; scores.len()];
    for (k, (&s, &l)) in scores.iter().zip(labels).enumerate() {
        if l {
            let sc = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
            log_sum += sc.ln();
            grads[k] = -gamma / (denom * sc);
        }
    }
    Ok((1.0 / denom - gamma * log_sum / denom, grads))
}

/// Combines the contrastive and score terms per the multi-task weighting:
/// total = lambda_c * L_c + lambda_s * (L_s0 + L_s1). Gradients come back
/// pre-scaled by their lambdas.
pub fn multitask_loss(
    batch: &PairBatch,
    kps0: &[Keypoint],
    kps1: &[Keypoint],
    cfg: &LossConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    let (lc, mut dg0, mut dg1) = contrastive_loss(batch, kps0, kps1, cfg.margin)?;
    let scores0: Vec<f64> = kps0.iter().map(|k| k.s).collect();
    let scores1: Vec<f64> = kps1.iter().map(|k| k.s).collect();
    let (ls0, mut sg0) = score_loss(&scores0, &batch.l0, batch.n_pos, cfg.gamma)?;
    let (ls1, mut sg1) = score_loss(&scores1, &batch.l1, batch.n_pos, cfg.gamma)?;

    for g in dg0.iter_mut().chain(dg1.iter_mut()) {
        for v in g.iter_mut() {
            *v *= cfg.lambda_c;
        }
    }
    for v in sg0.iter_mut().chain(sg1.iter_mut()) {
        *v *= cfg.lambda_s;
    }
    let total = cfg.lambda_c * lc + cfg.lambda_s * (ls0 + ls1);
    if !total.is_finite() {
        return Err(Error::domain(format!(
            "non-finite loss: lc={lc} ls0={ls0} ls1={ls1}"
        )));
    }
    Ok(LossOutput {
        total,
        contrastive: lc,
        score0: ls0,
        score1: ls1,
        desc_grads0: dg0,
        desc_grads1: dg1,
        score_grads0: sg0,
        score_grads1: sg1,
    })
}
