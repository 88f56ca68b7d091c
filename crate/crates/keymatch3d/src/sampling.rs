//! The on-the-fly correspondence sampler: backprojects keypoints from both
//! views into world space, pairs them greedily by smallest 3D distance
//! (one-to-one), and labels each pair positive when the distance falls
//! under the threshold. Keypoints without valid depth become unpaired
//! negatives so the score loss can still penalize proposals on holes.

use crate::depthsynth::DepthImage;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point2, Point3, RigidTransform};
use crate::net::KeypointSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthLookup {
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Positive-label 3D distance threshold, meters.
    pub tau_pos: f64,
    pub depth_lookup: DepthLookup,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            tau_pos: 0.025,
            depth_lookup: DepthLookup::Nearest,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_pos <= 0.0 {
            return Err(Error::config("tau_pos must be > 0"));
        }
        Ok(())
    }
}

/// One matched feature pair: indices into the two keypoint sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub label: bool,
}

/// The sampled pair set with per-pair and per-image labels.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub pairs: Vec<FeaturePair>,
    /// Per-image labels; unpaired keypoints carry label 0.
    pub l0: Vec<bool>,
    pub l1: Vec<bool>,
    pub n_pos: usize,
    /// Negative pairs plus unpaired keypoints (both images).
    pub n_neg: usize,
    pub world0: Vec<Option<Point3>>,
    pub world1: Vec<Option<Point3>>,
}

impl PairBatch {
    pub fn n(&self) -> usize {
        self.n_pos + self.n_neg
    }
}

/// Looks up depth at a keypoint centroid. Nearest-pixel by default;
/// bilinear only when all four neighbors are valid (interpolating across a
/// discontinuity would fabricate phantom 3D points).
pub fn depth_at(depth: &DepthImage, u: &Point2, lookup: DepthLookup) -> Option<f64> {
    match lookup {
        DepthLookup::Nearest => {
            let x = u.x.round();
            let y = u.y.round();
            if x < 0.0 || y < 0.0 || x >= depth.width as f64 || y >= depth.height as f64 {
                return None;
            }
            let z = depth.at(x as u32, y as u32);
            (z > 0.0).then_some(z as f64)
        }
        DepthLookup::Bilinear => {
            let x0 = u.x.floor();
            let y0 = u.y.floor();
            if x0 < 0.0 || y0 < 0.0 || x0 + 1.0 >= depth.width as f64 || y0 + 1.0 >= depth.height as f64
            {
                return depth_at(depth, u, DepthLookup::Nearest);
            }
            let (xi, yi) = (x0 as u32, y0 as u32);
            let z00 = depth.at(xi, yi);
            let z10 = depth.at(xi + 1, yi);
            let z01 = depth.at(xi, yi + 1);
            let z11 = depth.at(xi + 1, yi + 1);
            if z00 <= 0.0 || z10 <= 0.0 || z01 <= 0.0 || z11 <= 0.0 {
                return depth_at(depth, u, DepthLookup::Nearest);
            }
            let ax = u.x - x0;
            let ay = u.y - y0;
            Some(
                (z00 as f64) * (1.0 - ax) * (1.0 - ay)
                    + (z10 as f64) * ax * (1.0 - ay)
                    + (z01 as f64) * (1.0 - ax) * ay
                    + (z11 as f64) * ax * ay,
            )
        }
    }
}

/// World point per keypoint, or None over invalid depth.
pub fn lift_keypoints(
    kps: &KeypointSet,
    depth: &DepthImage,
    pose: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    cfg: &SamplingConfig,
) -> Vec<Option<Point3>> {
    kps.keypoints
        .iter()
        .map(|kp| {
            let z = depth_at(depth, &kp.x, cfg.depth_lookup)?;
            let cam = intrinsics.backproject(&kp.x, z).ok()?;
            Some(pose.transform_point(&cam))
        })
        .collect()
}

/// Greedy one-to-one assignment: repeatedly pair the currently-unmatched
/// (i, j) with globally smallest 3D distance until one side runs out of
/// valid keypoints. Ties break on (lower i, then lower j).
pub fn make_pairs(
    lifted0: &[Option<Point3>],
    lifted1: &[Option<Point3>],
    cfg: &SamplingConfig,
) -> Result<PairBatch> {
    cfg.validate()?;
    if lifted0.is_empty() || lifted1.is_empty() {
        return Err(Error::domain("both keypoint lists must be nonempty"));
    }

    let valid0: Vec<usize> = (0..lifted0.len()).filter(|&i| lifted0[i].is_some()).collect();
    let valid1: Vec<usize> = (0..lifted1.len()).filter(|&j| lifted1[j].is_some()).collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(valid0.len() * valid1.len());
    for &i in &valid0 {
        let p = lifted0[i].unwrap();
        for &j in &valid1 {
            let q = lifted1[j].unwrap();
            candidates.push(((p - q).norm(), i, j));
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut used0 = vec![false; lifted0.len()];
    let mut used1 = vec![false; lifted1.len()];
    let mut pairs = Vec::new();
    let budget = valid0.len().min(valid1.len());
    for (d, i, j) in candidates {
        if pairs.len() == budget {
            break;
        }
        if used0[i] || used1[j] {
            continue;
        }
        used0[i] = true;
        used1[j] = true;
        pairs.push(FeaturePair {
            i,
            j,
            distance: d,
            label: d < cfg.tau_pos,
        });
    }

    let mut l0 = vec![false; lifted0.len()];
    let mut l1 = vec![false; lifted1.len()];
    let mut n_pos = 0;
    let mut n_neg = 0;
    for p in &pairs {
        l0[p.i] = p.label;
        l1[p.j] = p.label;
        if p.label {
            n_pos += 1;
        } else {
            n_neg += 1;
        }
    }
    // unpaired keypoints (invalid depth or exhausted opposite side) are
    // unpaired negatives: they count toward N_neg but join no feature pair
    n_neg += used0.iter().filter(|&&u| !u).count();
    n_neg += used1.iter().filter(|&&u| !u).count();

    Ok(PairBatch {
        pairs,
        l0,
        l1,
        n_pos,
        n_neg,
        world0: lifted0.to_vec(),
        world1: lifted1.to_vec(),
    })
}

/// Lift + pair in one call: the sampling layer as wired into training.
#[allow(clippy::too_many_arguments)]
pub fn run_sampling_layer(
    kps0: &KeypointSet,
    kps1: &KeypointSet,
    depth0: &DepthImage,
    depth1: &DepthImage,
    pose0: &RigidTransform,
    pose1: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    cfg: &SamplingConfig,
) -> Result<PairBatch> {
    let lifted0 = lift_keypoints(kps0, depth0, pose0, intrinsics, cfg);
    let lifted1 = lift_keypoints(kps1, depth1, pose1, intrinsics, cfg);
    make_pairs(&lifted0, &lifted1, cfg)
}
