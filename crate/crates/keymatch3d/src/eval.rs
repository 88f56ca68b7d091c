//! Repository-based keypoint matching: collect 3D-tagged descriptors from
//! repository views, retrieve the exact nearest neighbor for each test
//! descriptor, and score a match as true when the two world points are
//! within `tau_eval` meters. No descriptor-distance cutoff is applied.

use std::fmt::Write as _;
use std::io::Read as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::depthsynth::{DepthImage, NetworkInput};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point2, Point3, RigidTransform};
use crate::net::{extract_keypoints, Keypoint, KeypointSet, ModelParams, SelectionMode};
use crate::sampling::{lift_keypoints, SamplingConfig};

/// 3D true-match threshold for noise-free data, meters.
pub const TAU_EVAL_NOISE_FREE: f64 = 0.05;
/// 3D true-match threshold for noisy data, meters.
pub const TAU_EVAL_NOISY: f64 = 0.10;
/// Repository view count at desk scale (paper-scale 500 selectable).
pub const DEFAULT_REPOSITORY_VIEWS: u32 = 50;

const REPO_MAGIC: &[u8; 4] = b"KMRP";

/// A descriptor bank where every entry carries the world coordinate of the
/// surface point it was extracted at, plus the source view it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Repository {
    pub dim: usize,
    pub descriptors: Vec<Vec<f64>>,
    pub world: Vec<Point3>,
    /// Source view per entry; not part of the on-disk format (zeros after
    /// loading from a file).
    pub view_ids: Vec<u32>,
}

impl Repository {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Writes the repository: magic "KMRP", u32 descriptor dimension,
    /// u32 entry count, then per entry d little-endian f32 descriptor
    /// values followed by 3 f32 world coordinates.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(REPO_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (f, w) in self.descriptors.iter().zip(&self.world) {
            if f.len() != self.dim {
                return Err(Error::domain("repository entry dimension mismatch"));
            }
            for &v in f {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
            for &v in &[w.x, w.y, w.z] {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
        if buf.len() < 12 || &buf[0..4] != REPO_MAGIC {
            return Err(Error::format(path, "bad magic, expected KMRP"));
        }
        let dim = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let expected = 12 + count * (dim + 3) * 4;
        if buf.len() != expected {
            return Err(Error::format(
                path,
                format!("file is {} bytes, expected {expected}", buf.len()),
            ));
        }
        let mut pos = 12;
        let mut f32_at = |_: ()| {
            let v = f32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as f64;
            pos += 4;
            v
        };
        let mut descriptors = Vec::with_capacity(count);
        let mut world = Vec::with_capacity(count);
        for _ in 0..count {
            descriptors.push((0..dim).map(|_| f32_at(())).collect());
            world.push(Point3::new(f32_at(()), f32_at(()), f32_at(())));
        }
        Ok(Self {
            dim,
            descriptors,
            world,
            view_ids: vec![0; count],
        })
    }
}

/// One matched query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchRecord {
    pub repo_index: usize,
    pub descriptor_distance: f64,
    pub distance_3d: f64,
    pub is_true: bool,
    /// Query keypoint pixel, for visualization.
    pub query_px: Point2,
}

#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    pub records: Vec<MatchRecord>,
}

impl MatchResult {
    pub fn true_matches(&self) -> usize {
        self.records.iter().filter(|r| r.is_true).count()
    }

    /// True matches over total matches; 0 for an empty query set.
    pub fn accuracy(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.true_matches() as f64 / self.records.len() as f64
        }
    }

    pub fn extend(&mut self, other: &MatchResult) {
        self.records.extend_from_slice(&other.records);
    }
}

/// Exact nearest neighbor by Euclidean descriptor distance; ties broken by
/// the lower repository index (the scan keeps the first minimum).
pub fn nearest_neighbor(repo: &Repository, query: &[f64]) -> Result<(usize, f64)> {
    if repo.is_empty() {
        return Err(Error::domain("repository is empty"));
    }
    if query.len() != repo.dim {
        return Err(Error::domain(format!(
            "query dimension {} != repository dimension {}",
            query.len(),
            repo.dim
        )));
    }
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, f) in repo.descriptors.iter().enumerate() {
        let d2: f64 = f.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    Ok((best, best_d2.sqrt()))
}

/// Matches already-lifted keypoints against the repository. Keypoints
/// without a valid world point are skipped.
pub fn match_keypoints(
    kps: &[Keypoint],
    lifted: &[Option<Point3>],
    repo: &Repository,
    tau_eval: f64,
) -> Result<MatchResult> {
    let mut records = Vec::new();
    for (kp, world) in kps.iter().zip(lifted) {
        let Some(world) = world else { continue };
        let (idx, dd) = nearest_neighbor(repo, &kp.f)?;
        let d3 = (repo.world[idx] - world).norm();
        records.push(MatchRecord {
            repo_index: idx,
            descriptor_distance: dd,
            distance_3d: d3,
            is_true: d3 < tau_eval,
            query_px: kp.x,
        });
    }
    Ok(MatchResult { records })
}

/// Builds the descriptor repository from the given views: run the model on
/// each, lift the keypoints to world coordinates, and keep the valid ones.
pub fn build_repository(
    params: &ModelParams,
    views: &[(DepthImage, RigidTransform)],
    intrinsics: &CameraIntrinsics,
    d_min: f64,
    d_max: f64,
    t: usize,
) -> Result<Repository> {
    if views.is_empty() {
        return Err(Error::domain("need at least one repository view"));
    }
    let cfg = SamplingConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut repo = Repository {
        dim: params.cfg.descriptor_dim,
        descriptors: Vec::new(),
        world: Vec::new(),
        view_ids: Vec::new(),
    };
    for (view_id, (depth, pose)) in views.iter().enumerate() {
        let input = NetworkInput::normalize_depth(depth, d_min, d_max)?;
        let (kps, _) = extract_keypoints(
            params,
            &input,
            t,
            SelectionMode::TopScore,
            None,
            &mut rng,
        )?;
        let lifted = lift_keypoints(&kps, depth, pose, intrinsics, &cfg);
        for (kp, world) in kps.keypoints.iter().zip(&lifted) {
            if let Some(w) = world {
                repo.descriptors.push(kp.f.clone());
                repo.world.push(*w);
                repo.view_ids.push(view_id as u32);
            }
        }
    }
    Ok(repo)
}

use rand::SeedableRng as _;

/// Extracts keypoints from one test view and matches them. `mode` selects
/// the learned top-score detector or the random-cell ablation.
pub fn match_view<R: Rng>(
    params: &ModelParams,
    depth: &DepthImage,
    pose: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    d_min: f64,
    d_max: f64,
    t: usize,
    repo: &Repository,
    tau_eval: f64,
    mode: SelectionMode,
    rng: &mut R,
) -> Result<MatchResult> {
    let input = NetworkInput::normalize_depth(depth, d_min, d_max)?;
    let (kps, _) = extract_keypoints(params, &input, t, mode, None, rng)?;
    let lifted = lift_keypoints(&kps, depth, pose, intrinsics, &SamplingConfig::default());
    match_keypoints(&kps.keypoints, &lifted, repo, tau_eval)
}

/// Maps [`match_view`] over all test views, aggregates, and renders the
/// per-view results CSV (`view_id,queries,true_matches,accuracy`).
#[allow(clippy::too_many_arguments)]
pub fn evaluate<R: Rng>(
    params: &ModelParams,
    views: &[(DepthImage, RigidTransform)],
    intrinsics: &CameraIntrinsics,
    d_min: f64,
    d_max: f64,
    t: usize,
    repo: &Repository,
    tau_eval: f64,
    mode: SelectionMode,
    rng: &mut R,
) -> Result<(MatchResult, String)> {
    if views.is_empty() {
        return Err(Error::domain("no test views"));
    }
    let mut total = MatchResult::default();
    let mut csv = String::from("view_id,queries,true_matches,accuracy\n");
    for (view_id, (depth, pose)) in views.iter().enumerate() {
        let r = match_view(
            params, depth, pose, intrinsics, d_min, d_max, t, repo, tau_eval, mode, rng,
        )?;
        let _ = writeln!(
            csv,
            "{},{},{},{:.6}",
            view_id,
            r.records.len(),
            r.true_matches(),
            r.accuracy()
        );
        total.extend(&r);
    }
    Ok((total, csv))
}

/// Baseline detector: `t` uniformly random valid-depth pixels (without
/// replacement); returns fewer when the view has fewer valid pixels. The
/// descriptor of each keypoint is its normalized raw depth patch.
pub fn baseline_random_detector<R: Rng>(
    depth: &DepthImage,
    t: usize,
    patch: u32,
    rng: &mut R,
) -> KeypointSet {
    let mut valid: Vec<(u32, u32)> = Vec::new();
    for y in 0..depth.height {
        for x in 0..depth.width {
            if depth.at(x, y) > 0.0 {
                valid.push((x, y));
            }
        }
    }
    valid.shuffle(rng);
    valid.truncate(t);
    let keypoints = valid
        .into_iter()
        .map(|(x, y)| {
            let px = Point2::new(x as f64, y as f64);
            Keypoint {
                x: px,
                s: 0.5,
                f: raw_patch_descriptor(depth, &px, patch),
                cell: (
                    y as usize / crate::net::FEATURE_STRIDE,
                    x as usize / crate::net::FEATURE_STRIDE,
                ),
            }
        })
        .collect();
    KeypointSet {
        keypoints,
        truncated: false,
    }
}

/// Flattened `patch`x`patch` depth window centered on the keypoint,
/// shifted to zero mean and scaled to unit norm. Invalid or out-of-bounds
/// pixels read as 0 before normalization; a constant patch (e.g. a
/// fronto-parallel plane) degenerates to the all-zero descriptor.
pub fn raw_patch_descriptor(depth: &DepthImage, kp: &Point2, patch: u32) -> Vec<f64> {
    let half = patch as i64 / 2;
    let cx = kp.x.round() as i64;
    let cy = kp.y.round() as i64;
    let mut f = Vec::with_capacity((patch * patch) as usize);
    for dy in -half..(patch as i64 - half) {
        for dx in -half..(patch as i64 - half) {
            let (x, y) = (cx + dx, cy + dy);
            let v = if x >= 0 && y >= 0 && x < depth.width as i64 && y < depth.height as i64 {
                let z = depth.at(x as u32, y as u32);
                if z > 0.0 {
                    z as f64
                } else {
                    0.0
                }
            } else {
                0.0
            };
            f.push(v);
        }
    }
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    for v in f.iter_mut() {
        *v -= mean;
    }
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in f.iter_mut() {
            *v /= norm;
        }
    }
    f
}

/// Lifts baseline keypoints and matches them; the baseline analogue of
/// [`match_view`].
pub fn match_view_baseline<R: Rng>(
    depth: &DepthImage,
    pose: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    t: usize,
    patch: u32,
    repo: &Repository,
    tau_eval: f64,
    rng: &mut R,
) -> Result<MatchResult> {
    let kps = baseline_random_detector(depth, t, patch, rng);
    let lifted = lift_keypoints(&kps, depth, pose, intrinsics, &SamplingConfig::default());
    match_keypoints(&kps.keypoints, &lifted, repo, tau_eval)
}

/// Builds a repository with the baseline detector/descriptor.
pub fn build_repository_baseline<R: Rng>(
    views: &[(DepthImage, RigidTransform)],
    intrinsics: &CameraIntrinsics,
    t: usize,
    patch: u32,
    rng: &mut R,
) -> Result<Repository> {
    if views.is_empty() {
        return Err(Error::domain("need at least one repository view"));
    }
    let cfg = SamplingConfig::default();
    let mut repo = Repository {
        dim: (patch * patch) as usize,
        descriptors: Vec::new(),
        world: Vec::new(),
        view_ids: Vec::new(),
    };
    for (view_id, (depth, pose)) in views.iter().enumerate() {
        let kps = baseline_random_detector(depth, t, patch, rng);
        let lifted = lift_keypoints(&kps, depth, pose, intrinsics, &cfg);
        for (kp, world) in kps.keypoints.iter().zip(&lifted) {
            if let Some(w) = world {
                repo.descriptors.push(kp.f.clone());
                repo.world.push(*w);
                repo.view_ids.push(view_id as u32);
            }
        }
    }
    Ok(repo)
}

/// Line colors cycled across rendered matches.
const MATCH_PALETTE: [[u8; 3]; 6] = [
    [230, 60, 60],
    [60, 200, 60],
    [70, 110, 240],
    [230, 200, 40],
    [210, 70, 210],
    [60, 200, 210],
];

fn depth_to_gray(depth: &DepthImage) -> (Vec<u8>, u32, u32) {
    let valid: Vec<f32> = depth.data.iter().copied().filter(|&z| z > 0.0).collect();
    let (lo, hi) = valid.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &z| {
        (l.min(z), h.max(z))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = depth
        .data
        .iter()
        .map(|&z| {
            if z > 0.0 {
                // near = bright, far = dark, leaving 0 for invalid
                (255.0 - 205.0 * (z - lo) / span) as u8
            } else {
                0
            }
        })
        .collect();
    (px, depth.width, depth.height)
}

/// Side-by-side grayscale depth renderings of the two views with one
/// colored line per match, written as a binary portable pixmap (P6).
/// Output dimensions: (sum of widths) x (max of heights).
pub fn render_matches(
    path: &Path,
    view_a: &DepthImage,
    view_b: &DepthImage,
    matches: &[(Point2, Point2)],
) -> Result<()> {
    let (gray_a, wa, ha) = depth_to_gray(view_a);
    let (gray_b, wb, hb) = depth_to_gray(view_b);
    let w = wa + wb;
    let h = ha.max(hb);
    let mut rgb = vec![0u8; (w * h * 3) as usize];
    let mut put = |x: i64, y: i64, c: [u8; 3]| {
        if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
            let o = ((y as u32 * w + x as u32) * 3) as usize;
            rgb[o..o + 3].copy_from_slice(&c);
        }
    };
    for y in 0..ha {
        for x in 0..wa {
            let g = gray_a[(y * wa + x) as usize];
            put(x as i64, y as i64, [g, g, g]);
        }
    }
    for y in 0..hb {
        for x in 0..wb {
            let g = gray_b[(y * wb + x) as usize];
            put((wa + x) as i64, y as i64, [g, g, g]);
        }
    }
    for (i, (a, b)) in matches.iter().enumerate() {
        let color = MATCH_PALETTE[i % MATCH_PALETTE.len()];
        let (mut x0, mut y0) = (a.x.round() as i64, a.y.round() as i64);
        let (x1, y1) = (b.x.round() as i64 + wa as i64, b.y.round() as i64);
        // Bresenham
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            put(x0, y0, color);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&rgb);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
