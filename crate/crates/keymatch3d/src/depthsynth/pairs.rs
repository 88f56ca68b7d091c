use nalgebra::{Matrix3, Unit, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::depthsynth::{apply_noise, render_depth, DepthImage, NoiseParams, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::{
    axis_angle_rotation, random_unit_vector, sample_perturbation, CameraIntrinsics, Point2,
    RigidTransform,
};

/// Two depth views of the same mesh with their camera-to-world poses.
#[derive(Debug, Clone)]
pub struct RenderedPair {
    pub depth_a: DepthImage,
    pub depth_b: DepthImage,
    pub pose_a: RigidTransform,
    pub pose_b: RigidTransform,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone, Copy)]
pub struct PairGenConfig {
    pub max_angle: f64,
    /// Translation bound as a fraction of the mesh bounding radius.
    pub max_translation_frac: f64,
    /// Minimum mutual-overlap fraction of valid pixels.
    pub min_overlap: f64,
    pub noise: Option<NoiseParams>,
}

impl Default for PairGenConfig {
    fn default() -> Self {
        Self {
            max_angle: 20.0_f64.to_radians(),
            max_translation_frac: 0.15,
            min_overlap: 0.2,
            noise: None,
        }
    }
}

/// Viewpoint radius range as multiples of the mesh bounding radius.
const VIEW_RADIUS_RANGE: (f64, f64) = (1.5, 2.5);
/// Camera roll range about the optical axis.
const ROLL_RANGE_DEG: f64 = 15.0;
const MAX_CONSECUTIVE_REJECTS: u32 = 100;
/// Minimum z component of the centroid-to-eye direction: cameras stay in
/// the upper hemisphere so scenes with a ground plane are seen from above.
const MIN_VIEW_ELEVATION: f64 = 0.25;
/// Stream separator so pair rngs and calibration rngs never collide.
const CALIBRATION_STREAM_TAG: u64 = 0x6b65796d_33646361;
const PAIR_STREAM_MIX: u64 = 0x9e3779b97f4a7c15;

/// Samples a camera-to-world pose on the upper hemisphere around the mesh
/// centroid, looking at the centroid, with a random roll.
pub fn sample_viewpoint<R: Rng>(rng: &mut R, mesh: &TriangleMesh) -> RigidTransform {
    let centroid = mesh.centroid();
    let radius = mesh.bounding_radius();
    let dir = loop {
        let d = random_unit_vector(rng);
        if d.z >= MIN_VIEW_ELEVATION {
            break d;
        }
    };
    let dist = rng.gen_range(VIEW_RADIUS_RANGE.0..=VIEW_RADIUS_RANGE.1) * radius;
    let eye = centroid + dir * dist;

    // camera frame: +z toward the centroid
    let z_axis = (centroid - eye).normalize();
    let mut up = Vector3::new(0.0, 0.0, 1.0);
    if z_axis.dot(&up).abs() > 0.99 {
        up = Vector3::new(0.0, 1.0, 0.0);
    }
    let x_axis = up.cross(&z_axis).normalize();
    let y_axis = z_axis.cross(&x_axis);
    let rotation = Matrix3::from_columns(&[x_axis, y_axis, z_axis]);

    let roll = rng.gen_range(-ROLL_RANGE_DEG.to_radians()..=ROLL_RANGE_DEG.to_radians());
    let roll_rot = axis_angle_rotation(&Unit::new_normalize(z_axis), roll);
    RigidTransform {
        rotation: roll_rot * rotation,
        translation: eye,
    }
}

/// Fraction of A's valid pixels that land on consistent valid depth in B.
/// Pixels are lifted to world through A's pose and reprojected through B's.
pub fn overlap_fraction(
    a: &DepthImage,
    pose_a: &RigidTransform,
    b: &DepthImage,
    pose_b: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    depth_tol: f64,
) -> f64 {
    let world_to_b = pose_b.invert();
    let mut valid = 0usize;
    let mut hit = 0usize;
    for y in 0..a.height {
        for x in 0..a.width {
            let z = a.at(x, y);
            if z <= 0.0 {
                continue;
            }
            valid += 1;
            let cam = match intrinsics.backproject(&Point2::new(x as f64, y as f64), z as f64) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let world = pose_a.transform_point(&cam);
            let in_b = world_to_b.transform_point(&world);
            if in_b.z <= 0.0 {
                continue;
            }
            let u = match intrinsics.project(&in_b) {
                Ok(u) => u,
                Err(_) => continue,
            };
            let (px, py) = (u.x.round(), u.y.round());
            if px < 0.0 || py < 0.0 || px >= b.width as f64 || py >= b.height as f64 {
                continue;
            }
            let zb = b.at(px as u32, py as u32);
            if zb > 0.0 && (zb as f64 - in_b.z).abs() < depth_tol {
                hit += 1;
            }
        }
    }
    if valid == 0 {
        0.0
    } else {
        hit as f64 / valid as f64
    }
}

/// Seeded stream of rendered pairs. Pair `i` draws from an rng derived
/// from `(seed, i)`, so the stream is reproducible and order-independent.
pub struct PairGenerator<'a> {
    mesh: &'a TriangleMesh,
    intrinsics: CameraIntrinsics,
    cfg: PairGenConfig,
    seed: u64,
    count: u64,
    next_index: u64,
}

impl<'a> PairGenerator<'a> {
    pub fn new(
        mesh: &'a TriangleMesh,
        intrinsics: CameraIntrinsics,
        count: u64,
        cfg: PairGenConfig,
        seed: u64,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("pair count must be >= 1"));
        }
        Ok(Self {
            mesh,
            intrinsics,
            cfg,
            seed,
            count,
            next_index: 0,
        })
    }

    /// Generates pair `index` of the stream.
    pub fn generate(&self, index: u64) -> Result<RenderedPair> {
        let stream = self.seed ^ PAIR_STREAM_MIX.wrapping_mul(index + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let radius = self.mesh.bounding_radius();
        let max_translation = self.cfg.max_translation_frac * radius;
        let depth_tol = (0.02 * radius).max(1e-4);

        let mut rejects = 0u32;
        loop {
            let pose_a = sample_viewpoint(&mut rng, self.mesh);
            let perturb = sample_perturbation(&mut rng, self.cfg.max_angle, max_translation);
            let pose_b = pose_a.compose(&perturb);
            let depth_a = render_depth(self.mesh, &pose_a, &self.intrinsics)?;
            let depth_b = render_depth(self.mesh, &pose_b, &self.intrinsics)?;

            let ab = overlap_fraction(
                &depth_a,
                &pose_a,
                &depth_b,
                &pose_b,
                &self.intrinsics,
                depth_tol,
            );
            let ba = overlap_fraction(
                &depth_b,
                &pose_b,
                &depth_a,
                &pose_a,
                &self.intrinsics,
                depth_tol,
            );
            if depth_a.valid_count() > 0 && ab.min(ba) >= self.cfg.min_overlap {
                let (depth_a, depth_b) = match &self.cfg.noise {
                    Some(p) => (
                        apply_noise(&depth_a, p, &mut rng),
                        apply_noise(&depth_b, p, &mut rng),
                    ),
                    None => (depth_a, depth_b),
                };
                return Ok(RenderedPair {
                    depth_a,
                    depth_b,
                    pose_a,
                    pose_b,
                    intrinsics: self.intrinsics,
                });
            }
            rejects += 1;
            if rejects >= MAX_CONSECUTIVE_REJECTS {
                return Err(Error::config(
                    "perturbation too large: 100 consecutive pairs below the overlap floor",
                ));
            }
        }
    }
}

impl Iterator for PairGenerator<'_> {
    type Item = Result<RenderedPair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index >= self.count {
            return None;
        }
        let item = self.generate(self.next_index);
        self.next_index += 1;
        Some(item)
    }
}

/// Fixes the dataset normalization range from the 1st/99th percentile of
/// valid depths over a sample of rendered calibration views.
pub fn calibrate_depth_range(
    mesh: &TriangleMesh,
    intrinsics: &CameraIntrinsics,
    views: u32,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CALIBRATION_STREAM_TAG);
    let mut depths: Vec<f32> = Vec::new();
    for _ in 0..views {
        let pose = sample_viewpoint(&mut rng, mesh);
        let d = render_depth(mesh, &pose, intrinsics)?;
        depths.extend(d.data.iter().copied().filter(|&z| z > 0.0));
    }
    if depths.is_empty() {
        return Err(Error::config(
            "calibration views produced no valid depth pixels",
        ));
    }
    depths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = depths[(depths.len() - 1) / 100] as f64;
    let hi = depths[(depths.len() - 1) * 99 / 100] as f64;
    if hi <= lo {
        // degenerate scene (constant depth): widen artificially
        return Ok((lo - 0.01, lo + 0.01));
    }
    Ok((lo, hi))
}
