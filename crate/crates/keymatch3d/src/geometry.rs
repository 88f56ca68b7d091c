//! Pinhole camera model and rigid-body transforms.
//!
//! Pose convention: a [`RigidTransform`] maps camera-frame coordinates to
//! world-frame coordinates, so a repository world point is obtained directly
//! as `pose.transform_point(intrinsics.backproject(u, depth))`. Pixel centers
//! sit at integer coordinates with the image origin at the top-left.

use nalgebra::{Matrix3, Unit, Vector2, Vector3};
use rand::Rng;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point2 = Vector2<f64>;
pub type Point3 = Vector3<f64>;

/// Pinhole intrinsics: focal lengths and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::domain(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::domain("image size must be at least 1x1"));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Project a camera-frame point onto the image plane.
    pub fn project(&self, p: &Point3) -> Result<Point2> {
        if p.z <= 0.0 {
            return Err(Error::domain(format!(
                "cannot project point with non-positive depth z={}",
                p.z
            )));
        }
        Ok(Point2::new(
            self.fx * (p.x / p.z) + self.cx,
            self.fy * (p.y / p.z) + self.cy,
        ))
    }

    /// Lift a pixel with known metric depth back into the camera frame.
    /// Exact right-inverse of [`Self::project`] at valid depths.
    pub fn backproject(&self, u: &Point2, depth: f64) -> Result<Point3> {
        if depth <= 0.0 {
            return Err(Error::domain(format!(
                "cannot backproject invalid depth {depth}"
            )));
        }
        Ok(Point3::new(
            (u.x - self.cx) / self.fx * depth,
            (u.y - self.cy) / self.fy * depth,
            depth,
        ))
    }

    pub fn contains(&self, u: &Point2) -> bool {
        u.x >= 0.0 && u.y >= 0.0 && u.x <= (self.width - 1) as f64 && u.y <= (self.height - 1) as f64
    }
}

/// Rigid motion in SE(3): rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

const ORTHONORMALITY_TOL: f64 = 1e-9;

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, checking the rotation is orthonormal with
    /// determinant +1 to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let err = (gram - Matrix3::identity()).norm();
        if err > ORTHONORMALITY_TOL {
            return Err(Error::domain(format!(
                "rotation is not orthonormal (|R^T R - I| = {err:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::domain(format!(
                "rotation determinant {det} != +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `self` applied after `other`: (self ∘ other)(p) = self(other(p)).
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// One transform per line: 12 whitespace-separated decimals, row-major [R|t].
    pub fn to_pose_line(&self) -> String {
        let mut s = String::new();
        for r in 0..3 {
            for c in 0..3 {
                let _ = write!(s, "{:.17e} ", self.rotation[(r, c)]);
            }
            let _ = write!(s, "{:.17e}", self.translation[r]);
            if r < 2 {
                s.push(' ');
            }
        }
        s
    }

    pub fn from_pose_line(line: &str) -> Result<Self> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::domain(format!("bad pose line: {e}")))?;
        if vals.len() != 12 {
            return Err(Error::domain(format!(
                "pose line must have 12 values, got {}",
                vals.len()
            )));
        }
        let rotation = Matrix3::new(
            vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
        );
        let translation = Vector3::new(vals[3], vals[7], vals[11]);
        Self::new(rotation, translation)
    }
}

/// Reads a pose text file (one 12-decimal [R|t] line per transform).
pub fn read_poses(path: &Path) -> Result<Vec<RigidTransform>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(RigidTransform::from_pose_line)
        .collect()
}

pub fn write_poses(path: &Path, poses: &[RigidTransform]) -> Result<()> {
    let mut out = String::new();
    for p in poses {
        out.push_str(&p.to_pose_line());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Rotation about an arbitrary unit axis by `angle` radians.
pub fn axis_angle_rotation(axis: &Unit<Vector3<f64>>, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(axis, angle).into_inner()
}

/// Samples a random rigid perturbation with rotation angle ≤ `max_angle`
/// and translation norm ≤ `max_translation`. Axis and translation direction
/// are uniform on the sphere; angle and norm are uniform in their ranges.
pub fn sample_perturbation<R: Rng>(
    rng: &mut R,
    max_angle: f64,
    max_translation: f64,
) -> RigidTransform {
    let axis = random_unit_vector(rng);
    let angle = rng.gen_range(0.0..=1.0) * max_angle;
    let dir = random_unit_vector(rng);
    let norm = rng.gen_range(0.0..=1.0) * max_translation;
    RigidTransform {
        rotation: axis_angle_rotation(&Unit::new_unchecked(axis), angle),
        translation: dir * norm,
    }
}

/// Uniform direction on the unit sphere via rejection sampling from the cube.
pub fn random_unit_vector<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        );
        let n = v.norm();
        if n > 1e-6 && n <= 1.0 {
            return v / n;
        }
    }
}
