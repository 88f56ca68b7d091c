use crate::depthsynth::{DepthImage, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform};

/// Minimum camera-space depth; triangles crossing this plane are skipped
/// rather than clipped, which is fine for an object viewed from outside
/// its bounding sphere.
const NEAR_PLANE: f64 = 1e-4;

/// Renders a depth image by z-buffer rasterization. `pose` maps camera to
/// world; mesh vertices are in world coordinates. Pixels with no coverage
/// stay 0 (invalid). Depth at a covered pixel is the perspective-correct
/// z of the nearest surface along the pixel-center ray.
pub fn render_depth(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intrinsics: &CameraIntrinsics,
) -> Result<DepthImage> {
    if !(intrinsics.fx.is_finite() && intrinsics.fy.is_finite())
        || intrinsics.fx <= 0.0
        || intrinsics.fy <= 0.0
    {
        return Err(Error::domain("degenerate intrinsics"));
    }
    let world_to_cam = pose.invert();
    let cam_vertices: Vec<Point3> = mesh
        .vertices
        .iter()
        .map(|v| world_to_cam.transform_point(v))
        .collect();

    let w = intrinsics.width as i64;
    let h = intrinsics.height as i64;
    let mut depth = DepthImage::new(intrinsics.width, intrinsics.height);

    for tri in &mesh.triangles {
        let p0 = &cam_vertices[tri[0] as usize];
        let p1 = &cam_vertices[tri[1] as usize];
        let p2 = &cam_vertices[tri[2] as usize];
        if p0.z <= NEAR_PLANE || p1.z <= NEAR_PLANE || p2.z <= NEAR_PLANE {
            continue;
        }
        let a = intrinsics.project(p0)?;
        let b = intrinsics.project(p1)?;
        let c = intrinsics.project(p2)?;

        // signed doubled area of the projected triangle
        let area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if area.abs() < 1e-12 {
            continue;
        }

        let x_min = a.x.min(b.x).min(c.x).floor().max(0.0) as i64;
        let x_max = a.x.max(b.x).max(c.x).ceil().min((w - 1) as f64) as i64;
        let y_min = a.y.min(b.y).min(c.y).floor().max(0.0) as i64;
        let y_max = a.y.max(b.y).max(c.y).ceil().min((h - 1) as f64) as i64;
        if x_min > x_max || y_min > y_max {
            continue;
        }

        let inv_z = [1.0 / p0.z, 1.0 / p1.z, 1.0 / p2.z];
        for py in y_min..=y_max {
            for px in x_min..=x_max {
                let x = px as f64;
                let y = py as f64;
                // barycentric coordinates in screen space
                let w0 = ((b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x)) / area;
                let w1 = ((c.x - b.x) * (y - b.y) - (c.y - b.y) * (x - b.x)) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                // linear in screen space <=> linear in 1/z on the plane
                let z = 1.0 / (w1 * inv_z[0] + w2 * inv_z[1] + w0 * inv_z[2]);
                let cur = depth.at(px as u32, py as u32);
                if cur == 0.0 || (z as f32) < cur {
                    depth.set(px as u32, py as u32, z as f32);
                }
            }
        }
    }
    Ok(depth)
}
