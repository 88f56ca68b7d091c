use std::path::Path;

use crate::depthsynth::{
    calibrate_depth_range, DatasetManifest, PairGenConfig, PairGenerator, PairRef, TriangleMesh,
};
use crate::error::Result;
use crate::geometry::CameraIntrinsics;

/// Number of rendered views used to calibrate the normalization range.
pub const CALIBRATION_VIEWS: u32 = 20;

/// Renders `count` training pairs of `mesh` into `out_dir` and writes the
/// dataset manifest plus the shared pose file. The normalization range is
/// calibrated from an independent seeded stream of views.
pub fn synthesize_dataset(
    mesh: &TriangleMesh,
    intrinsics: CameraIntrinsics,
    count: u64,
    cfg: PairGenConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let (d_min, d_max) = calibrate_depth_range(mesh, &intrinsics, CALIBRATION_VIEWS, seed)?;
    let gen = PairGenerator::new(mesh, intrinsics, count, cfg, seed)?;

    let mut pairs = Vec::with_capacity(count as usize);
    let mut poses = Vec::with_capacity(2 * count as usize);
    for (i, pair) in gen.enumerate() {
        let pair = pair?;
        let name_a = format!("pair_{i:05}_a.dpth");
        let name_b = format!("pair_{i:05}_b.dpth");
        pair.depth_a.write(&out_dir.join(&name_a))?;
        pair.depth_b.write(&out_dir.join(&name_b))?;
        pairs.push(PairRef {
            depth_a: name_a,
            depth_b: name_b,
        });
        poses.push(pair.pose_a);
        poses.push(pair.pose_b);
    }

    let manifest = DatasetManifest {
        intrinsics,
        d_min,
        d_max,
        seed,
        noise: cfg.noise,
        pose_file: "poses.txt".into(),
        pairs,
        poses,
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}
