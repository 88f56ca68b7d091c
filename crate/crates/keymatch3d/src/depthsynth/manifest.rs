use std::fmt::Write as _;
use std::path::Path;

use crate::depthsynth::{DepthImage, NoiseParams};
use crate::error::{Error, Result};
use crate::geometry::{read_poses, write_poses, CameraIntrinsics, RigidTransform};

/// File references for one rendered pair; poses live in the shared pose
/// file at lines `2*i` (view a) and `2*i + 1` (view b).
#[derive(Debug, Clone, PartialEq)]
pub struct PairRef {
    pub depth_a: String,
    pub depth_b: String,
}

/// Plain-text key=value description of a rendered dataset: intrinsics,
/// normalization range, seed, noise parameters, and per-pair file/pose
/// references. Everything needed to reproduce or consume the data.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub intrinsics: CameraIntrinsics,
    pub d_min: f64,
    pub d_max: f64,
    pub seed: u64,
    pub noise: Option<NoiseParams>,
    pub pose_file: String,
    pub pairs: Vec<PairRef>,
    pub poses: Vec<RigidTransform>,
}

pub const MANIFEST_FILE: &str = "dataset.manifest";

impl DatasetManifest {
    /// Pose of view a / b of pair `i`.
    pub fn pose_a(&self, i: usize) -> &RigidTransform {
        &self.poses[2 * i]
    }

    pub fn pose_b(&self, i: usize) -> &RigidTransform {
        &self.poses[2 * i + 1]
    }

    pub fn load_depth(&self, dir: &Path, name: &str) -> Result<DepthImage> {
        DepthImage::read(&dir.join(name))
    }

    /// Writes `dataset.manifest` plus the pose file into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_poses(&dir.join(&self.pose_file), &self.poses)?;
        let mut s = String::new();
        let c = &self.intrinsics;
        let _ = writeln!(s, "width={}", c.width);
        let _ = writeln!(s, "height={}", c.height);
        let _ = writeln!(s, "fx={:.17e}", c.fx);
        let _ = writeln!(s, "fy={:.17e}", c.fy);
        let _ = writeln!(s, "cx={:.17e}", c.cx);
        let _ = writeln!(s, "cy={:.17e}", c.cy);
        let _ = writeln!(s, "d_min={:.17e}", self.d_min);
        let _ = writeln!(s, "d_max={:.17e}", self.d_max);
        let _ = writeln!(s, "seed={}", self.seed);
        match &self.noise {
            None => {
                let _ = writeln!(s, "noise=none");
            }
            Some(n) => {
                let _ = writeln!(s, "noise=on");
                let _ = writeln!(s, "noise.sigma_base={:.17e}", n.sigma_base);
                let _ = writeln!(s, "noise.sigma_quadratic={:.17e}", n.sigma_quadratic);
                let _ = writeln!(s, "noise.dropout_prob={:.17e}", n.dropout_prob);
                let _ = writeln!(s, "noise.edge_shadow_width={}", n.edge_shadow_width);
            }
        }
        let _ = writeln!(s, "poses={}", self.pose_file);
        let _ = writeln!(s, "pair_count={}", self.pairs.len());
        for (i, p) in self.pairs.iter().enumerate() {
            let _ = writeln!(s, "pair.{i}.depth_a={}", p.depth_a);
            let _ = writeln!(s, "pair.{i}.depth_b={}", p.depth_b);
        }
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut kv = std::collections::HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(&path, format!("bad line: {line}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<String> {
            kv.get(k)
                .cloned()
                .ok_or_else(|| Error::format(&path, format!("missing key {k}")))
        };
        let parse_f = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|e| Error::format(&path, format!("key {k}: {e}")))
        };
        let parse_u = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|e| Error::format(&path, format!("key {k}: {e}")))
        };

        let intrinsics = CameraIntrinsics::new(
            parse_f("fx")?,
            parse_f("fy")?,
            parse_f("cx")?,
            parse_f("cy")?,
            parse_u("width")? as u32,
            parse_u("height")? as u32,
        )?;
        let noise = match get("noise")?.as_str() {
            "none" => None,
            "on" => Some(NoiseParams {
                sigma_base: parse_f("noise.sigma_base")?,
                sigma_quadratic: parse_f("noise.sigma_quadratic")?,
                dropout_prob: parse_f("noise.dropout_prob")?,
                edge_shadow_width: parse_u("noise.edge_shadow_width")? as u32,
            }),
            other => {
                return Err(Error::format(&path, format!("noise must be none|on, got {other}")))
            }
        };
        let pose_file = get("poses")?;
        let poses = read_poses(&dir.join(&pose_file))?;
        let pair_count = parse_u("pair_count")? as usize;
        if poses.len() != 2 * pair_count {
            return Err(Error::format(
                &path,
                format!("pose file has {} lines, expected {}", poses.len(), 2 * pair_count),
            ));
        }
        let mut pairs = Vec::with_capacity(pair_count);
        for i in 0..pair_count {
            pairs.push(PairRef {
                depth_a: get(&format!("pair.{i}.depth_a"))?,
                depth_b: get(&format!("pair.{i}.depth_b"))?,
            });
        }
        Ok(Self {
            intrinsics,
            d_min: parse_f("d_min")?,
            d_max: parse_f("d_max")?,
            seed: parse_u("seed")?,
            noise,
            pose_file,
            pairs,
            poses,
        })
    }
}
