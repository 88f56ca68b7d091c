use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Indexed triangle mesh with vertices in meters (world frame).
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::domain("mesh has no triangles"));
        }
        let n = vertices.len() as u32;
        for t in &triangles {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::domain(format!(
                    "triangle index out of range: {t:?} with {n} vertices"
                )));
            }
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::domain("mesh vertices must be finite"));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn centroid(&self) -> Point3 {
        let sum: Point3 = self.vertices.iter().sum();
        sum / self.vertices.len() as f64
    }

    /// Radius of the sphere around the centroid containing every vertex.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max)
    }

    /// Minimal OBJ reader: `v x y z` and `f a b c` lines (1-based indices,
    /// `a/b/c` vertex attributes ignored, polygons fan-triangulated).
    pub fn load_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("v") => {
                    let coords: Vec<f64> = toks
                        .take(3)
                        .map(|t| t.parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| {
                            Error::format(path, format!("line {}: {e}", lineno + 1))
                        })?;
                    if coords.len() != 3 {
                        return Err(Error::format(
                            path,
                            format!("line {}: vertex needs 3 coordinates", lineno + 1),
                        ));
                    }
                    vertices.push(Point3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = toks
                        .map(|t| {
                            t.split('/')
                                .next()
                                .unwrap_or("")
                                .parse::<u32>()
                                .map(|i| i - 1)
                        })
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| {
                            Error::format(path, format!("line {}: {e}", lineno + 1))
                        })?;
                    if idx.len() < 3 {
                        return Err(Error::format(
                            path,
                            format!("line {}: face needs >= 3 vertices", lineno + 1),
                        ));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
            .map_err(|e| Error::format(path, e.to_string()))
    }

    /// Procedural test object: a subdivided icosahedron with seeded radial
    /// bumps, scaled to the given bounding radius. Gives the renderer and
    /// the detector non-trivial local geometry without any asset files.
    pub fn procedural(seed: u64, subdivisions: u32, radius: f64) -> Self {
        let (mut vertices, triangles) = icosphere(subdivisions);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // low-frequency lobes so the bumps are smooth but asymmetric
        let lobes: Vec<(Point3, f64, f64)> = (0..12)
            .map(|_| {
                let dir = crate::geometry::random_unit_vector(&mut rng);
                let amp = rng.gen_range(-0.25..0.25);
                let sharp = rng.gen_range(2.0..8.0);
                (dir, amp, sharp)
            })
            .collect();
        for v in &mut vertices {
            let dir = v.normalize();
            let mut r = 1.0;
            for (ldir, amp, sharp) in &lobes {
                let d = dir.dot(ldir).max(0.0);
                r += amp * d.powf(*sharp);
            }
            *v = dir * (r * radius);
        }
        Self::new(vertices, triangles).expect("procedural mesh is valid")
    }

    /// Procedural tabletop scene: the [`TriangleMesh::procedural`] object
    /// resting above a gently undulating ground plane. Nearly every pixel
    /// of a view from the upper hemisphere hits valid surface, which is
    /// what the correspondence-labeling pipeline needs to find positives.
    pub fn procedural_scene(seed: u64, subdivisions: u32, radius: f64) -> Self {
        let object = Self::procedural(seed, subdivisions, radius);
        let mut vertices = object.vertices;
        let mut triangles = object.triangles;

        // seeded low-frequency height field so the ground has local
        // geometry (a perfectly flat plane degenerates every depth patch)
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70_6c_61_6e_65); // "plane"
        let waves: Vec<(f64, f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.03..0.10) * radius,
                )
            })
            .collect();

        let half = 2.0 * radius;
        let z0 = -1.05 * radius;
        let n = 12usize; // grid cells per side
        let base = vertices.len() as u32;
        for gy in 0..=n {
            for gx in 0..=n {
                let x = -half + 2.0 * half * gx as f64 / n as f64;
                let y = -half + 2.0 * half * gy as f64 / n as f64;
                let mut z = z0;
                for (ax, ay, px, py, amp) in &waves {
                    z += amp * (ax * x / radius + px).sin() * (ay * y / radius + py).sin();
                }
                vertices.push(Point3::new(x, y, z));
            }
        }
        let idx = |gx: usize, gy: usize| base + (gy * (n + 1) + gx) as u32;
        for gy in 0..n {
            for gx in 0..n {
                let (a, b, c, d) = (idx(gx, gy), idx(gx + 1, gy), idx(gx + 1, gy + 1), idx(gx, gy + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Self::new(vertices, triangles).expect("procedural scene is valid")
    }
}

/// Unit icosphere: vertices on the unit sphere, `subdivisions` rounds of
/// 4-way triangle splitting (0 -> 20 faces, 1 -> 80, 2 -> 320, 3 -> 1280).
fn icosphere(subdivisions: u32) -> (Vec<Point3>, Vec<[u32; 3]>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = vec![
        Point3::new(-1.0, phi, 0.0),
        Point3::new(1.0, phi, 0.0),
        Point3::new(-1.0, -phi, 0.0),
        Point3::new(1.0, -phi, 0.0),
        Point3::new(0.0, -1.0, phi),
        Point3::new(0.0, 1.0, phi),
        Point3::new(0.0, -1.0, -phi),
        Point3::new(0.0, 1.0, -phi),
        Point3::new(phi, 0.0, -1.0),
        Point3::new(phi, 0.0, 1.0),
        Point3::new(-phi, 0.0, -1.0),
        Point3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v.normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint_cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mid = [0u32; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint_cache.entry(key).or_insert_with(|| {
                    let m = ((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize();
                    vertices.push(m);
                    (vertices.len() - 1) as u32
                });
            }
            next.push([tri[0], mid[0], mid[2]]);
            next.push([tri[1], mid[1], mid[0]]);
            next.push([tri[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        triangles = next;
    }
    (vertices, triangles)
}
