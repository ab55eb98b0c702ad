//! Triangle meshes: parsing, watertightness validation, plane clipping and
//! preview decimation.

mod clip;
mod decimate;
mod intersect;
mod parse;
mod stl;
mod validate;
pub(crate) mod weld;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::{BoundingBox, Vec3};

pub use clip::{clip_below_plane, displaced_volume, hydrostatic_loads, ClipResult, HydrostaticLoads, Polyline, WettedPiece};
pub use decimate::{decimate, PREVIEW_TARGET_TRIANGLES};
pub use intersect::count_self_intersections;
pub use parse::{detect_format, parse_mesh};
pub use stl::write_binary_stl;
pub use validate::{validate, ValidationReport};

/// Relative weld tolerance, as a fraction of the bounding-box diagonal.
pub const WELD_RELATIVE_TOLERANCE: f64 = 1e-7;
/// Relative degenerate-area threshold, as a fraction of the squared diagonal.
pub const DEGENERATE_RELATIVE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("mesh is not a valid watertight solid: {0}")]
    InvalidMesh(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SourceFormat {
    StlBinary,
    StlAscii,
    Obj,
}

/// Indexed triangle mesh with welded vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub source_format: SourceFormat,
    /// Input facets dropped because welding collapsed two of their corners.
    #[serde(default)]
    pub collapsed_facets: usize,
}

impl TriangleMesh {
    /// Builds a mesh from raw parts, checking the index invariants. Vertices
    /// are taken as-is (no welding).
    pub fn from_parts(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, source_format: SourceFormat) -> Result<Self, MeshError> {
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(MeshError::Malformed(alloc::format!("non-finite vertex {v:?}")));
        }
        let n = vertices.len() as u64;
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&k| u64::from(k) >= n) {
                return Err(MeshError::Malformed(alloc::format!("triangle {i} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(MeshError::Malformed(alloc::format!("triangle {i} repeats a vertex")));
            }
        }
        Ok(Self { vertices, triangles, source_format, collapsed_facets: 0 })
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(c - a).norm() * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Σ v0·(v1×v2)/6 over all triangles.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(b.cross(c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn bounding_box(&self) -> Result<BoundingBox, MeshError> {
        BoundingBox::from_points(self.vertices.iter().copied()).ok_or(MeshError::EmptyMesh)
    }

    /// Weld tolerance for this mesh: bounding-box diagonal × 1e-7.
    pub fn weld_tolerance(&self) -> f64 {
        self.bounding_box().map(|b| b.diagonal() * WELD_RELATIVE_TOLERANCE).unwrap_or(0.0)
    }

    pub fn translated(&self, t: Vec3) -> Self {
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v = *v + t;
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v = *v * s;
        }
        m
    }

    /// Applies `f` to every vertex; topology is unchanged.
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v = f(*v);
        }
        m
    }
}

/// A mesh that passed [`validate`]. Volume and clipping operations are only
/// meaningful on closed, outward-oriented, single-shell surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct WatertightMesh {
    mesh: TriangleMesh,
    report: ValidationReport,
}

impl WatertightMesh {
    pub fn new(mesh: TriangleMesh) -> Result<Self, MeshError> {
        let report = validate(&mesh);
        if !report.is_valid {
            return Err(MeshError::InvalidMesh(report.messages.join("; ")));
        }
        Ok(Self { mesh, report })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn into_inner(self) -> TriangleMesh {
        self.mesh
    }
}

impl core::ops::Deref for WatertightMesh {
    type Target = TriangleMesh;
    fn deref(&self) -> &TriangleMesh {
        &self.mesh
    }
}

/// Test and oracle helpers: analytic solids with known volume.
pub mod shapes {
    use alloc::vec;
    use alloc::vec::Vec;

    use super::{SourceFormat, TriangleMesh};
    use crate::geom::Vec3;

    /// Axis-aligned box `[min, max]`, 12 outward triangles.
    pub fn box_mesh(min: Vec3, max: Vec3) -> TriangleMesh {
        let v = |i: u32| {
            Vec3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let vertices: Vec<Vec3> = (0..8).map(v).collect();
        let triangles = vec![
            [0, 2, 1], [1, 2, 3], // z = min
            [4, 5, 6], [5, 7, 6], // z = max
            [0, 1, 4], [1, 5, 4], // y = min
            [2, 6, 3], [3, 6, 7], // y = max
            [0, 4, 2], [2, 4, 6], // x = min
            [1, 3, 5], [3, 7, 5], // x = max
        ];
        TriangleMesh { vertices, triangles, source_format: SourceFormat::StlBinary, collapsed_facets: 0 }
    }

    pub fn unit_cube() -> TriangleMesh {
        box_mesh(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0))
    }

    /// Prism along x whose cross-section is the given counter-clockwise (in
    /// the y-z plane, viewed from +x) convex polygon.
    pub fn prism_x(section: &[(f64, f64)], x0: f64, x1: f64) -> TriangleMesh {
        let n = section.len() as u32;
        let mut vertices = Vec::with_capacity(2 * section.len());
        for &(y, z) in section {
            vertices.push(Vec3::new(x0, y, z));
        }
        for &(y, z) in section {
            vertices.push(Vec3::new(x1, y, z));
        }
        let mut triangles = Vec::new();
        for i in 1..n - 1 {
            // x0 cap faces -x, x1 cap faces +x
            triangles.push([0, i + 1, i]);
            triangles.push([n, n + i, n + i + 1]);
        }
        for i in 0..n {
            let j = (i + 1) % n;
            triangles.push([i, j, n + j]);
            triangles.push([i, n + j, n + i]);
        }
        TriangleMesh { vertices, triangles, source_format: SourceFormat::StlBinary, collapsed_facets: 0 }
    }

    /// Icosphere with `20·4^subdivisions` triangles.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: u32) -> TriangleMesh {
        let t = (1.0 + libm::sqrt(5.0)) / 2.0;
        let mut vertices: Vec<Vec3> = [
            (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
            (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
            (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| {
            let p = Vec3::new(x, y, z);
            p / p.norm()
        })
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut cache = alloc::collections::BTreeMap::new();
            let mut mid = |a: u32, b: u32, vs: &mut Vec<Vec3>| -> u32 {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    let m = (vs[a as usize] + vs[b as usize]) * 0.5;
                    vs.push(m / m.norm());
                    (vs.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let vertices = vertices.into_iter().map(|p| center + p * radius).collect();
        TriangleMesh { vertices, triangles: faces, source_format: SourceFormat::StlBinary, collapsed_facets: 0 }
    }

    /// Disjoint union of meshes (still one `TriangleMesh`, several shells).
    pub fn union(parts: &[TriangleMesh]) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for p in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&p.vertices);
            triangles.extend(p.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        }
        TriangleMesh { vertices, triangles, source_format: SourceFormat::StlBinary, collapsed_facets: 0 }
    }

    /// Box with a bump fused onto its top: an L-shaped (non-convex) solid
    /// built from two boxes sharing a face, welded into a single shell.
    pub fn stepped_block(length: f64, beam: f64, height: f64, step_len: f64, step_h: f64) -> TriangleMesh {
        // Side profile in the x-z plane (counter-clockwise seen from +y):
        // (0,0) (L,0) (L,H) (s,H) (s,H+h) (0,H+h)
        let profile = [
            (0.0, 0.0),
            (length, 0.0),
            (length, height),
            (step_len, height),
            (step_len, height + step_h),
            (0.0, height + step_h),
        ];
        extrude_profile_y(&profile, 0.0, beam)
    }

    /// Extrudes a simple counter-clockwise x-z profile along y. The profile
    /// may be non-convex; caps are ear-clipped.
    pub fn extrude_profile_y(profile: &[(f64, f64)], y0: f64, y1: f64) -> TriangleMesh {
        let n = profile.len() as u32;
        let mut vertices = Vec::new();
        for &(x, z) in profile {
            vertices.push(Vec3::new(x, y0, z));
        }
        for &(x, z) in profile {
            vertices.push(Vec3::new(x, y1, z));
        }
        let ears = ear_clip(profile);
        let mut triangles = Vec::new();
        for [a, b, c] in ears {
            // profile is CCW seen from +y, i.e. looking towards -y; the y0 cap
            // faces -y so it keeps that winding.
            triangles.push([a, b, c]);
            triangles.push([n + a, n + c, n + b]);
        }
        for i in 0..n {
            let j = (i + 1) % n;
            triangles.push([i, n + i, n + j]);
            triangles.push([i, n + j, j]);
        }
        TriangleMesh { vertices, triangles, source_format: SourceFormat::StlBinary, collapsed_facets: 0 }
    }

    fn ear_clip(poly: &[(f64, f64)]) -> Vec<[u32; 3]> {
        let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
        let mut idx: Vec<u32> = (0..poly.len() as u32).collect();
        let mut out = Vec::new();
        let p = |i: u32| poly[i as usize];
        // Orientation of the polygon in (x, z) coordinates.
        let area: f64 = (0..poly.len()).map(|i| cross((0.0, 0.0), poly[i], poly[(i + 1) % poly.len()])).sum();
        let sign = if area >= 0.0 { 1.0 } else { -1.0 };
        while idx.len() > 3 {
            let m = idx.len();
            let mut clipped = false;
            for k in 0..m {
                let (a, b, c) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
                if sign * cross(p(a), p(b), p(c)) <= 0.0 {
                    continue;
                }
                let inside = idx.iter().any(|&q| {
                    q != a && q != b && q != c && {
                        let s1 = sign * cross(p(a), p(b), p(q));
                        let s2 = sign * cross(p(b), p(c), p(q));
                        let s3 = sign * cross(p(c), p(a), p(q));
                        s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0
                    }
                });
                if !inside {
                    out.push([a, b, c]);
                    idx.remove(k);
                    clipped = true;
                    break;
                }
            }
            if !clipped {
                break;
            }
        }
        if idx.len() == 3 {
            out.push([idx[0], idx[1], idx[2]]);
        }
        out
    }
}
