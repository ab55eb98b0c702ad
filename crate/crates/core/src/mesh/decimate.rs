use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{MeshError, TriangleMesh};
use crate::geom::{BoundingBox, Vec3};

/// Triangle budget for web previews.
pub const PREVIEW_TARGET_TRIANGLES: usize = 20_000;

const MAX_SEARCH_STEPS: u32 = 20;
const MIN_TRIANGLES: usize = 4;

/// Uniform-grid vertex clustering. Binary-searches the grid resolution for
/// the finest grid whose output fits in `target_triangles`. Meshes already
/// under budget are returned unchanged.
pub fn decimate(mesh: &TriangleMesh, target_triangles: usize) -> Result<TriangleMesh, MeshError> {
    let bounds = mesh.bounding_box()?;
    if mesh.triangles.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let target = target_triangles.max(MIN_TRIANGLES);
    if mesh.triangle_count() <= target {
        return Ok(mesh.clone());
    }

    let (mut lo, mut hi) = (1u64, 1u64 << MAX_SEARCH_STEPS);
    let mut best_fit: Option<(u64, TriangleMesh)> = None;
    let mut smallest_usable: Option<(u64, TriangleMesh)> = None;
    for _ in 0..MAX_SEARCH_STEPS {
        if lo > hi {
            break;
        }
        let res = lo + (hi - lo) / 2;
        let out = cluster(mesh, &bounds, res);
        let n = out.triangle_count();
        if n >= MIN_TRIANGLES && smallest_usable.as_ref().map_or(true, |(r, _)| res < *r) {
            smallest_usable = Some((res, out.clone()));
        }
        if n <= target {
            if n >= MIN_TRIANGLES && best_fit.as_ref().map_or(true, |(r, _)| res > *r) {
                best_fit = Some((res, out));
            }
            lo = res + 1;
        } else {
            hi = res - 1;
        }
    }
    // Tiny inputs may have no grid between "everything collapses" and
    // "nothing collapses"; fall back to the coarsest usable grid.
    Ok(best_fit
        .or(smallest_usable)
        .map(|(_, m)| m)
        .unwrap_or_else(|| mesh.clone()))
}

fn cluster(mesh: &TriangleMesh, bounds: &BoundingBox, res: u64) -> TriangleMesh {
    let cell = bounds.diagonal() / res as f64;
    let key = |p: Vec3| -> (u64, u64, u64) {
        let q = |i: usize| {
            if cell > 0.0 {
                libm::floor((p.axis(i) - bounds.min.axis(i)) / cell) as u64
            } else {
                0
            }
        };
        (q(0), q(1), q(2))
    };
    let mut cluster_of = Vec::with_capacity(mesh.vertices.len());
    let mut ids: BTreeMap<(u64, u64, u64), u32> = BTreeMap::new();
    let mut sums: Vec<(Vec3, u32)> = Vec::new();
    for &v in &mesh.vertices {
        let next = ids.len() as u32;
        let id = *ids.entry(key(v)).or_insert(next);
        if id as usize == sums.len() {
            sums.push((Vec3::ZERO, 0));
        }
        sums[id as usize].0 += v;
        sums[id as usize].1 += 1;
        cluster_of.push(id);
    }
    let mut reps: Vec<Vec3> = sums.iter().map(|&(s, n)| s / f64::from(n)).collect();
    // Pin extreme coordinates so the preview keeps the hull's bounding box.
    for (vi, &v) in mesh.vertices.iter().enumerate() {
        let r = &mut reps[cluster_of[vi] as usize];
        if v.x == bounds.min.x || v.x == bounds.max.x {
            r.x = v.x;
        }
        if v.y == bounds.min.y || v.y == bounds.max.y {
            r.y = v.y;
        }
        if v.z == bounds.min.z || v.z == bounds.max.z {
            r.z = v.z;
        }
    }

    let mut seen = BTreeSet::new();
    let mut triangles = Vec::new();
    for t in &mesh.triangles {
        let c = [cluster_of[t[0] as usize], cluster_of[t[1] as usize], cluster_of[t[2] as usize]];
        if c[0] == c[1] || c[1] == c[2] || c[0] == c[2] {
            continue;
        }
        let mut s = c;
        s.sort_unstable();
        if seen.insert(s) {
            triangles.push(c);
        }
    }
    let mut remap = alloc::vec![u32::MAX; reps.len()];
    let mut vertices = Vec::new();
    for t in &mut triangles {
        for k in t.iter_mut() {
            if remap[*k as usize] == u32::MAX {
                remap[*k as usize] = vertices.len() as u32;
                vertices.push(reps[*k as usize]);
            }
            *k = remap[*k as usize];
        }
    }
    TriangleMesh { vertices, triangles, source_format: mesh.source_format, collapsed_facets: 0 }
}
