//! Rigid transform + exact clipping of a hull against the still-water plane.
//!
//! Volumes and moments use surface integrals over the wetted pieces only:
//! with `F = (0, 0, z - w)` the waterplane cap contributes nothing, so
//! `V = Σ ∫ (z - w) n_z dA` over the clipped hull surface.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::weld::Welder;
use super::WatertightMesh;
use crate::geom::{Attitude, RigidTransform, Vec3};

/// Wetted part of one hull triangle (a convex polygon with 3 or 4 corners).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WettedPiece {
    pub triangle: usize,
    pub polygon: Vec<Vec3>,
    pub area: f64,
    /// `area / triangle area`, in [0, 1].
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec3>,
    /// Closed loops do not repeat their first point.
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let open: f64 = self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        match (self.closed, self.points.first(), self.points.last()) {
            (true, Some(a), Some(b)) => open + (*a - *b).norm(),
            _ => open,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipResult {
    pub wetted_area: f64,
    pub submerged_volume: f64,
    pub waterline_contour: Vec<Polyline>,
    pub wetted_triangles: Vec<WettedPiece>,
    /// Centroid of the displaced volume; `None` when the hull is dry.
    pub hydrostatic_center: Option<Vec3>,
    /// Per-triangle wetted fraction, indexed like the mesh triangles.
    pub wetted_fraction: Vec<f64>,
    /// Hull vertices after the rigid transform.
    pub transformed_vertices: Vec<Vec3>,
    pub messages: Vec<String>,
}

/// Sutherland–Hodgman clip of one triangle to `z <= w`. Returns the wetted
/// polygon and, when the triangle crosses the plane, the on-plane segment.
fn clip_triangle(c: [Vec3; 3], w: f64) -> (Vec<Vec3>, Option<(Vec3, Vec3)>) {
    let below = |p: Vec3| p.z <= w;
    if c.iter().all(|&p| below(p)) {
        return (c.to_vec(), None);
    }
    if !c.iter().any(|&p| below(p)) {
        return (Vec::new(), None);
    }
    let cross = |p: Vec3, q: Vec3| {
        // p below, q above: same arithmetic from both incident triangles
        let (lo, hi) = if p.z <= w { (p, q) } else { (q, p) };
        let t = (w - lo.z) / (hi.z - lo.z);
        Vec3::new(lo.x + t * (hi.x - lo.x), lo.y + t * (hi.y - lo.y), w)
    };
    let mut poly = Vec::with_capacity(4);
    let mut exit = None;
    let mut entry = None;
    for k in 0..3 {
        let (p, q) = (c[k], c[(k + 1) % 3]);
        match (below(p), below(q)) {
            (true, true) => poly.push(q),
            (true, false) => {
                let x = cross(p, q);
                poly.push(x);
                exit = Some(x);
            }
            (false, true) => {
                let x = cross(p, q);
                poly.push(x);
                poly.push(q);
                entry = Some(x);
            }
            (false, false) => {}
        }
    }
    let seg = match (exit, entry) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    (poly, seg)
}

fn polygon_area_vector(poly: &[Vec3]) -> Vec3 {
    let mut s = Vec3::ZERO;
    for k in 1..poly.len().saturating_sub(1) {
        s += (poly[k] - poly[0]).cross(poly[k + 1] - poly[0]) * 0.5;
    }
    s
}

/// ∫ f·g over a triangle for linear f, g given at the corners.
fn linear_product_integral(area: f64, f: [f64; 3], g: [f64; 3]) -> f64 {
    let sf: f64 = f.iter().sum();
    let sg: f64 = g.iter().sum();
    area / 12.0 * (f[0] * g[0] + f[1] * g[1] + f[2] * g[2] + sf * sg)
}

/// Fan triangles of a convex polygon.
fn fan(poly: &[Vec3]) -> impl Iterator<Item = [Vec3; 3]> + '_ {
    (1..poly.len().saturating_sub(1)).map(move |k| [poly[0], poly[k], poly[k + 1]])
}

struct VolumeMoments {
    volume: f64,
    first: Vec3,
}

fn accumulate_volume(poly: &[Vec3], w: f64, acc: &mut VolumeMoments) {
    for t in fan(poly) {
        let sz = (t[1] - t[0]).cross(t[2] - t[0]).z * 0.5;
        if sz == 0.0 {
            continue;
        }
        let h = [t[0].z - w, t[1].z - w, t[2].z - w];
        // ∫ h dA_z, ∫ x h dA_z, ∫ y h dA_z, ∫ (z² - w²)/2 dA_z with dA_z = n_z dA
        acc.volume += sz * (h[0] + h[1] + h[2]) / 3.0;
        let xs = [t[0].x, t[1].x, t[2].x];
        let ys = [t[0].y, t[1].y, t[2].y];
        let zp = [(t[0].z + w) * 0.5, (t[1].z + w) * 0.5, (t[2].z + w) * 0.5];
        acc.first += Vec3::new(
            linear_product_integral(sz, xs, h),
            linear_product_integral(sz, ys, h),
            linear_product_integral(sz, zp, h),
        );
    }
}

fn transformed(mesh: &WatertightMesh, att: &Attitude) -> (Vec<Vec3>, RigidTransform) {
    let tf = att.transformer();
    (mesh.vertices.iter().map(|&p| tf.apply(p)).collect(), tf)
}

/// Displaced volume only; the fast path used inside equilibrium loops.
pub fn displaced_volume(mesh: &WatertightMesh, water_z: f64, att: &Attitude) -> f64 {
    let (verts, _) = transformed(mesh, att);
    let mut acc = VolumeMoments { volume: 0.0, first: Vec3::ZERO };
    for t in &mesh.triangles {
        let c = [verts[t[0] as usize], verts[t[1] as usize], verts[t[2] as usize]];
        let (poly, _) = clip_triangle(c, water_z);
        if poly.len() >= 3 {
            accumulate_volume(&poly, water_z, &mut acc);
        }
    }
    acc.volume
}

/// Clips the hull, placed at `(sink, trim)` about `cog`, below `z = water_z`.
pub fn clip_below_plane(mesh: &WatertightMesh, water_z: f64, sink: f64, trim_deg: f64, cog: Vec3) -> ClipResult {
    let att = Attitude::new(sink, trim_deg, cog);
    let (verts, _) = transformed(mesh, &att);
    let mut acc = VolumeMoments { volume: 0.0, first: Vec3::ZERO };
    let mut pieces = Vec::new();
    let mut fractions = alloc::vec![0.0; mesh.triangle_count()];
    let mut segments = Vec::new();
    let mut wetted_area = 0.0;
    for (i, t) in mesh.triangles.iter().enumerate() {
        let c = [verts[t[0] as usize], verts[t[1] as usize], verts[t[2] as usize]];
        let (poly, seg) = clip_triangle(c, water_z);
        if let Some(s) = seg {
            segments.push(s);
        }
        if poly.len() < 3 {
            continue;
        }
        accumulate_volume(&poly, water_z, &mut acc);
        let area = polygon_area_vector(&poly).norm();
        let full = (c[1] - c[0]).cross(c[2] - c[0]).norm() * 0.5;
        if area <= 0.0 {
            continue;
        }
        let fraction = if poly.len() == 3 && c.iter().all(|p| p.z <= water_z) { 1.0 } else { (area / full).min(1.0) };
        wetted_area += area;
        fractions[i] = fraction;
        pieces.push(WettedPiece { triangle: i, polygon: poly, area, fraction });
    }
    let tol = mesh.weld_tolerance();
    let (waterline_contour, open) = chain_segments(&segments, tol);
    let mut messages = Vec::new();
    if open > 0 {
        messages.push(alloc::format!("{open} open waterline chains"));
    }
    let volume = acc.volume.max(0.0);
    let hydrostatic_center = (acc.volume > 0.0).then(|| acc.first / acc.volume);
    ClipResult {
        wetted_area,
        submerged_volume: volume,
        waterline_contour,
        wetted_triangles: pieces,
        hydrostatic_center,
        wetted_fraction: fractions,
        transformed_vertices: verts,
        messages,
    }
}

/// Chains on-plane segments into polylines; endpoints within `tol` join.
/// Returns the polylines and the number of open ones.
fn chain_segments(segments: &[(Vec3, Vec3)], tol: f64) -> (Vec<Polyline>, usize) {
    let mut welder = Welder::new(tol);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut seen = alloc::collections::BTreeSet::new();
    for &(a, b) in segments {
        let (ia, ib) = (welder.insert(a), welder.insert(b));
        if ia != ib && seen.insert((ia.min(ib), ia.max(ib))) {
            edges.push((ia, ib));
        }
    }
    let mut adj: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (k, &(a, b)) in edges.iter().enumerate() {
        adj.entry(a).or_default().push(k);
        adj.entry(b).or_default().push(k);
    }
    let mut used = alloc::vec![false; edges.len()];
    let mut out = Vec::new();
    let mut open = 0;
    let other = |k: usize, v: u32| if edges[k].0 == v { edges[k].1 } else { edges[k].0 };
    // Start open chains at odd-degree nodes first so they come out whole.
    let mut starts: Vec<usize> = Vec::new();
    for (v, ks) in &adj {
        if ks.len() % 2 == 1 {
            starts.extend(ks.iter().copied().filter(|&k| edges[k].0 == *v || edges[k].1 == *v).take(1));
        }
    }
    starts.extend(0..edges.len());
    for start in starts {
        if used[start] {
            continue;
        }
        let (a, b) = edges[start];
        // orient the first edge away from an odd node when there is one
        let (first, mut cur) = if adj[&b].len() % 2 == 1 && adj[&a].len() % 2 == 0 { (b, a) } else { (a, b) };
        used[start] = true;
        let mut ids = alloc::vec![first, cur];
        loop {
            let next = adj[&cur].iter().copied().find(|&k| !used[k]);
            let Some(k) = next else { break };
            used[k] = true;
            cur = other(k, cur);
            if cur == first {
                break;
            }
            ids.push(cur);
        }
        let closed = cur == first;
        if !closed {
            open += 1;
        }
        out.push(Polyline { points: ids.into_iter().map(|i| welder.points[i as usize]).collect(), closed });
    }
    (out, open)
}

/// Hydrostatic force on the wetted surface and its moment about `about`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydrostaticLoads {
    pub force: Vec3,
    pub moment: Vec3,
}

/// Integrates `p = ρ g (w - z)` over the wetted pieces: `F = -∫ p n dA`,
/// `M = ∫ (r - about) × dF`. Exact for planar pieces (p is linear).
pub fn hydrostatic_loads(pieces: &[WettedPiece], water_z: f64, rho_g: f64, about: Vec3) -> HydrostaticLoads {
    let mut force = Vec3::ZERO;
    let mut moment = Vec3::ZERO;
    for piece in pieces {
        for t in fan(&piece.polygon) {
            let s = (t[1] - t[0]).cross(t[2] - t[0]) * 0.5;
            let area = s.norm();
            if area == 0.0 {
                continue;
            }
            let p = [rho_g * (water_z - t[0].z), rho_g * (water_z - t[1].z), rho_g * (water_z - t[2].z)];
            let pc = (p[0] + p[1] + p[2]) / 3.0;
            force += s * (-pc);
            let r = [t[0] - about, t[1] - about, t[2] - about];
            // ∫ p (r - about) dA, per component
            let pr = Vec3::new(
                linear_product_integral(area, p, [r[0].x, r[1].x, r[2].x]),
                linear_product_integral(area, p, [r[0].y, r[1].y, r[2].y]),
                linear_product_integral(area, p, [r[0].z, r[1].z, r[2].z]),
            );
            moment += (pr / area).cross(s) * -1.0;
        }
    }
    HydrostaticLoads { force, moment }
}
