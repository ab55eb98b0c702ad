//! Exact triangle-triangle intersection counting for the advisory
//! self-intersection check. Uses adaptive-precision orientation predicates.

use alloc::vec;
use alloc::vec::Vec;

use robust::{orient2d, orient3d, Coord, Coord3D};

use super::TriangleMesh;
use crate::geom::{BoundingBox, Vec3};

fn c3(p: Vec3) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

fn o3(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    orient3d(c3(a), c3(b), c3(c), c3(d))
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

type P2 = (f64, f64);

fn o2(a: P2, b: P2, c: P2) -> i8 {
    sign(orient2d(Coord { x: a.0, y: a.1 }, Coord { x: b.0, y: b.1 }, Coord { x: c.0, y: c.1 }))
}

fn on_segment(a: P2, b: P2, p: P2) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_meet_2d(a: P2, b: P2, c: P2, d: P2) -> bool {
    let (d1, d2, d3, d4) = (o2(a, b, c), o2(a, b, d), o2(c, d, a), o2(c, d, b));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(a, b, c))
        || (d2 == 0 && on_segment(a, b, d))
        || (d3 == 0 && on_segment(c, d, a))
        || (d4 == 0 && on_segment(c, d, b))
}

fn point_in_triangle_2d(p: P2, t: [P2; 3]) -> bool {
    let s = [o2(t[0], t[1], p), o2(t[1], t[2], p), o2(t[2], t[0], p)];
    !(s.iter().any(|&x| x > 0) && s.iter().any(|&x| x < 0))
}

/// Drops the coordinate along which the plane normal is largest.
fn projector(a: Vec3, b: Vec3, c: Vec3) -> impl Fn(Vec3) -> P2 {
    let n = (b - a).cross(c - a);
    let (ax, ay, az) = (n.x.abs(), n.y.abs(), n.z.abs());
    let drop = if ax >= ay && ax >= az {
        0
    } else if ay >= az {
        1
    } else {
        2
    };
    move |p: Vec3| match drop {
        0 => (p.y, p.z),
        1 => (p.z, p.x),
        _ => (p.x, p.y),
    }
}

fn coplanar_segment_triangle(s0: Vec3, s1: Vec3, t: [Vec3; 3]) -> bool {
    let pr = projector(t[0], t[1], t[2]);
    let tri = [pr(t[0]), pr(t[1]), pr(t[2])];
    let (a, b) = (pr(s0), pr(s1));
    point_in_triangle_2d(a, tri)
        || point_in_triangle_2d(b, tri)
        || (0..3).any(|k| segments_meet_2d(a, b, tri[k], tri[(k + 1) % 3]))
}

/// Closed segment vs closed triangle.
fn segment_hits_triangle(s0: Vec3, s1: Vec3, t: [Vec3; 3]) -> bool {
    let (d0, d1) = (sign(o3(t[0], t[1], t[2], s0)), sign(o3(t[0], t[1], t[2], s1)));
    if d0 == 0 && d1 == 0 {
        return coplanar_segment_triangle(s0, s1, t);
    }
    if d0 * d1 > 0 {
        return false;
    }
    let e = [sign(o3(s0, s1, t[0], t[1])), sign(o3(s0, s1, t[1], t[2])), sign(o3(s0, s1, t[2], t[0]))];
    !(e.iter().any(|&x| x > 0) && e.iter().any(|&x| x < 0))
}

/// Exact test for two closed triangles.
pub(crate) fn triangles_intersect(t: [Vec3; 3], u: [Vec3; 3]) -> bool {
    let du = [o3(t[0], t[1], t[2], u[0]), o3(t[0], t[1], t[2], u[1]), o3(t[0], t[1], t[2], u[2])].map(sign);
    if du.iter().all(|&s| s > 0) || du.iter().all(|&s| s < 0) {
        return false;
    }
    let dt = [o3(u[0], u[1], u[2], t[0]), o3(u[0], u[1], u[2], t[1]), o3(u[0], u[1], u[2], t[2])].map(sign);
    if dt.iter().all(|&s| s > 0) || dt.iter().all(|&s| s < 0) {
        return false;
    }
    if du.iter().all(|&s| s == 0) {
        let pr = projector(t[0], t[1], t[2]);
        let a = t.map(&pr);
        let b = u.map(&pr);
        return (0..3).any(|i| (0..3).any(|j| segments_meet_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3])))
            || point_in_triangle_2d(a[0], b)
            || point_in_triangle_2d(b[0], a);
    }
    (0..3).any(|k| segment_hits_triangle(t[k], t[(k + 1) % 3], u))
        || (0..3).any(|k| segment_hits_triangle(u[k], u[(k + 1) % 3], t))
}

/// Counts intersecting pairs among triangles that share no vertex, using a
/// uniform grid to prune candidates.
pub fn count_self_intersections(mesh: &TriangleMesh) -> usize {
    let n = mesh.triangle_count();
    if n < 2 {
        return 0;
    }
    let Ok(bounds) = mesh.bounding_box() else { return 0 };
    let boxes: Vec<BoundingBox> = (0..n)
        .map(|t| BoundingBox::from_points(mesh.corners(t)).expect("three corners"))
        .collect();
    let res = (libm::ceil(libm::cbrt(n as f64)) as usize).clamp(1, 64);
    let ext = bounds.extent();
    let cell_of = |p: Vec3| -> [usize; 3] {
        let mut c = [0usize; 3];
        for (i, ci) in c.iter_mut().enumerate() {
            let e = ext.axis(i);
            let f = if e > 0.0 { (p.axis(i) - bounds.min.axis(i)) / e } else { 0.0 };
            *ci = ((f * res as f64) as usize).min(res - 1);
        }
        c
    };
    let ranges: Vec<([usize; 3], [usize; 3])> = boxes.iter().map(|b| (cell_of(b.min), cell_of(b.max))).collect();
    let mut cells: Vec<Vec<u32>> = vec![Vec::new(); res * res * res];
    let flat = |c: [usize; 3]| (c[0] * res + c[1]) * res + c[2];
    for (t, (lo, hi)) in ranges.iter().enumerate() {
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    cells[flat([x, y, z])].push(t as u32);
                }
            }
        }
    }
    let overlap = |a: &BoundingBox, b: &BoundingBox| (0..3).all(|i| a.min.axis(i) <= b.max.axis(i) && b.min.axis(i) <= a.max.axis(i));
    let mut count = 0;
    for (ci, members) in cells.iter().enumerate() {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                let (i, j) = (i as usize, j as usize);
                // only test each pair in the first cell both occupy
                let first = [0, 1, 2].map(|a| ranges[i].0[a].max(ranges[j].0[a]));
                if flat(first) != ci || !overlap(&boxes[i], &boxes[j]) {
                    continue;
                }
                let (ti, tj) = (mesh.triangles[i], mesh.triangles[j]);
                if ti.iter().any(|v| tj.contains(v)) {
                    continue;
                }
                if triangles_intersect(mesh.corners(i), mesh.corners(j)) {
                    count += 1;
                }
            }
        }
    }
    count
}
