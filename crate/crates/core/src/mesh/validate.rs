use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{count_self_intersections, TriangleMesh, DEGENERATE_RELATIVE_AREA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_valid: bool,
    pub triangle_count: usize,
    pub boundary_edge_count: usize,
    pub nonmanifold_edge_count: usize,
    pub degenerate_triangle_count: usize,
    pub component_count: usize,
    pub orientation_consistent: bool,
    pub signed_volume: f64,
    /// Pairs of non-adjacent triangles that intersect. Reported, never fatal.
    pub self_intersection_count: usize,
    pub distinct_edge_count: usize,
    pub messages: Vec<String>,
}

#[derive(Default, Clone, Copy)]
struct EdgeUse {
    count: u32,
    /// Traversals low→high index.
    forward: u32,
}

/// Edge census, orientation, connectivity and volume of a welded mesh.
pub fn validate(mesh: &TriangleMesh) -> ValidationReport {
    let mut edges: BTreeMap<(u32, u32), EdgeUse> = BTreeMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let e = edges.entry((a.min(b), a.max(b))).or_default();
            e.count += 1;
            if a < b {
                e.forward += 1;
            }
        }
    }
    let mut boundary = 0;
    let mut nonmanifold = 0;
    let mut misoriented = 0;
    for e in edges.values() {
        match e.count {
            1 => boundary += 1,
            2 if e.forward != 1 => misoriented += 1,
            2 => {}
            _ => nonmanifold += 1,
        }
    }

    let component_count = components(mesh);

    let diag = mesh.bounding_box().map_or(0.0, |b| b.diagonal());
    let area_floor = diag * diag * DEGENERATE_RELATIVE_AREA;
    let thin = (0..mesh.triangle_count()).filter(|&t| mesh.triangle_area(t) < area_floor).count();
    let degenerate = thin + mesh.collapsed_facets;

    let signed_volume = mesh.signed_volume();
    let self_intersections = count_self_intersections(mesh);
    let orientation_consistent = misoriented == 0;

    let mut messages = Vec::new();
    if mesh.triangles.is_empty() {
        messages.push("mesh has no triangles".into());
    }
    if boundary > 0 {
        messages.push(format!("{boundary} open (boundary) edges: the surface is not watertight"));
    }
    if nonmanifold > 0 {
        messages.push(format!("{nonmanifold} edges shared by more than two triangles"));
    }
    if degenerate > 0 {
        messages.push(format!("{degenerate} degenerate (zero-area) triangles"));
    }
    if component_count > 1 {
        messages.push(format!("{component_count} disconnected shells; a single closed volume is required"));
    }
    if !orientation_consistent {
        messages.push(format!("{misoriented} edges with inconsistent winding; align all normals outward"));
    }
    if orientation_consistent && boundary == 0 && signed_volume <= 0.0 {
        messages.push("normals point inward (negative enclosed volume); flip the surface so normals point outward".into());
    }
    if self_intersections > 0 {
        messages.push(format!("warning: {self_intersections} intersecting triangle pairs"));
    }

    let is_valid = boundary == 0
        && nonmanifold == 0
        && degenerate == 0
        && component_count == 1
        && orientation_consistent
        && signed_volume > 0.0;

    ValidationReport {
        is_valid,
        triangle_count: mesh.triangle_count(),
        boundary_edge_count: boundary,
        nonmanifold_edge_count: nonmanifold,
        degenerate_triangle_count: degenerate,
        component_count,
        orientation_consistent,
        signed_volume,
        self_intersection_count: self_intersections,
        distinct_edge_count: edges.len(),
        messages,
    }
}

fn components(mesh: &TriangleMesh) -> usize {
    let n = mesh.triangle_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut first_on_edge: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (i, t) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            match first_on_edge.get(&(a.min(b), a.max(b))) {
                Some(&j) => {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri] = rj;
                    }
                }
                None => {
                    first_on_edge.insert((a.min(b), a.max(b)), i);
                }
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    #[test]
    fn unit_cube_is_valid() {
        let r = validate(&shapes::unit_cube());
        assert!(r.is_valid, "{:?}", r.messages);
        assert!((r.signed_volume - 1.0).abs() < 1e-15);
        assert_eq!(r.component_count, 1);
        assert_eq!(r.distinct_edge_count, 18);
    }

    #[test]
    fn open_box_has_four_boundary_edges() {
        let mut m = shapes::unit_cube();
        m.triangles.drain(2..4); // top face
        let r = validate(&m);
        assert!(!r.is_valid);
        assert_eq!(r.boundary_edge_count, 4);
    }

    #[test]
    fn flipped_triangle_breaks_orientation() {
        let mut m = shapes::unit_cube();
        m.triangles[5].swap(1, 2);
        let r = validate(&m);
        assert!(!r.orientation_consistent);
        assert!(!r.is_valid);
    }

    #[test]
    fn inside_out_cube_rejected() {
        let mut m = shapes::unit_cube();
        for t in &mut m.triangles {
            t.swap(1, 2);
        }
        let r = validate(&m);
        assert!(r.orientation_consistent);
        assert!(r.signed_volume < 0.0);
        assert!(!r.is_valid);
        assert!(r.messages.iter().any(|m| m.contains("inward")));
    }

    #[test]
    fn two_shells_are_two_components() {
        let a = shapes::unit_cube();
        let b = a.translated(crate::Vec3::new(3.0, 0.0, 0.0));
        let r = validate(&shapes::union(&[a, b]));
        assert_eq!(r.component_count, 2);
        assert!(!r.is_valid);
    }
}
