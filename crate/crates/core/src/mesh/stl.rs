use alloc::vec::Vec;

use super::TriangleMesh;

const HEADER: &[u8] = b"vtank binary STL";

/// Serialises to little-endian binary STL. Facet normals are recomputed
/// from the winding; coordinates are narrowed to `f32`.
pub fn write_binary_stl(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangle_count());
    let mut header = [0u8; 80];
    header[..HEADER.len()].copy_from_slice(HEADER);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangle_count() as u32).to_le_bytes());
    for t in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.corners(t);
        let n = (b - a).cross(c - a);
        let len = n.norm();
        let n = if len > 0.0 { n / len } else { n };
        for v in [n, a, b, c] {
            for x in v.to_array() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}
