use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::geom::Vec3;

/// Spatial hash that merges points closer than `tol`. Representatives are
/// the first point seen, so welded positions are bit-identical to input.
pub(crate) struct Welder {
    tol_sq: f64,
    inv_cell: f64,
    cells: BTreeMap<(i64, i64, i64), Vec<u32>>,
    pub points: Vec<Vec3>,
}

impl Welder {
    pub fn new(tol: f64) -> Self {
        // A zero diagonal means every point coincides; any positive cell works.
        let tol = if tol > 0.0 && tol.is_finite() { tol } else { 1.0 };
        Self { tol_sq: tol * tol, inv_cell: 1.0 / tol, cells: BTreeMap::new(), points: Vec::new() }
    }

    fn key(&self, p: Vec3) -> (i64, i64, i64) {
        let q = |c: f64| libm::floor(c * self.inv_cell) as i64;
        (q(p.x), q(p.y), q(p.z))
    }

    /// Index of the existing point within tolerance of `p`, if any.
    pub fn find(&self, p: Vec3) -> Option<u32> {
        let (kx, ky, kz) = self.key(p);
        let mut best: Option<(f64, u32)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &id in ids {
                            let d = (self.points[id as usize] - p).norm_squared();
                            if d <= self.tol_sq && best.map_or(true, |(bd, bid)| d < bd || (d == bd && id < bid)) {
                                best = Some((d, id));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(_, id)| id)
    }

    pub fn insert(&mut self, p: Vec3) -> u32 {
        if let Some(id) = self.find(p) {
            return id;
        }
        let id = self.points.len() as u32;
        self.points.push(p);
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
        id
    }
}
