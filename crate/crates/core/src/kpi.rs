//! Result fields of a solve and the KPIs extracted from them.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::hydro::EquilibriumState;
use crate::mesh::weld::Welder;
use crate::mesh::{Polyline, TriangleMesh};
use crate::solver::DerivedParameters;

/// Allowed relative gap between the last force sample and the drag scalar.
pub const SERIES_CONSISTENCY: f64 = 0.01;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiSummary {
    pub total_drag: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub max_wave_height_on_hull: f64,
    pub wsa: f64,
    pub final_sink: f64,
    pub final_trim: f64,
}

impl KpiSummary {
    /// `(name, value, unit)` rows in table order.
    pub fn rows(&self) -> [(&'static str, f64, &'static str); 7] {
        [
            ("total_drag", self.total_drag, "N"),
            ("p_max", self.p_max, "Pa"),
            ("p_min", self.p_min, "Pa"),
            ("max_wave_height", self.max_wave_height_on_hull, "m"),
            ("wsa", self.wsa, "m2"),
            ("final_sink", self.final_sink, "m"),
            ("final_trim", self.final_trim, "deg"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub name: String,
    pub unit: String,
    pub samples: Vec<(f64, f64)>,
}

impl TimeSeries {
    pub fn is_strictly_increasing(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].0 < w[1].0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFieldOnMesh {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

/// Row-major: `z[j * x.len() + i]` is the elevation at `(x[i], y[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl ElevationGrid {
    pub fn is_well_formed(&self) -> bool {
        self.z.len() == self.x.len() * self.y.len() && self.z.iter().all(|v| v.is_finite())
    }
}

/// Everything a setup produces for post-processing. `mesh` is the hull at
/// its final attitude; per-triangle arrays are indexed like its triangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub kpis: KpiSummary,
    pub total_drag: f64,
    pub water_z: f64,
    pub cf: f64,
    pub re: f64,
    pub lwl: f64,
    pub equilibrium: EquilibriumState,
    pub derived: DerivedParameters,
    pub force_series: TimeSeries,
    pub sink_series: TimeSeries,
    pub trim_series: TimeSeries,
    pub mesh: TriangleMesh,
    pub pressure: ScalarFieldOnMesh,
    pub wetted_mask: Vec<f64>,
    pub elevation: ElevationGrid,
    pub waterline: Vec<Polyline>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KpiError {
    #[error("inconsistent results: {0}")]
    InconsistentResults(String),
}

fn inconsistent<T>(msg: String) -> Result<T, KpiError> {
    Err(KpiError::InconsistentResults(msg))
}

/// KPIs recomputed from the fields, cross-checked against the solver scalars.
pub fn extract_kpis(out: &SolveOutput) -> Result<KpiSummary, KpiError> {
    let n = out.mesh.triangle_count();
    if out.pressure.values.len() != n {
        return inconsistent(alloc::format!("pressure has {} values for {n} triangles", out.pressure.values.len()));
    }
    if out.wetted_mask.len() != n {
        return inconsistent(alloc::format!("wetted mask has {} values for {n} triangles", out.wetted_mask.len()));
    }
    for s in [&out.force_series, &out.sink_series, &out.trim_series] {
        if s.samples.is_empty() {
            return inconsistent(alloc::format!("{} series is empty", s.name));
        }
        if !s.is_strictly_increasing() {
            return inconsistent(alloc::format!("{} series time is not strictly increasing", s.name));
        }
    }
    let last = out.force_series.samples[out.force_series.samples.len() - 1].1;
    if !((last - out.total_drag).abs() <= SERIES_CONSISTENCY * out.total_drag.abs()) {
        return inconsistent(alloc::format!("last force sample {last} vs total drag {}", out.total_drag));
    }
    if !out.elevation.is_well_formed() {
        return inconsistent("elevation grid is not rectangular".into());
    }
    let mut wsa = 0.0;
    let (mut p_max, mut p_min) = (f64::NEG_INFINITY, f64::INFINITY);
    for (t, (&m, &p)) in out.wetted_mask.iter().zip(&out.pressure.values).enumerate() {
        if !(0.0..=1.0).contains(&m) {
            return inconsistent(alloc::format!("wetted fraction {m} on triangle {t}"));
        }
        if m > 0.0 {
            wsa += m * out.mesh.triangle_area(t);
            p_max = p_max.max(p);
            p_min = p_min.min(p);
        }
    }
    if p_max == f64::NEG_INFINITY {
        (p_max, p_min) = (0.0, 0.0);
    }
    let max_wave = out
        .waterline
        .iter()
        .flat_map(|pl| pl.points.iter())
        .map(|p| p.z - out.water_z)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(KpiSummary {
        total_drag: out.total_drag,
        p_max,
        p_min,
        max_wave_height_on_hull: if max_wave.is_finite() { max_wave } else { 0.0 },
        wsa,
        final_sink: out.equilibrium.sink,
        final_trim: out.equilibrium.trim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicePoint {
    pub s: f64,
    pub x: f64,
    pub z: f64,
    pub value: f64,
}

/// Field values along the cut of the hull by the plane `y = offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceCurve {
    pub offset: f64,
    pub points: Vec<SlicePoint>,
}

/// Default slice offsets: the hull centreline and a quarter beam either side.
pub fn default_slice_offsets(mesh: &TriangleMesh) -> Vec<f64> {
    match mesh.bounding_box() {
        Ok(b) => {
            let (c, q) = (b.center().y, b.extent().y / 4.0);
            alloc::vec![c - q, c, c + q]
        }
        Err(_) => Vec::new(),
    }
}

fn cut_triangle(c: [Vec3; 3], y: f64) -> Option<(Vec3, Vec3)> {
    let mut pts: Vec<Vec3> = Vec::with_capacity(3);
    for i in 0..3 {
        let (a, b) = (c[i], c[(i + 1) % 3]);
        let (da, db) = (a.y - y, b.y - y);
        if da == 0.0 {
            pts.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            let t = da / (da - db);
            pts.push(Vec3::new(a.x + (b.x - a.x) * t, y, a.z + (b.z - a.z) * t));
        }
    }
    match pts.as_slice() {
        [a, b] if a != b => Some((*a, *b)),
        // a triangle lying in the plane or touching it at one point adds nothing
        _ => None,
    }
}

/// Slices the field over triangles where `include` holds (typically the
/// wetted ones). Each crossed triangle contributes one segment carrying its
/// value; segments are chained and each chain runs towards increasing x.
/// A plane missing the hull gives an empty curve and a warning.
pub fn pressure_slices(
    mesh: &TriangleMesh,
    values: &[f64],
    include: impl Fn(usize) -> bool,
    offsets: &[f64],
) -> (Vec<SliceCurve>, Vec<String>) {
    let mut curves = Vec::new();
    let mut warnings = Vec::new();
    for &y in offsets {
        let mut welder = Welder::new(mesh.weld_tolerance());
        let mut segs: Vec<(u32, u32, f64)> = Vec::new();
        for t in 0..mesh.triangle_count() {
            if !include(t) {
                continue;
            }
            if let Some((a, b)) = cut_triangle(mesh.corners(t), y) {
                let (ia, ib) = (welder.insert(a), welder.insert(b));
                if ia != ib {
                    segs.push((ia, ib, values[t]));
                }
            }
        }
        if segs.is_empty() {
            warnings.push(alloc::format!("EMPTY_SLICE: plane y={y} does not cross the hull"));
        }
        let chains = chain(&segs, &welder.points);
        let mut points = Vec::new();
        let mut s = 0.0;
        for ch in chains {
            for (a, b, v) in ch {
                let (pa, pb) = (welder.points[a as usize], welder.points[b as usize]);
                points.push(SlicePoint { s, x: pa.x, z: pa.z, value: v });
                s += libm::hypot(pb.x - pa.x, pb.z - pa.z);
                points.push(SlicePoint { s, x: pb.x, z: pb.z, value: v });
            }
        }
        curves.push(SliceCurve { offset: y, points });
    }
    (curves, warnings)
}

/// Orders segments into chains; each chain starts at its lowest-x free end
/// (or lowest-x point for loops). Chains are ordered by starting x.
fn chain(segs: &[(u32, u32, f64)], pts: &[Vec3]) -> Vec<Vec<(u32, u32, f64)>> {
    let mut adj: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (k, &(a, b, _)) in segs.iter().enumerate() {
        adj.entry(a).or_default().push(k);
        adj.entry(b).or_default().push(k);
    }
    let key = |i: u32| (pts[i as usize].x, pts[i as usize].z);
    let mut nodes: Vec<u32> = adj.keys().copied().collect();
    nodes.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
    });
    // free ends first, then anything left over (closed loops)
    let mut starts: Vec<u32> = nodes.iter().copied().filter(|n| adj[n].len() % 2 == 1).collect();
    starts.extend(nodes.iter().copied());
    let mut used = alloc::vec![false; segs.len()];
    let mut out = Vec::new();
    for start in starts {
        let mut cur = start;
        let mut ch = Vec::new();
        loop {
            // prefer the continuation heading towards larger x
            let next = adj[&cur]
                .iter()
                .copied()
                .filter(|&k| !used[k])
                .max_by(|&p, &q| {
                    let o = |k: usize| if segs[k].0 == cur { segs[k].1 } else { segs[k].0 };
                    key(o(p)).0.total_cmp(&key(o(q)).0).then(q.cmp(&p))
                });
            let Some(k) = next else { break };
            used[k] = true;
            let (a, b, v) = segs[k];
            let to = if a == cur { b } else { a };
            ch.push((cur, to, v));
            cur = to;
        }
        if !ch.is_empty() {
            out.push(ch);
        }
    }
    out
}
