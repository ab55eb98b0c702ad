//! Raw solver fields exchanged between a setup's `run` step and
//! post-processing. Numbers use shortest round-trip text so post-processing
//! sees exactly what the solver computed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vtank_core::hydro::EquilibriumState;
use vtank_core::kpi::{ElevationGrid, KpiSummary, ScalarFieldOnMesh, SolveOutput, TimeSeries};
use vtank_core::mesh::{Polyline, SourceFormat, TriangleMesh};
use vtank_core::solver::DerivedParameters;
use vtank_core::Vec3;

use crate::error::{Error, Result};
use crate::results::Table;

pub const PRESSURE_VTK: &str = "fields/pressure.vtk";
pub const WETTED_CSV: &str = "fields/wetted.csv";
pub const FORCES_CSV: &str = "fields/forces.csv";
pub const MOTION_CSV: &str = "fields/motion.csv";
pub const ELEVATION_CSV: &str = "fields/elevation.csv";
pub const WATERLINE_CSV: &str = "fields/waterline.csv";
pub const SOLVER_JSON: &str = "fields/solver.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverScalars {
    pub total_drag: f64,
    pub water_z: f64,
    pub cf: f64,
    pub re: f64,
    pub lwl: f64,
    pub equilibrium: EquilibriumState,
    pub derived: DerivedParameters,
    pub warnings: Vec<String>,
}

fn bad(file: &str, msg: impl std::fmt::Display) -> Error {
    Error::validation(format!("{file}: {msg}"))
}

pub fn write_vtk(mesh: &TriangleMesh, field: &ScalarFieldOnMesh) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nvtank hull pressure\nASCII\nDATASET POLYDATA\n");
    let _ = writeln!(s, "POINTS {} double", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    let n = mesh.triangles.len();
    let _ = writeln!(s, "POLYGONS {} {}", n, 4 * n);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_DATA {n}");
    let _ = writeln!(s, "SCALARS {} double 1", field.name);
    s.push_str("LOOKUP_TABLE default\n");
    for v in &field.values {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn read_vtk(text: &str) -> Result<(TriangleMesh, ScalarFieldOnMesh)> {
    let f = PRESSURE_VTK;
    let mut tokens = text.lines().skip(4).flat_map(str::split_whitespace);
    let mut next = |what: &str| tokens.next().ok_or_else(|| bad(f, format!("truncated before {what}")));
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(f, e));
    let int = |s: &str| s.parse::<usize>().map_err(|e| bad(f, e));
    if next("POINTS")? != "POINTS" {
        return Err(bad(f, "expected POINTS"));
    }
    let np = int(next("point count")?)?;
    next("point type")?;
    let mut vertices = Vec::with_capacity(np);
    for _ in 0..np {
        vertices.push(Vec3::new(num(next("x")?)?, num(next("y")?)?, num(next("z")?)?));
    }
    if next("POLYGONS")? != "POLYGONS" {
        return Err(bad(f, "expected POLYGONS"));
    }
    let nt = int(next("polygon count")?)?;
    next("polygon size")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        if next("polygon")? != "3" {
            return Err(bad(f, "only triangles are supported"));
        }
        let mut t = [0u32; 3];
        for c in &mut t {
            *c = int(next("index")?)? as u32;
        }
        triangles.push(t);
    }
    if next("CELL_DATA")? != "CELL_DATA" || int(next("cell count")?)? != nt {
        return Err(bad(f, "expected CELL_DATA matching the polygon count"));
    }
    next("SCALARS")?;
    let name = next("scalar name")?.to_string();
    next("scalar type")?;
    next("components")?;
    next("LOOKUP_TABLE")?;
    next("table name")?;
    let mut values = Vec::with_capacity(nt);
    for _ in 0..nt {
        values.push(num(next("value")?)?);
    }
    let mesh = TriangleMesh::from_parts(vertices, triangles, SourceFormat::StlBinary).map_err(|e| bad(f, e))?;
    Ok((mesh, ScalarFieldOnMesh { name, unit: "Pa".into(), values }))
}

fn raw_series(series: &[&TimeSeries]) -> Table {
    let mut h = vec!["t"];
    h.extend(series.iter().map(|s| s.name.as_str()));
    let mut t = Table::new(&h);
    for i in 0..series[0].samples.len() {
        let mut row = vec![series[0].samples[i].0.to_string()];
        row.extend(series.iter().map(|s| s.samples[i].1.to_string()));
        t.push(row);
    }
    t
}

/// Writes the fields of `out` under `workdir/fields/`.
pub fn write_fields(workdir: &Path, out: &SolveOutput) -> Result<()> {
    fs::create_dir_all(workdir.join("fields"))?;
    fs::write(workdir.join(PRESSURE_VTK), write_vtk(&out.mesh, &out.pressure))?;
    let mut w = Table::new(&["triangle", "fraction"]);
    for (i, m) in out.wetted_mask.iter().enumerate() {
        w.push(vec![i.to_string(), m.to_string()]);
    }
    fs::write(workdir.join(WETTED_CSV), w.to_text())?;
    fs::write(workdir.join(FORCES_CSV), raw_series(&[&out.force_series]).to_text())?;
    fs::write(workdir.join(MOTION_CSV), raw_series(&[&out.sink_series, &out.trim_series]).to_text())?;
    let mut e = Table::new(&["x", "y", "z"]);
    for (j, y) in out.elevation.y.iter().enumerate() {
        for (i, x) in out.elevation.x.iter().enumerate() {
            e.push(vec![x.to_string(), y.to_string(), out.elevation.z[j * out.elevation.x.len() + i].to_string()]);
        }
    }
    fs::write(workdir.join(ELEVATION_CSV), e.to_text())?;
    let mut wl = Table::new(&["loop", "closed", "x", "y", "z"]);
    for (k, l) in out.waterline.iter().enumerate() {
        for p in &l.points {
            wl.push(vec![k.to_string(), u8::from(l.closed).to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()]);
        }
    }
    fs::write(workdir.join(WATERLINE_CSV), wl.to_text())?;
    let scalars = SolverScalars {
        total_drag: out.total_drag,
        water_z: out.water_z,
        cf: out.cf,
        re: out.re,
        lwl: out.lwl,
        equilibrium: out.equilibrium,
        derived: out.derived.clone(),
        warnings: out.warnings.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&scalars)?;
    json.push(b'\n');
    fs::write(workdir.join(SOLVER_JSON), json)?;
    Ok(())
}

fn read(workdir: &Path, rel: &str) -> Result<String> {
    let text = fs::read_to_string(workdir.join(rel)).map_err(|e| bad(rel, e))?;
    if text.trim().is_empty() {
        return Err(bad(rel, "file is empty"));
    }
    Ok(text)
}

fn read_series(workdir: &Path, rel: &str, units: &[&str]) -> Result<Vec<TimeSeries>> {
    let t = Table::parse(&read(workdir, rel)?).map_err(|e| bad(rel, e))?;
    let time = t.numbers(0).map_err(|e| bad(rel, e))?;
    let mut out = Vec::new();
    for (c, unit) in (1..t.header.len()).zip(units) {
        let vals = t.numbers(c).map_err(|e| bad(rel, e))?;
        out.push(TimeSeries {
            name: t.header[c].clone(),
            unit: unit.to_string(),
            samples: time.iter().copied().zip(vals).collect(),
        });
    }
    if out.len() != units.len() {
        return Err(bad(rel, "missing columns"));
    }
    Ok(out)
}

/// Reads back what [`write_fields`] wrote; KPIs are left at default for the
/// caller to extract.
pub fn read_fields(workdir: &Path) -> Result<SolveOutput> {
    let (mesh, pressure) = read_vtk(&read(workdir, PRESSURE_VTK)?)?;
    let wt = Table::parse(&read(workdir, WETTED_CSV)?)?;
    let wetted_mask = wt.numbers(wt.column("fraction")?)?;
    let force = read_series(workdir, FORCES_CSV, &["N"])?.remove(0);
    let mut motion = read_series(workdir, MOTION_CSV, &["m", "deg"])?;
    let trim_series = motion.pop().expect("two motion columns");
    let sink_series = motion.pop().expect("two motion columns");
    let et = Table::parse(&read(workdir, ELEVATION_CSV)?)?;
    let (ex, ey, ez) = (et.numbers(0)?, et.numbers(1)?, et.numbers(2)?);
    let nx = ey.iter().take_while(|y| **y == ey[0]).count();
    if nx == 0 || ez.len() % nx != 0 {
        return Err(bad(ELEVATION_CSV, "grid is not rectangular"));
    }
    let elevation = ElevationGrid { x: ex[..nx].to_vec(), y: ey.iter().step_by(nx).copied().collect(), z: ez };
    let lt = Table::parse(&read(workdir, WATERLINE_CSV)?)?;
    let mut waterline: Vec<Polyline> = Vec::new();
    let mut last_loop = None;
    for r in &lt.rows {
        let num = |s: &String| s.parse::<f64>().map_err(|e| bad(WATERLINE_CSV, e));
        let p = Vec3::new(num(&r[2])?, num(&r[3])?, num(&r[4])?);
        if last_loop.as_ref() != Some(&r[0]) {
            waterline.push(Polyline { points: Vec::new(), closed: r[1] == "1" });
            last_loop = Some(r[0].clone());
        }
        waterline.last_mut().expect("pushed above").points.push(p);
    }
    let s: SolverScalars = serde_json::from_str(&read(workdir, SOLVER_JSON)?).map_err(|e| bad(SOLVER_JSON, e))?;
    Ok(SolveOutput {
        kpis: KpiSummary::default(),
        total_drag: s.total_drag,
        water_z: s.water_z,
        cf: s.cf,
        re: s.re,
        lwl: s.lwl,
        equilibrium: s.equilibrium,
        derived: s.derived,
        force_series: force,
        sink_series,
        trim_series,
        mesh,
        pressure,
        wetted_mask,
        elevation,
        waterline,
        warnings: s.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use vtank_core::mesh::{shapes, WatertightMesh};
    use vtank_core::{DofMode, PhysicalParameters};

    #[test]
    fn fields_round_trip_exactly() {
        let mesh = WatertightMesh::new(shapes::unit_cube()).unwrap();
        let p = PhysicalParameters {
            mass: 400.0,
            cog: Vec3::new(0.5, 0.5, 0.4),
            velocity: 2.0,
            water_temperature: 15.0,
            inertia_diag: [1.0; 3],
            water_z: 0.5,
            wave_height: 0.1,
            trim_angle: 0.0,
        };
        let out = vtank_core::solver::solve(&mesh, &p, DofMode::SinkTrim2Dof).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_fields(dir.path(), &out).unwrap();
        let mut back = read_fields(dir.path()).unwrap();
        back.kpis = vtank_core::kpi::extract_kpis(&back).unwrap();
        assert_eq!(back.kpis, out.kpis);
        assert_eq!(back.pressure.values, out.pressure.values);
        assert_eq!(back.mesh.vertices, out.mesh.vertices);
        assert_eq!(back.elevation, out.elevation);
        assert_eq!(back.waterline, out.waterline);
    }
}
