//! Reference calm-water solver: equilibrium attitude, flat-plate friction
//! drag with a fixed form factor, a hydrostatic + stagnation pressure field
//! and a decorative wave pattern.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fluid::{fluid_properties, Fluid, OutOfRange};
use crate::geom::{BoundingBox, Vec3};
use crate::hydro::{equilibrium, EquilibriumState, HydroError};
use crate::kpi::{extract_kpis, ElevationGrid, KpiError, KpiSummary, ScalarFieldOnMesh, SolveOutput, TimeSeries};
use crate::mesh::{clip_below_plane, ClipResult, Polyline, TriangleMesh, WatertightMesh};
use crate::params::{DofMode, PhysicalParameters};
use crate::GRAVITY;

pub const FORM_FACTOR: f64 = 0.2;
pub const TIME_SAMPLES: usize = 200;
/// Series span in units of τ.
pub const SERIES_SPAN: f64 = 10.0;
pub const ELEVATION_NX: usize = 61;
pub const ELEVATION_NY: usize = 31;
/// Below this the friction line is singular or meaningless.
pub const MIN_REYNOLDS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParameters {
    pub lwl: f64,
    pub domain_box: BoundingBox,
    pub re: f64,
    pub fr: f64,
    pub rho: f64,
    pub nu: f64,
    pub wetted_area_init: f64,
}

impl DerivedParameters {
    /// `(name, value)` pairs in file order.
    pub fn entries(&self) -> [(&'static str, f64); 13] {
        let b = &self.domain_box;
        [
            ("lwl", self.lwl),
            ("re", self.re),
            ("fr", self.fr),
            ("rho", self.rho),
            ("nu", self.nu),
            ("wetted_area_init", self.wetted_area_init),
            ("domain_xmin", b.min.x),
            ("domain_ymin", b.min.y),
            ("domain_zmin", b.min.z),
            ("domain_xmax", b.max.x),
            ("domain_ymax", b.max.y),
            ("domain_zmax", b.max.z),
            ("g", GRAVITY),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error("water temperature {} °C outside (0, 100)", .0 .0)]
    Fluid(#[from] OutOfRange),
    #[error("Reynolds number {0} too low for the friction line (needs > {MIN_REYNOLDS})")]
    ReynoldsOutOfRange(f64),
    #[error(transparent)]
    Kpi(#[from] KpiError),
}

/// Length of the wetted part along x; `None` when dry.
fn wetted_length(clip: &ClipResult) -> Option<f64> {
    let b = BoundingBox::from_points(clip.wetted_triangles.iter().flat_map(|p| p.polygon.iter().copied()))?;
    Some(b.extent().x)
}

pub struct Parametrized {
    pub derived: DerivedParameters,
    pub warnings: Vec<String>,
}

/// Derived run parameters at the initial attitude.
pub fn parametrize(mesh: &WatertightMesh, params: &PhysicalParameters) -> Result<Parametrized, SolverError> {
    let fluid = fluid_properties(params.water_temperature)?;
    Ok(parametrize_with(mesh, params, fluid))
}

pub fn parametrize_with(mesh: &WatertightMesh, params: &PhysicalParameters, fluid: Fluid) -> Parametrized {
    let bbox = mesh.bounding_box().expect("validated meshes are non-empty");
    let clip = clip_below_plane(mesh, params.water_z, 0.0, params.trim_angle, params.cog);
    let mut warnings = Vec::new();
    let lwl = match wetted_length(&clip) {
        Some(l) if l > 0.0 => l,
        _ => {
            warnings.push(alloc::format!(
                "DRY_HULL: water_z {} does not reach the hull; using bounding-box length",
                params.water_z
            ));
            bbox.extent().x
        }
    };
    let v = params.velocity;
    let domain_box = BoundingBox {
        min: bbox.min - Vec3::new(4.0 * lwl, 1.5 * lwl, lwl),
        max: bbox.max + Vec3::new(2.0 * lwl, 1.5 * lwl, lwl),
    };
    Parametrized {
        derived: DerivedParameters {
            lwl,
            domain_box,
            re: v * lwl / fluid.nu,
            fr: v / libm::sqrt(GRAVITY * lwl),
            rho: fluid.rho,
            nu: fluid.nu,
            wetted_area_init: clip.wetted_area,
        },
        warnings,
    }
}

/// ITTC-1957 friction line.
pub fn friction_coefficient(re: f64) -> Result<f64, SolverError> {
    if !(re > MIN_REYNOLDS) || !re.is_finite() {
        return Err(SolverError::ReynoldsOutOfRange(re));
    }
    let d = libm::log10(re) - 2.0;
    Ok(0.075 / (d * d))
}

pub fn total_drag(rho: f64, velocity: f64, wsa: f64, cf: f64) -> f64 {
    0.5 * rho * velocity * velocity * wsa * cf * (1.0 + FORM_FACTOR)
}

fn polygon_centroid(poly: &[Vec3]) -> Vec3 {
    let mut area = 0.0;
    let mut acc = Vec3::ZERO;
    for i in 1..poly.len() - 1 {
        let a = (poly[i] - poly[0]).cross(poly[i + 1] - poly[0]).norm();
        acc += (poly[0] + poly[i] + poly[i + 1]) * (a / 3.0);
        area += a;
    }
    if area > 0.0 {
        acc / area
    } else {
        poly.iter().fold(Vec3::ZERO, |s, p| s + *p) / poly.len() as f64
    }
}

/// Decorative Kelvin-like transverse wave, zero far from the hull.
#[derive(Debug, Clone, Copy)]
struct WavePattern {
    amplitude: f64,
    k: f64,
    x_bow: f64,
    y_c: f64,
    lwl: f64,
}

impl WavePattern {
    fn eta(&self, x: f64, y: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let d = self.x_bow - x;
        let dy = (y - self.y_c) / self.lwl;
        let decay = if d >= 0.0 { libm::exp(-d / (4.0 * self.lwl)) } else { libm::exp(-(d * d) / (0.01 * self.lwl * self.lwl)) };
        self.amplitude * libm::cos(self.k * d) * decay * libm::exp(-dy * dy)
    }
}

fn series(name: &str, unit: &str, tau: f64, f: impl Fn(f64) -> f64) -> TimeSeries {
    let dt = SERIES_SPAN * tau / TIME_SAMPLES as f64;
    TimeSeries {
        name: name.into(),
        unit: unit.into(),
        samples: (0..TIME_SAMPLES).map(|i| {
            let t = (i + 1) as f64 * dt;
            (t, f(t))
        }).collect(),
    }
}

/// Full solve with fluid properties from the water temperature.
pub fn solve(mesh: &WatertightMesh, params: &PhysicalParameters, dof: DofMode) -> Result<SolveOutput, SolverError> {
    let fluid = fluid_properties(params.water_temperature)?;
    solve_with(mesh, params, dof, fluid)
}

pub fn solve_with(mesh: &WatertightMesh, params: &PhysicalParameters, dof: DofMode, fluid: Fluid) -> Result<SolveOutput, SolverError> {
    let pre = parametrize_with(mesh, params, fluid);
    let mut warnings = pre.warnings;
    let eq: EquilibriumState = equilibrium(mesh, params, fluid, dof)?;
    let w = params.water_z;
    let clip = clip_below_plane(mesh, w, eq.sink, eq.trim, params.cog);
    let bbox = mesh.bounding_box().expect("validated meshes are non-empty");
    let lwl = wetted_length(&clip).filter(|l| *l > 0.0).unwrap_or(bbox.extent().x);
    let v = params.velocity;
    let rho = fluid.rho;
    let re = v * lwl / fluid.nu;
    let wsa = clip.wetted_area;
    let (cf, drag) = if v == 0.0 || wsa == 0.0 {
        (0.0, 0.0)
    } else {
        let cf = friction_coefficient(re)?;
        (cf, total_drag(rho, v, wsa, cf))
    };

    let x_bow = clip
        .wetted_triangles
        .iter()
        .flat_map(|p| p.polygon.iter().map(|q| q.x))
        .fold(f64::NEG_INFINITY, f64::max);
    let q = 0.5 * rho * v * v;
    let mut pressure = alloc::vec![0.0; mesh.triangle_count()];
    for piece in &clip.wetted_triangles {
        let c = polygon_centroid(&piece.polygon);
        let hydro = rho * GRAVITY * (w - c.z).max(0.0);
        let xi = (c.x - x_bow) / (0.1 * lwl);
        pressure[piece.triangle] = hydro + q * libm::exp(-xi * xi);
    }

    let tau = if v > 0.0 { lwl / v } else { 1.0 };
    let force_series = series("total_drag", "N", tau, |t| drag * (1.0 - libm::exp(-t / tau)));
    let (s_eq, t_eq, t0) = (eq.sink, eq.trim, if dof == DofMode::Captive0Dof { eq.trim } else { params.trim_angle });
    let relax = |t: f64| 1.0 - libm::exp(-t / tau);
    let sink_series = series("sink", "m", tau, |t| s_eq * relax(t));
    let trim_series = series("trim", "deg", tau, |t| t0 + (t_eq - t0) * relax(t));

    let hull_box = BoundingBox::from_points(clip.transformed_vertices.iter().copied()).unwrap_or(bbox);
    let wave = WavePattern {
        amplitude: if v > 0.0 { params.wave_height.min(0.05 * lwl) } else { 0.0 },
        k: if v > 0.0 { GRAVITY / (v * v) } else { 0.0 },
        x_bow: if x_bow.is_finite() { x_bow } else { hull_box.max.x },
        y_c: hull_box.center().y,
        lwl,
    };
    let dom = &pre.derived.domain_box;
    let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
    };
    let xs = axis(dom.min.x, dom.max.x, ELEVATION_NX);
    let ys = axis(dom.min.y, dom.max.y, ELEVATION_NY);
    let mut zs = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            zs.push(w + wave.eta(x, y));
        }
    }
    let waterline: Vec<Polyline> = clip
        .waterline_contour
        .iter()
        .map(|pl| Polyline {
            points: pl.points.iter().map(|p| Vec3::new(p.x, p.y, w + wave.eta(p.x, p.y))).collect(),
            closed: pl.closed,
        })
        .collect();
    warnings.extend(clip.messages.iter().cloned());
    if wsa == 0.0 {
        warnings.push(String::from("DRY_HULL: no wetted surface at the final attitude"));
    }

    let moved = TriangleMesh {
        vertices: clip.transformed_vertices.clone(),
        triangles: mesh.triangles.clone(),
        source_format: mesh.source_format,
        collapsed_facets: 0,
    };
    let mut out = SolveOutput {
        kpis: KpiSummary::default(),
        total_drag: drag,
        water_z: w,
        cf,
        re,
        lwl,
        equilibrium: eq,
        derived: pre.derived,
        force_series,
        sink_series,
        trim_series,
        mesh: moved,
        pressure: ScalarFieldOnMesh { name: "p".into(), unit: "Pa".into(), values: pressure },
        wetted_mask: clip.wetted_fraction.clone(),
        elevation: ElevationGrid { x: xs, y: ys, z: zs },
        waterline,
        warnings,
    };
    out.kpis = extract_kpis(&out)?;
    Ok(out)
}
