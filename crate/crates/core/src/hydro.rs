//! Static equilibrium of a floating hull: free sink (1-DoF) and free sink +
//! trim (2-DoF), both by bisection.

use serde::{Deserialize, Serialize};

use crate::fluid::Fluid;
use crate::geom::{Attitude, Vec3};
use crate::mesh::{clip_below_plane, displaced_volume, hydrostatic_loads, WatertightMesh};
use crate::params::{DofMode, PhysicalParameters};
use crate::GRAVITY;

pub const MAX_BISECTIONS: u32 = 200;
pub const TRIM_LIMIT_DEG: f64 = 15.0;
/// Force tolerance relative to the weight.
pub const FORCE_TOLERANCE: f64 = 1e-6;
/// Moment tolerance relative to weight × hull length.
pub const MOMENT_TOLERANCE: f64 = 1e-6;
/// Bisection keeps refining until the residual drops this far below the
/// acceptance tolerance (or the bracket is exhausted).
const REFINE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub sink: f64,
    pub trim: f64,
    pub converged: bool,
    pub iterations: u32,
    /// Buoyancy minus weight, N.
    pub residual_force: f64,
    /// Hydrostatic pitch moment about the CoG, N·m.
    pub residual_moment: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HydroError {
    #[error("insufficient buoyancy: mass {mass} kg exceeds displaced mass {capacity} kg of the fully submerged hull")]
    InsufficientBuoyancy { mass: f64, capacity: f64 },
    #[error("no convergence after {0} bisections")]
    NoConvergence(u32),
    #[error("pitch moment does not change sign within ±{TRIM_LIMIT_DEG}°")]
    TrimRangeExceeded,
    #[error("mass must be > 0")]
    NonPositiveMass,
}

/// Hydrostatic problem for one hull and loading condition.
#[derive(Debug, Clone, Copy)]
pub struct Loading {
    pub mass: f64,
    pub cog: Vec3,
    pub water_z: f64,
    pub rho: f64,
}

impl Loading {
    pub fn new(params: &PhysicalParameters, fluid: Fluid) -> Self {
        Self { mass: params.mass, cog: params.cog, water_z: params.water_z, rho: fluid.rho }
    }

    fn weight(&self) -> f64 {
        self.mass * GRAVITY
    }

    pub fn force_tolerance(&self) -> f64 {
        FORCE_TOLERANCE * self.weight()
    }

    fn check(&self, mesh: &WatertightMesh) -> Result<(), HydroError> {
        if !(self.mass > 0.0) {
            return Err(HydroError::NonPositiveMass);
        }
        let capacity = self.rho * mesh.report().signed_volume;
        if self.mass > capacity {
            return Err(HydroError::InsufficientBuoyancy { mass: self.mass, capacity });
        }
        Ok(())
    }

    /// Buoyancy minus weight at the given attitude.
    pub fn net_force(&self, mesh: &WatertightMesh, sink: f64, trim: f64) -> f64 {
        let v = displaced_volume(mesh, self.water_z, &Attitude::new(sink, trim, self.cog));
        (self.rho * v - self.mass) * GRAVITY
    }

    /// Pitch (y) moment of the hydrostatic pressure about the moved CoG.
    pub fn pitch_moment(&self, mesh: &WatertightMesh, sink: f64, trim: f64) -> f64 {
        let att = Attitude::new(sink, trim, self.cog);
        let clip = clip_below_plane(mesh, self.water_z, sink, trim, self.cog);
        hydrostatic_loads(&clip.wetted_triangles, self.water_z, self.rho * GRAVITY, att.moved_cog()).moment.y
    }
}

/// Result of the sink search at fixed trim.
#[derive(Debug, Clone, Copy)]
struct SinkSolution {
    sink: f64,
    residual: f64,
    iterations: u32,
}

/// Bracket that takes the hull from fully submerged to fully dry.
fn sink_bracket(mesh: &WatertightMesh, load: &Loading, trim: f64) -> (f64, f64) {
    let tf = Attitude::new(0.0, trim, load.cog).transformer();
    let (mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &mesh.vertices {
        let z = tf.apply(v).z;
        zmin = zmin.min(z);
        zmax = zmax.max(z);
    }
    let h = zmax - zmin;
    (load.water_z - zmax - h, load.water_z - zmin + h)
}

fn solve_sink(mesh: &WatertightMesh, load: &Loading, trim: f64, guess: Option<f64>) -> Result<SinkSolution, HydroError> {
    let tol = load.force_tolerance();
    if let Some(g) = guess {
        let r = load.net_force(mesh, g, trim);
        if r.abs() <= tol {
            return Ok(SinkSolution { sink: g, residual: r, iterations: 1 });
        }
    }
    let (mut lo, mut hi) = sink_bracket(mesh, load, trim);
    // net force is positive (too much buoyancy) at lo, negative at hi
    let mut best = SinkSolution { sink: lo, residual: f64::INFINITY, iterations: 0 };
    for it in 1..=MAX_BISECTIONS {
        let mid = lo + (hi - lo) * 0.5;
        if mid <= lo || mid >= hi {
            break;
        }
        let r = load.net_force(mesh, mid, trim);
        if r.abs() < best.residual.abs() {
            best = SinkSolution { sink: mid, residual: r, iterations: it };
        }
        best.iterations = it;
        if r.abs() <= tol * REFINE {
            break;
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.residual.abs() <= tol {
        Ok(best)
    } else {
        Err(HydroError::NoConvergence(best.iterations))
    }
}

/// Captive: the hull stays where it was put.
pub fn equilibrium_0dof(params: &PhysicalParameters) -> EquilibriumState {
    EquilibriumState {
        sink: 0.0,
        trim: params.trim_angle,
        converged: true,
        iterations: 0,
        residual_force: 0.0,
        residual_moment: 0.0,
    }
}

/// Free sink at the given fixed trim.
pub fn equilibrium_1dof(mesh: &WatertightMesh, params: &PhysicalParameters, fluid: Fluid) -> Result<EquilibriumState, HydroError> {
    equilibrium_1dof_from(mesh, params, fluid, None)
}

/// As [`equilibrium_1dof`], starting from a sink guess.
pub fn equilibrium_1dof_from(
    mesh: &WatertightMesh,
    params: &PhysicalParameters,
    fluid: Fluid,
    guess: Option<f64>,
) -> Result<EquilibriumState, HydroError> {
    let load = Loading::new(params, fluid);
    load.check(mesh)?;
    let s = solve_sink(mesh, &load, params.trim_angle, guess)?;
    Ok(EquilibriumState {
        sink: s.sink,
        trim: params.trim_angle,
        converged: true,
        iterations: s.iterations,
        residual_force: s.residual,
        residual_moment: load.pitch_moment(mesh, s.sink, params.trim_angle),
    })
}

/// Hull length used to scale the moment tolerance.
fn hull_length(mesh: &WatertightMesh) -> f64 {
    mesh.bounding_box().map(|b| b.extent().x).unwrap_or(1.0).max(f64::MIN_POSITIVE)
}

/// Free sink and trim: outer bisection on trim in ±15°, inner sink solve.
pub fn equilibrium_2dof(mesh: &WatertightMesh, params: &PhysicalParameters, fluid: Fluid) -> Result<EquilibriumState, HydroError> {
    let load = Loading::new(params, fluid);
    load.check(mesh)?;
    let tol_m = MOMENT_TOLERANCE * load.weight() * hull_length(mesh);
    let mut iterations = 0;
    let mut eval = |trim: f64, guess: Option<f64>| -> Result<(SinkSolution, f64), HydroError> {
        let s = solve_sink(mesh, &load, trim, guess)?;
        iterations += 1;
        Ok((s, load.pitch_moment(mesh, s.sink, trim)))
    };
    let (mut lo, mut hi) = (-TRIM_LIMIT_DEG, TRIM_LIMIT_DEG);
    let (s_lo, m_lo) = eval(lo, None)?;
    let (_, m_hi) = eval(hi, None)?;
    if m_lo.signum() == m_hi.signum() && m_lo != 0.0 && m_hi != 0.0 {
        return Err(HydroError::TrimRangeExceeded);
    }
    let mut guess = Some(s_lo.sink);
    let mut best: Option<(f64, SinkSolution, f64)> = None;
    for _ in 0..MAX_BISECTIONS {
        let mid = lo + (hi - lo) * 0.5;
        if mid <= lo || mid >= hi {
            break;
        }
        let (s, m) = eval(mid, guess)?;
        guess = Some(s.sink);
        if best.as_ref().map_or(true, |b| m.abs() < b.2.abs()) {
            best = Some((mid, s, m));
        }
        if m.abs() <= tol_m * REFINE {
            break;
        }
        if m.signum() == m_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (trim, s, m) = best.ok_or(HydroError::NoConvergence(iterations))?;
    if m.abs() > tol_m {
        return Err(HydroError::NoConvergence(iterations));
    }
    Ok(EquilibriumState { sink: s.sink, trim, converged: true, iterations, residual_force: s.residual, residual_moment: m })
}

pub fn equilibrium(mesh: &WatertightMesh, params: &PhysicalParameters, fluid: Fluid, dof: DofMode) -> Result<EquilibriumState, HydroError> {
    match dof {
        DofMode::Captive0Dof => Ok(equilibrium_0dof(params)),
        DofMode::Sink1Dof => equilibrium_1dof(mesh, params, fluid),
        DofMode::SinkTrim2Dof => equilibrium_2dof(mesh, params, fluid),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn params(mass: f64, cog: Vec3) -> PhysicalParameters {
        PhysicalParameters {
            mass,
            cog,
            velocity: 0.0,
            water_temperature: 15.0,
            inertia_diag: [1.0; 3],
            water_z: 0.5,
            wave_height: 0.0,
            trim_angle: 0.0,
        }
    }

    const WATER: Fluid = Fluid { rho: 1000.0, nu: 1e-6 };

    fn cube() -> WatertightMesh {
        WatertightMesh::new(shapes::unit_cube()).unwrap()
    }

    #[test]
    fn cube_draft_is_m_over_rho_a() {
        let p = params(500.0, Vec3::new(0.5, 0.5, 0.5));
        let eq = equilibrium_1dof(&cube(), &p, WATER).unwrap();
        // draft = water_z - (bottom + sink) = 0.5 - sink
        assert!((0.5 - eq.sink - 0.5).abs() < 1e-9, "{eq:?}");
        assert!(eq.converged);
    }

    #[test]
    fn insufficient_buoyancy() {
        let p = params(1500.0, Vec3::new(0.5, 0.5, 0.5));
        let f = crate::fluid::fluid_properties(15.0).unwrap();
        assert!(matches!(equilibrium_1dof(&cube(), &p, f), Err(HydroError::InsufficientBuoyancy { .. })));
    }

    #[test]
    fn fixed_point_restart() {
        let p = params(320.0, Vec3::new(0.5, 0.5, 0.5));
        let eq = equilibrium_1dof(&cube(), &p, WATER).unwrap();
        let again = equilibrium_1dof_from(&cube(), &p, WATER, Some(eq.sink)).unwrap();
        assert!(again.iterations <= 2);
        assert_eq!(again.sink, eq.sink);
    }

    #[test]
    fn symmetric_cube_has_zero_trim() {
        let p = params(500.0, Vec3::new(0.5, 0.5, 0.5));
        let two = equilibrium_2dof(&cube(), &p, WATER).unwrap();
        let one = equilibrium_1dof(&cube(), &p, WATER).unwrap();
        assert!(two.trim.abs() < 1e-9, "{two:?}");
        assert!((two.sink - one.sink).abs() < 1e-9);
    }

    #[test]
    fn aft_buoyancy_lowers_the_bow() {
        // CoG forward of the centre of buoyancy: the bow goes down (negative trim)
        let p = params(500.0, Vec3::new(0.55, 0.5, 0.2));
        let m0 = Loading::new(&p, WATER).pitch_moment(&cube(), -0.0, 0.0);
        let eq = equilibrium_2dof(&cube(), &p, WATER).unwrap();
        assert!(m0 > 0.0);
        assert!(eq.trim < 0.0, "{eq:?}");
    }
}
