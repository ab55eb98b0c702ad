//! The per-simulation input document (`lincosim.inp`) handed to machines.

use serde::{Deserialize, Serialize};
use vtank_core::{DofMode, PhysicalParameters, Vec3};

use crate::blobs::sha256_hex;
use crate::error::{Error, Result};

/// File name inside the simulation workdir.
pub const INP_FILE: &str = "lincosim.inp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpSimulation {
    pub id: String,
    pub name: String,
    pub setup: String,
    pub dof_mode: DofMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpGeometry {
    /// Relative to the workdir.
    pub file: String,
    /// sha256 of the file bytes.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpMachine {
    pub nodes: u32,
    pub tasks_per_node: u32,
    /// Seconds.
    pub walltime: u64,
}

/// Physical inputs, SI units; also the format of `run --params`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InpPhysics {
    pub mass: f64,
    pub cog: [f64; 3],
    pub velocity: f64,
    pub water_temperature: f64,
    pub inertia: [f64; 3],
    pub water_z: f64,
    pub wave_height: f64,
    pub trim_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpCallbacks {
    /// Empty: status goes to the workdir log only.
    pub base_url: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LincosimInp {
    pub simulation: InpSimulation,
    pub geometry: InpGeometry,
    pub machine: InpMachine,
    pub physics: InpPhysics,
    pub callbacks: InpCallbacks,
}

impl From<&PhysicalParameters> for InpPhysics {
    fn from(p: &PhysicalParameters) -> Self {
        Self {
            mass: p.mass,
            cog: p.cog.to_array(),
            velocity: p.velocity,
            water_temperature: p.water_temperature,
            inertia: p.inertia_diag,
            water_z: p.water_z,
            wave_height: p.wave_height,
            trim_angle: p.trim_angle,
        }
    }
}

impl From<&InpPhysics> for PhysicalParameters {
    fn from(p: &InpPhysics) -> Self {
        Self {
            mass: p.mass,
            cog: Vec3::from(p.cog),
            velocity: p.velocity,
            water_temperature: p.water_temperature,
            inertia_diag: p.inertia,
            water_z: p.water_z,
            wave_height: p.wave_height,
            trim_angle: p.trim_angle,
        }
    }
}

impl LincosimInp {
    /// Compact JSON with keys in declaration order; this is what is written
    /// and what the digest covers.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec(self).expect("inp serializes");
        v.push(b'\n');
        v
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.to_canonical_bytes())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::validation(format!("{INP_FILE}: {e}")))
    }

    pub fn params(&self) -> PhysicalParameters {
        PhysicalParameters::from(&self.physics)
    }
}
