use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;

/// Degrees of freedom of the virtual experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DofMode {
    /// Attitude locked.
    #[serde(rename = "CAPTIVE_0DOF")]
    Captive0Dof,
    /// Free to sink.
    #[serde(rename = "SINK_1DOF")]
    Sink1Dof,
    /// Free to sink and trim.
    #[serde(rename = "SINK_TRIM_2DOF")]
    SinkTrim2Dof,
}

impl DofMode {
    pub fn from_count(n: u8) -> Option<Self> {
        match n {
            0 => Some(Self::Captive0Dof),
            1 => Some(Self::Sink1Dof),
            2 => Some(Self::SinkTrim2Dof),
            _ => None,
        }
    }

    pub fn count(self) -> u8 {
        self as u8
    }
}

/// The designer-facing physical inputs, all SI (temperature in °C, angles
/// in degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParameters {
    pub mass: f64,
    pub cog: Vec3,
    pub velocity: f64,
    pub water_temperature: f64,
    /// Diagonal of the inertia tensor about the CoG (Ixx, Iyy, Izz).
    pub inertia_diag: [f64; 3],
    pub water_z: f64,
    pub wave_height: f64,
    pub trim_angle: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid {field}: {reason}")]
pub struct ParamError {
    pub field: &'static str,
    pub reason: String,
}

impl ParamError {
    fn new(field: &'static str, reason: &str) -> Self {
        Self { field, reason: reason.into() }
    }
}

impl PhysicalParameters {
    pub fn validate(&self) -> Result<(), ParamError> {
        let finite = [
            ("mass", self.mass),
            ("cog.x", self.cog.x),
            ("cog.y", self.cog.y),
            ("cog.z", self.cog.z),
            ("velocity", self.velocity),
            ("water_temperature", self.water_temperature),
            ("water_z", self.water_z),
            ("wave_height", self.wave_height),
            ("trim_angle", self.trim_angle),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(ParamError::new(field, "must be a finite number"));
            }
        }
        if self.mass <= 0.0 {
            return Err(ParamError::new("mass", "must be > 0"));
        }
        if self.velocity < 0.0 {
            return Err(ParamError::new("velocity", "must be >= 0"));
        }
        if self.inertia_diag.iter().any(|&i| !(i > 0.0 && i.is_finite())) {
            return Err(ParamError::new("inertia_diag", "all components must be > 0"));
        }
        if !(self.water_temperature > 0.0 && self.water_temperature < 100.0) {
            return Err(ParamError::new("water_temperature", "must be in (0, 100) °C"));
        }
        if self.wave_height < 0.0 {
            return Err(ParamError::new("wave_height", "must be >= 0"));
        }
        Ok(())
    }
}
