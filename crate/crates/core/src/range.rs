//! Range simulations: one physical parameter swept over an inclusive
//! linspace, all others held at the base values.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::params::{ParamError, PhysicalParameters};
use crate::status::DashboardStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeParameter {
    Velocity,
    Mass,
    TrimAngle,
    WaterZ,
    WaterTemperature,
}

impl RangeParameter {
    pub const ALL: [RangeParameter; 5] = [Self::Velocity, Self::Mass, Self::TrimAngle, Self::WaterZ, Self::WaterTemperature];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Velocity => "velocity",
            Self::Mass => "mass",
            Self::TrimAngle => "trim_angle",
            Self::WaterZ => "water_z",
            Self::WaterTemperature => "water_temperature",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn get(self, p: &PhysicalParameters) -> f64 {
        match self {
            Self::Velocity => p.velocity,
            Self::Mass => p.mass,
            Self::TrimAngle => p.trim_angle,
            Self::WaterZ => p.water_z,
            Self::WaterTemperature => p.water_temperature,
        }
    }

    pub fn set(self, p: &mut PhysicalParameters, v: f64) {
        match self {
            Self::Velocity => p.velocity = v,
            Self::Mass => p.mass = v,
            Self::TrimAngle => p.trim_angle = v,
            Self::WaterZ => p.water_z = v,
            Self::WaterTemperature => p.water_temperature = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    pub parameter: RangeParameter,
    pub lo: f64,
    pub hi: f64,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RangeError {
    #[error("range count must be >= 2, got {0}")]
    Count(u32),
    #[error("range requires lo < hi (lo={lo}, hi={hi})")]
    Order { lo: f64, hi: f64 },
    #[error("range endpoint invalid: {0}")]
    Endpoint(ParamError),
}

impl RangeSpec {
    /// The `count` values, with the last exactly `hi`.
    pub fn values(&self) -> Vec<f64> {
        let n = self.count.max(2);
        let step = (self.hi - self.lo) / f64::from(n - 1);
        (0..n).map(|i| if i == n - 1 { self.hi } else { self.lo + f64::from(i) * step }).collect()
    }

    /// One parameter set per range point.
    pub fn expand(&self, base: &PhysicalParameters) -> Result<Vec<PhysicalParameters>, RangeError> {
        if self.count < 2 {
            return Err(RangeError::Count(self.count));
        }
        if !(self.lo < self.hi) {
            return Err(RangeError::Order { lo: self.lo, hi: self.hi });
        }
        let out: Vec<_> = self
            .values()
            .into_iter()
            .map(|v| {
                let mut p = base.clone();
                self.parameter.set(&mut p, v);
                p
            })
            .collect();
        for p in [&out[0], &out[out.len() - 1]] {
            p.validate().map_err(RangeError::Endpoint)?;
        }
        Ok(out)
    }
}

pub fn child_name(base: &str, index: usize) -> String {
    format!("{base}_r{:03}", index + 1)
}

/// Error if any child errored, Running if any is not terminal, else Completed.
pub fn family_status<I: IntoIterator<Item = DashboardStatus>>(children: I) -> DashboardStatus {
    let mut running = false;
    for s in children {
        match s {
            DashboardStatus::Error => return DashboardStatus::Error,
            DashboardStatus::Completed | DashboardStatus::Deleted => {}
            _ => running = true,
        }
    }
    if running {
        DashboardStatus::Running
    } else {
        DashboardStatus::Completed
    }
}
