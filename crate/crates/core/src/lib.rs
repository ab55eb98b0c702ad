//! Core of the virtual towing tank: hull geometry, hydrostatics, the reference
//! calm-water model and the workflow rules shared by the service and the CLI.
//!
//! Everything here is a pure function of its inputs. The crate is `no_std` and
//! only needs `alloc`; file formats, persistence and process management live in
//! the `vtank` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod access;
pub mod fluid;
pub mod geom;
pub mod hydro;
pub mod jobscript;
pub mod kpi;
pub mod mesh;
pub mod params;
pub mod query;
pub mod range;
pub mod retry;
pub mod solver;
pub mod status;

pub use geom::{Attitude, BoundingBox, Vec3};
pub use mesh::{MeshError, SourceFormat, TriangleMesh, ValidationReport, WatertightMesh};
pub use params::{DofMode, ParamError, PhysicalParameters};

/// Standard gravity in m/s².
pub const GRAVITY: f64 = 9.80665;
