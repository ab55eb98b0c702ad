//! Persistent record types.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use vtank_core::access::Visibility;
use vtank_core::jobscript::Scheduler;
use vtank_core::kpi::KpiSummary;
use vtank_core::range::RangeSpec;
use vtank_core::status::{DashboardStatus, StatusHistory};
use vtank_core::{BoundingBox, DofMode, PhysicalParameters, ValidationReport};

pub type Id = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: Id,
    pub login: String,
    pub display_name: String,
    pub approved: bool,
    #[serde(default)]
    pub admin: bool,
    pub organization_ids: BTreeSet<Id>,
    /// `sha256(salt ‖ password)` as hex.
    pub password_hash: String,
    pub salt: String,
    pub created_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user_id: Id,
    pub expires_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Organization {
    pub id: Id,
    pub name: String,
    pub authorized_machine_ids: BTreeSet<Id>,
    pub authorized_simsetup_ids: BTreeSet<Id>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GeometryValidation {
    Pending,
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub id: Id,
    pub name: String,
    pub owner_org_id: Id,
    pub filename: String,
    /// Blob digest of the original upload.
    pub file_ref: String,
    pub preview_ref: Option<String>,
    pub validation: GeometryValidation,
    pub report: Option<ValidationReport>,
    pub bbox: Option<BoundingBox>,
    #[serde(default)]
    pub error: Option<String>,
    pub created_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRef {
    pub job_record_id: Id,
    pub scheduler_job_id: String,
    pub job_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub id: Id,
    pub name: String,
    pub owner_org_id: Id,
    pub simsetup_id: Id,
    pub machine_id: Id,
    pub geometry_id: Id,
    pub visibility: Visibility,
    pub params: PhysicalParameters,
    pub status_history: StatusHistory,
    pub deleted: bool,
    pub range_parent_id: Option<Id>,
    /// Range base records are group headers and never run.
    #[serde(default)]
    pub is_group: bool,
    /// Sweep that produced the children of a group header.
    #[serde(default)]
    pub range: Option<RangeSpec>,
    pub results_ref: Option<String>,
    #[serde(default)]
    pub kpis: Option<KpiSummary>,
    pub created_at: f64,
    pub created_by: Id,
    /// Bearer token the machine uses for status callbacks.
    pub callback_token: String,
    #[serde(default)]
    pub nodes: Option<u32>,
}

impl Simulation {
    pub fn status(&self) -> DashboardStatus {
        if self.deleted {
            DashboardStatus::Deleted
        } else {
            self.status_history.status()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub id: Id,
    pub name: String,
    pub address: String,
    pub root_folder: String,
    pub username: String,
    pub scheduler: Scheduler,
    pub nodes_default: u32,
    #[serde(default = "default_tasks")]
    pub tasks_per_node: u32,
    /// Seconds.
    #[serde(default = "default_walltime")]
    pub walltime: u64,
    pub enabled: bool,
}

fn default_tasks() -> u32 {
    1
}

fn default_walltime() -> u64 {
    3600
}

pub const REFERENCE_SETUP: &str = "builtin:reference";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetup {
    pub id: Id,
    pub name: String,
    pub dof_mode: DofMode,
    pub default_parameters: BTreeMap<String, String>,
    pub statuses_dictionary: BTreeMap<i8, String>,
    pub supported_machine_ids: BTreeSet<Id>,
    /// `builtin:reference` or a directory holding `build_prepare` and `run`.
    pub build_script_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    ValidateGeometry,
    SubmitSimulation,
    /// Pull results back from the machine after step 6.
    CollectResults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: Id,
    pub kind: TaskKind,
    /// Geometry or simulation id.
    pub payload: Id,
    pub attempts: u32,
    pub next_attempt_at: f64,
    /// A leased task is invisible to other workers until this time.
    pub lease_until: Option<f64>,
    pub done: bool,
    pub last_error: Option<String>,
    pub created_at: f64,
    /// Enqueue order.
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HelpKind {
    Geometry,
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelpRequest {
    pub id: Id,
    pub kind: HelpKind,
    pub entity_id: Id,
    pub user_id: Id,
    pub text: String,
    pub created_at: f64,
}

/// A scheduler job launched on behalf of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: Id,
    pub sim_id: Id,
    pub machine_id: Id,
    pub job_name: String,
    pub scheduler_job_id: String,
    pub submitted_at: f64,
    /// First poll at which the scheduler no longer knew a live job.
    #[serde(default)]
    pub missing_since: Option<f64>,
}
