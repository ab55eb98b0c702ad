//! Users, organizations, geometries, simulations, machines and setups with
//! organization-based access control.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use vtank_core::access::{can_read, can_write, Visibility};
use vtank_core::jobscript::Scheduler;
use vtank_core::kpi::KpiSummary;
use vtank_core::mesh::{decimate, parse_mesh, validate, write_binary_stl, PREVIEW_TARGET_TRIANGLES};
use vtank_core::status::{Applied, StatusHistory, StepCode, MAX_STEP};
use vtank_core::{DofMode, PhysicalParameters};

use crate::blobs::{sha256_hex, BlobStore};
use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::model::*;
use crate::notify::{Notification, Notifier};
use crate::search::SearchIndex;
use crate::store::{Store, Tables};

pub const SESSION_TTL_SECS: f64 = 24.0 * 3600.0;

pub fn new_id(prefix: &str) -> Id {
    format!("{prefix}-{}", uuid::Uuid::new_v4().simple())
}

pub fn new_token() -> String {
    format!("{}{}", uuid::Uuid::new_v4().simple(), uuid::Uuid::new_v4().simple())
}

fn hash_password(salt: &str, password: &str) -> String {
    sha256_hex(format!("{salt}\u{0}{password}").as_bytes())
}

impl User {
    /// Acts with admin rights on behalf of the command-line tool.
    pub fn system() -> User {
        User {
            id: "system".into(),
            login: "system".into(),
            display_name: "system".into(),
            approved: true,
            admin: true,
            organization_ids: BTreeSet::new(),
            password_hash: String::new(),
            salt: String::new(),
            created_at: 0.0,
        }
    }

    pub fn orgs(&self) -> Vec<Id> {
        self.organization_ids.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewMachine {
    pub name: String,
    pub address: String,
    pub root_folder: String,
    pub username: String,
    pub scheduler: Scheduler,
    pub nodes_default: u32,
    #[serde(default = "one")]
    pub tasks_per_node: u32,
    #[serde(default = "hour")]
    pub walltime: u64,
}

fn one() -> u32 {
    1
}

fn hour() -> u64 {
    3600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewSimSetup {
    pub name: String,
    pub dof_mode: DofMode,
    #[serde(default)]
    pub default_parameters: BTreeMap<String, String>,
    #[serde(default)]
    pub statuses_dictionary: BTreeMap<i8, String>,
    #[serde(default)]
    pub supported_machine_ids: BTreeSet<Id>,
    #[serde(default = "reference")]
    pub build_script_ref: String,
}

fn reference() -> String {
    REFERENCE_SETUP.into()
}

pub fn reference_statuses() -> BTreeMap<i8, String> {
    (0..=MAX_STEP).map(|s| (s, vtank_core::status::reference_step_name(s).unwrap_or_default().to_string())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewSimulation {
    pub name: String,
    pub org_id: Id,
    pub simsetup_id: Id,
    pub machine_id: Id,
    pub geometry_id: Id,
    #[serde(default = "private")]
    pub visibility: Visibility,
    #[serde(default)]
    pub nodes: Option<u32>,
}

fn private() -> Visibility {
    Visibility::Private
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub kind: String,
    pub entity_id: Id,
    pub detail: String,
}

pub struct Catalogue {
    pub(crate) store: Arc<Store>,
    pub(crate) blobs: BlobStore,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) index: SearchIndex,
    pub(crate) notifier: Arc<Notifier>,
}

fn require_admin(u: &User) -> Result<()> {
    if u.admin {
        Ok(())
    } else {
        Err(Error::NotAuthorized("admin role required".into()))
    }
}

fn require_approved(u: &User) -> Result<()> {
    if u.approved {
        Ok(())
    } else {
        Err(Error::Unauthenticated)
    }
}

impl Catalogue {
    pub fn new(store: Arc<Store>, blobs: BlobStore, clock: Arc<dyn Clock>, notifier: Arc<Notifier>) -> Self {
        let index = SearchIndex::new();
        index.rebuild(store.snapshot().simulations.values());
        Self { store, blobs, clock, index, notifier }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    pub fn index(&self) -> &SearchIndex {
        &self.index
    }

    pub fn notifier(&self) -> &Notifier {
        &self.notifier
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    // ---- users and sessions

    pub fn register_user(&self, login: &str, display_name: &str, password: &str) -> Result<User> {
        if login.trim().is_empty() || password.is_empty() {
            return Err(Error::validation("login and password are required"));
        }
        let salt = uuid::Uuid::new_v4().simple().to_string();
        let user = User {
            id: new_id("u"),
            login: login.into(),
            display_name: display_name.into(),
            approved: false,
            admin: false,
            organization_ids: BTreeSet::new(),
            password_hash: hash_password(&salt, password),
            salt,
            created_at: self.now(),
        };
        self.store.write(|t| {
            if t.user_by_login(login).is_some() {
                return Err(Error::Conflict(format!("login {login} already registered")));
            }
            t.users.insert(user.id.clone(), user.clone());
            Ok(user.clone())
        })
    }

    pub fn approve_user(&self, admin: &User, user_id: &str, make_admin: bool) -> Result<User> {
        require_admin(admin)?;
        self.store.write(|t| {
            let u = t.users.get_mut(user_id).ok_or_else(|| Error::not_found(format!("user {user_id}")))?;
            u.approved = true;
            u.admin |= make_admin;
            Ok(u.clone())
        })
    }

    pub fn find_user(&self, login_or_id: &str) -> Result<User> {
        let t = self.store.snapshot();
        t.users
            .get(login_or_id)
            .or_else(|| t.user_by_login(login_or_id))
            .cloned()
            .ok_or_else(|| Error::not_found(format!("user {login_or_id}")))
    }

    pub fn login(&self, login: &str, password: &str) -> Result<Session> {
        let user = self.store.read(|t| t.user_by_login(login).cloned()).ok_or(Error::Unauthenticated)?;
        if hash_password(&user.salt, password) != user.password_hash || !user.approved {
            return Err(Error::Unauthenticated);
        }
        let s = Session { token: new_token(), user_id: user.id, expires_at: self.now() + SESSION_TTL_SECS };
        self.store.write(|t| {
            t.sessions.insert(s.token.clone(), s.clone());
            Ok(s.clone())
        })
    }

    pub fn logout(&self, token: &str) -> Result<()> {
        self.store.write(|t| {
            t.sessions.remove(token);
            Ok(())
        })
    }

    pub fn authenticate(&self, token: &str) -> Result<User> {
        let t = self.store.snapshot();
        let s = t.sessions.get(token).ok_or(Error::Unauthenticated)?;
        if s.expires_at <= self.now() {
            return Err(Error::Unauthenticated);
        }
        let u = t.users.get(&s.user_id).ok_or(Error::Unauthenticated)?;
        require_approved(u)?;
        Ok(u.clone())
    }

    // ---- organizations, machines, setups

    pub fn create_org(&self, admin: &User, name: &str) -> Result<Organization> {
        require_admin(admin)?;
        if name.trim().is_empty() {
            return Err(Error::validation("organization name is required"));
        }
        let org = Organization {
            id: new_id("org"),
            name: name.into(),
            authorized_machine_ids: BTreeSet::new(),
            authorized_simsetup_ids: BTreeSet::new(),
        };
        self.store.write(|t| {
            if t.org_by_name(name).is_some() {
                return Err(Error::Conflict(format!("organization {name} exists")));
            }
            t.organizations.insert(org.id.clone(), org.clone());
            Ok(org.clone())
        })
    }

    pub fn find_org(&self, name_or_id: &str) -> Result<Organization> {
        let t = self.store.snapshot();
        t.organizations
            .get(name_or_id)
            .or_else(|| t.org_by_name(name_or_id))
            .cloned()
            .ok_or_else(|| Error::not_found(format!("organization {name_or_id}")))
    }

    pub fn list_orgs(&self, user: &User) -> Vec<Organization> {
        self.store
            .snapshot()
            .organizations
            .values()
            .filter(|o| user.admin || user.organization_ids.contains(&o.id))
            .cloned()
            .collect()
    }

    pub fn add_member(&self, admin: &User, org_id: &str, user_id: &str) -> Result<User> {
        require_admin(admin)?;
        self.store.write(|t| {
            if !t.organizations.contains_key(org_id) {
                return Err(Error::not_found(format!("organization {org_id}")));
            }
            let u = t.users.get_mut(user_id).ok_or_else(|| Error::not_found(format!("user {user_id}")))?;
            u.organization_ids.insert(org_id.into());
            Ok(u.clone())
        })
    }

    pub fn grant_machine(&self, admin: &User, org_id: &str, machine_id: &str) -> Result<Organization> {
        require_admin(admin)?;
        self.store.write(|t| {
            if !t.machines.contains_key(machine_id) {
                return Err(Error::not_found(format!("machine {machine_id}")));
            }
            let o = t.organizations.get_mut(org_id).ok_or_else(|| Error::not_found(format!("organization {org_id}")))?;
            o.authorized_machine_ids.insert(machine_id.into());
            Ok(o.clone())
        })
    }

    pub fn grant_simsetup(&self, admin: &User, org_id: &str, simsetup_id: &str) -> Result<Organization> {
        require_admin(admin)?;
        self.store.write(|t| {
            if !t.simsetups.contains_key(simsetup_id) {
                return Err(Error::not_found(format!("simsetup {simsetup_id}")));
            }
            let o = t.organizations.get_mut(org_id).ok_or_else(|| Error::not_found(format!("organization {org_id}")))?;
            o.authorized_simsetup_ids.insert(simsetup_id.into());
            Ok(o.clone())
        })
    }

    /// New machines start disabled.
    pub fn add_machine(&self, admin: &User, m: NewMachine) -> Result<Machine> {
        require_admin(admin)?;
        if m.name.trim().is_empty() || m.root_folder.is_empty() {
            return Err(Error::validation("machine name and root folder are required"));
        }
        if m.nodes_default == 0 || m.tasks_per_node == 0 {
            return Err(Error::validation("nodes_default and tasks_per_node must be > 0"));
        }
        let machine = Machine {
            id: new_id("m"),
            name: m.name.clone(),
            address: m.address,
            root_folder: m.root_folder,
            username: m.username,
            scheduler: m.scheduler,
            nodes_default: m.nodes_default,
            tasks_per_node: m.tasks_per_node,
            walltime: m.walltime,
            enabled: false,
        };
        self.store.write(|t| {
            if t.machine_by_name(&m.name).is_some() {
                return Err(Error::Conflict(format!("machine {} exists", m.name)));
            }
            t.machines.insert(machine.id.clone(), machine.clone());
            Ok(machine.clone())
        })
    }

    pub fn set_machine_enabled(&self, admin: &User, machine_id: &str, enabled: bool) -> Result<Machine> {
        require_admin(admin)?;
        self.store.write(|t| {
            let m = t.machines.get_mut(machine_id).ok_or_else(|| Error::not_found(format!("machine {machine_id}")))?;
            m.enabled = enabled;
            Ok(m.clone())
        })
    }

    pub fn find_machine(&self, name_or_id: &str) -> Result<Machine> {
        let t = self.store.snapshot();
        t.machines
            .get(name_or_id)
            .or_else(|| t.machine_by_name(name_or_id))
            .cloned()
            .ok_or_else(|| Error::not_found(format!("machine {name_or_id}")))
    }

    /// Admins see every machine; users see enabled machines granted to one
    /// of their organizations.
    pub fn list_machines(&self, user: &User) -> Vec<Machine> {
        let t = self.store.snapshot();
        t.machines
            .values()
            .filter(|m| {
                user.admin
                    || (m.enabled
                        && user
                            .organization_ids
                            .iter()
                            .any(|o| t.organizations.get(o).is_some_and(|o| o.authorized_machine_ids.contains(&m.id))))
            })
            .cloned()
            .collect()
    }

    pub fn add_simsetup(&self, admin: &User, s: NewSimSetup) -> Result<SimSetup> {
        require_admin(admin)?;
        let statuses = if s.statuses_dictionary.is_empty() { reference_statuses() } else { s.statuses_dictionary };
        let max = statuses.keys().copied().max().unwrap_or(0);
        if !(0..=max).all(|k| statuses.get(&k).is_some_and(|n| !n.trim().is_empty())) || max > MAX_STEP {
            return Err(Error::validation(format!("statuses dictionary must name every step 0..={max} (max {MAX_STEP})")));
        }
        let setup = SimSetup {
            id: new_id("ss"),
            name: s.name.clone(),
            dof_mode: s.dof_mode,
            default_parameters: s.default_parameters,
            statuses_dictionary: statuses,
            supported_machine_ids: s.supported_machine_ids,
            build_script_ref: s.build_script_ref,
        };
        self.store.write(|t| {
            if t.simsetup_by_name(&s.name).is_some() {
                return Err(Error::Conflict(format!("simsetup {} exists", s.name)));
            }
            if let Some(m) = setup.supported_machine_ids.iter().find(|m| !t.machines.contains_key(*m)) {
                return Err(Error::not_found(format!("machine {m}")));
            }
            t.simsetups.insert(setup.id.clone(), setup.clone());
            Ok(setup.clone())
        })
    }

    pub fn support_machine(&self, admin: &User, simsetup_id: &str, machine_id: &str) -> Result<SimSetup> {
        require_admin(admin)?;
        self.store.write(|t| {
            if !t.machines.contains_key(machine_id) {
                return Err(Error::not_found(format!("machine {machine_id}")));
            }
            let s = t.simsetups.get_mut(simsetup_id).ok_or_else(|| Error::not_found(format!("simsetup {simsetup_id}")))?;
            s.supported_machine_ids.insert(machine_id.into());
            Ok(s.clone())
        })
    }

    pub fn find_simsetup(&self, name_or_id: &str) -> Result<SimSetup> {
        let t = self.store.snapshot();
        t.simsetups
            .get(name_or_id)
            .or_else(|| t.simsetup_by_name(name_or_id))
            .cloned()
            .ok_or_else(|| Error::not_found(format!("simsetup {name_or_id}")))
    }

    pub fn list_simsetups(&self, user: &User) -> Vec<SimSetup> {
        let t = self.store.snapshot();
        t.simsetups
            .values()
            .filter(|s| {
                user.admin
                    || user
                        .organization_ids
                        .iter()
                        .any(|o| t.organizations.get(o).is_some_and(|o| o.authorized_simsetup_ids.contains(&s.id)))
            })
            .cloned()
            .collect()
    }

    // ---- geometries

    /// Stores the upload as PENDING; validation runs later as a task.
    pub fn create_geometry(&self, user: &User, org_id: &str, name: &str, filename: &str, bytes: &[u8]) -> Result<Geometry> {
        require_approved(user)?;
        if !user.organization_ids.contains(org_id) {
            return Err(Error::NotAuthorized(format!("not a member of {org_id}")));
        }
        if name.trim().is_empty() {
            return Err(Error::validation("geometry name is required"));
        }
        if bytes.is_empty() {
            return Err(Error::validation("geometry file is empty"));
        }
        let digest = self.blobs.put(bytes)?;
        let g = Geometry {
            id: new_id("geo"),
            name: name.into(),
            owner_org_id: org_id.into(),
            filename: filename.into(),
            file_ref: digest,
            preview_ref: None,
            validation: GeometryValidation::Pending,
            report: None,
            bbox: None,
            error: None,
            created_at: self.now(),
        };
        self.store.write(|t| {
            if t.geometries.values().any(|x| x.owner_org_id == org_id && x.name == name) {
                return Err(Error::Conflict(format!("DUPLICATE_NAME: geometry {name} exists in organization")));
            }
            t.geometries.insert(g.id.clone(), g.clone());
            Ok(g.clone())
        })
    }

    /// Task body: parse, validate and decimate. Idempotent.
    pub fn validate_geometry(&self, geometry_id: &str) -> Result<Geometry> {
        let g = self
            .store
            .read(|t| t.geometries.get(geometry_id).cloned())
            .ok_or_else(|| Error::not_found(format!("geometry {geometry_id}")))?;
        if g.validation != GeometryValidation::Pending {
            return Ok(g);
        }
        let bytes = self.blobs.get(&g.file_ref)?;
        let mut upd = g.clone();
        match parse_mesh(&bytes, &g.filename) {
            Ok(mesh) => {
                let report = validate(&mesh);
                upd.bbox = mesh.bounding_box().ok();
                let preview = decimate(&mesh, PREVIEW_TARGET_TRIANGLES).unwrap_or(mesh);
                upd.preview_ref = Some(self.blobs.put(&write_binary_stl(&preview))?);
                upd.validation = if report.is_valid { GeometryValidation::Valid } else { GeometryValidation::Invalid };
                upd.report = Some(report);
            }
            Err(e) => {
                upd.validation = GeometryValidation::Invalid;
                upd.error = Some(e.to_string());
            }
        }
        self.store.write(|t| {
            let cur = t.geometries.get_mut(geometry_id).ok_or_else(|| Error::not_found(format!("geometry {geometry_id}")))?;
            if cur.validation == GeometryValidation::Pending {
                *cur = upd.clone();
            }
            Ok(cur.clone())
        })
    }

    pub fn get_geometry(&self, user: &User, id: &str) -> Result<Geometry> {
        let g = self.store.read(|t| t.geometries.get(id).cloned()).ok_or_else(|| Error::not_found(format!("geometry {id}")))?;
        if user.organization_ids.contains(&g.owner_org_id) {
            Ok(g)
        } else {
            Err(Error::not_found(format!("geometry {id}")))
        }
    }

    pub fn list_geometries(&self, user: &User) -> Vec<Geometry> {
        let mut v: Vec<Geometry> = self
            .store
            .snapshot()
            .geometries
            .values()
            .filter(|g| user.organization_ids.contains(&g.owner_org_id))
            .cloned()
            .collect();
        v.sort_by(|a, b| b.created_at.total_cmp(&a.created_at).then(a.id.cmp(&b.id)));
        v
    }

    // ---- simulations

    pub fn create_simulation(&self, user: &User, basic: NewSimulation, params: PhysicalParameters) -> Result<Simulation> {
        require_approved(user)?;
        if basic.name.trim().is_empty() {
            return Err(Error::validation("name: must be non-empty"));
        }
        params.validate()?;
        let now = self.now();
        let sim = Simulation {
            id: new_id("sim"),
            name: basic.name.clone(),
            owner_org_id: basic.org_id.clone(),
            simsetup_id: basic.simsetup_id.clone(),
            machine_id: basic.machine_id.clone(),
            geometry_id: basic.geometry_id.clone(),
            visibility: basic.visibility,
            params,
            status_history: StatusHistory::created(now),
            deleted: false,
            range_parent_id: None,
            range: None,
            is_group: false,
            results_ref: None,
            kpis: None,
            created_at: now,
            created_by: user.id.clone(),
            callback_token: new_token(),
            nodes: basic.nodes,
        };
        let sim = self.store.write(|t| {
            check_new_simulation(t, user, &basic)?;
            t.simulations.insert(sim.id.clone(), sim.clone());
            Ok(sim)
        })?;
        self.index.upsert(&sim);
        Ok(sim)
    }

    pub fn get_simulation(&self, user: &User, id: &str) -> Result<Simulation> {
        let s = self.store.read(|t| t.simulations.get(id).cloned()).ok_or_else(|| Error::not_found(format!("simulation {id}")))?;
        if visible(user, &s) {
            Ok(s)
        } else {
            Err(Error::not_found(format!("simulation {id}")))
        }
    }

    /// Internal lookup without access control.
    pub fn simulation(&self, id: &str) -> Result<Simulation> {
        self.store.read(|t| t.simulations.get(id).cloned()).ok_or_else(|| Error::not_found(format!("simulation {id}")))
    }

    pub fn list_simulations(&self, user: &User) -> Vec<Simulation> {
        self.store.snapshot().simulations.values().filter(|s| visible(user, s)).cloned().collect()
    }

    pub fn soft_delete(&self, user: &User, id: &str) -> Result<Simulation> {
        let s = self.get_simulation(user, id)?;
        if !can_write(&s.owner_org_id, &user.orgs()) {
            return Err(Error::NotAuthorized(format!("simulation {id} belongs to another organization")));
        }
        let s = self.store.write(|t| {
            let s = t.simulations.get_mut(id).ok_or_else(|| Error::not_found(format!("simulation {id}")))?;
            s.deleted = true;
            Ok(s.clone())
        })?;
        self.index.upsert(&s);
        Ok(s)
    }

    /// Applies a status callback; see [`StatusHistory::apply`].
    pub fn apply_status(&self, sim_id: &str, step: StepCode, message: &str) -> Result<(Applied, Simulation)> {
        let now = self.now();
        let (applied, sim) = self.store.write(|t| {
            let s = t.simulations.get_mut(sim_id).ok_or_else(|| Error::not_found(format!("UNKNOWN_SIMULATION {sim_id}")))?;
            let a = s.status_history.apply(step, message, now);
            Ok((a, s.clone()))
        })?;
        match applied {
            Applied::Stale => log::warn!("simulation {sim_id}: stale step {step} ignored"),
            Applied::AfterTerminal => log::warn!("simulation {sim_id}: step {step} after terminal state ignored"),
            _ => {}
        }
        if applied.changed() {
            self.index.upsert(&sim);
        }
        Ok((applied, sim))
    }

    pub fn set_results(&self, sim_id: &str, results_ref: &str, kpis: KpiSummary) -> Result<Simulation> {
        let s = self.store.write(|t| {
            let s = t.simulations.get_mut(sim_id).ok_or_else(|| Error::not_found(format!("simulation {sim_id}")))?;
            s.results_ref = Some(results_ref.into());
            s.kpis = Some(kpis);
            Ok(s.clone())
        })?;
        self.index.upsert(&s);
        Ok(s)
    }

    /// Adds simulations in one transaction and indexes them.
    pub(crate) fn insert_simulations(&self, f: impl FnOnce(&mut Tables) -> Result<Vec<Simulation>>) -> Result<Vec<Simulation>> {
        let sims = self.store.write(f)?;
        for s in &sims {
            self.index.upsert(s);
        }
        Ok(sims)
    }

    // ---- help requests

    pub fn help_request(&self, user: &User, kind: HelpKind, entity_id: &str, text: &str) -> Result<HelpRequest> {
        require_approved(user)?;
        match kind {
            HelpKind::Geometry => self.get_geometry(user, entity_id).map(|_| ())?,
            HelpKind::Simulation => self.get_simulation(user, entity_id).map(|_| ())?,
        }
        if text.trim().is_empty() {
            return Err(Error::validation("EMPTY_TEXT: help request text is empty"));
        }
        let h = HelpRequest {
            id: new_id("h"),
            kind,
            entity_id: entity_id.into(),
            user_id: user.id.clone(),
            text: text.into(),
            created_at: self.now(),
        };
        self.store.write(|t| {
            t.help_requests.insert(h.id.clone(), h.clone());
            Ok(())
        })?;
        self.notifier.send(Notification {
            at: h.created_at,
            to: "support".into(),
            event: "help_request".into(),
            entity_id: entity_id.into(),
            text: format!("{} asks about {:?} {}: {}", user.login, kind, entity_id, text),
        });
        Ok(h)
    }

    // ---- consistency

    /// Read-only audit. `job_alive` answers whether the scheduler still knows
    /// a live job (`None` when the machine cannot be asked).
    pub fn consistency_check(&self, job_alive: impl Fn(&Machine, &JobRecord) -> Option<bool>) -> Vec<Anomaly> {
        let t = self.store.snapshot();
        let mut out = Vec::new();
        for g in t.geometries.values() {
            if !self.blobs.exists(&g.file_ref) {
                out.push(Anomaly { kind: "MISSING_GEOMETRY_FILE".into(), entity_id: g.id.clone(), detail: g.file_ref.clone() });
            }
        }
        for s in t.simulations.values() {
            if !s.is_group && !t.geometries.contains_key(&s.geometry_id) {
                out.push(Anomaly { kind: "DANGLING_GEOMETRY".into(), entity_id: s.id.clone(), detail: s.geometry_id.clone() });
            }
            if let Some(r) = &s.results_ref {
                if !self.blobs.exists(r) {
                    out.push(Anomaly { kind: "ORPHANED_RESULTS".into(), entity_id: s.id.clone(), detail: r.clone() });
                }
            }
            if s.deleted || s.status_history.status() != vtank_core::status::DashboardStatus::Running {
                continue;
            }
            let job = t.jobs_of(&s.id).last().cloned().cloned();
            let machine = t.machines.get(&s.machine_id);
            match (job, machine) {
                (None, _) => out.push(Anomaly { kind: "RUNNING_WITHOUT_JOB".into(), entity_id: s.id.clone(), detail: "no job recorded".into() }),
                (Some(j), Some(m)) => {
                    if job_alive(m, &j) == Some(false) {
                        out.push(Anomaly {
                            kind: "RUNNING_WITHOUT_JOB".into(),
                            entity_id: s.id.clone(),
                            detail: format!("job {} unknown to {}", j.scheduler_job_id, m.name),
                        });
                    }
                }
                (Some(j), None) => out.push(Anomaly { kind: "UNKNOWN_MACHINE".into(), entity_id: s.id.clone(), detail: j.machine_id }),
            }
        }
        out
    }
}

pub fn visible(user: &User, s: &Simulation) -> bool {
    can_read(s.visibility, &s.owner_org_id, &user.orgs(), s.deleted)
}

pub(crate) fn check_new_simulation(t: &Tables, user: &User, b: &NewSimulation) -> Result<()> {
    if !user.organization_ids.contains(&b.org_id) {
        return Err(Error::NotAuthorized(format!("not a member of {}", b.org_id)));
    }
    let org = t.organizations.get(&b.org_id).ok_or_else(|| Error::NotAuthorized(format!("organization {}", b.org_id)))?;
    let setup = t.simsetups.get(&b.simsetup_id).ok_or_else(|| Error::NotAuthorized(format!("simsetup {}", b.simsetup_id)))?;
    let machine = t.machines.get(&b.machine_id).ok_or_else(|| Error::NotAuthorized(format!("machine {}", b.machine_id)))?;
    if !org.authorized_simsetup_ids.contains(&setup.id) {
        return Err(Error::NotAuthorized(format!("simsetup {} not granted to {}", setup.name, org.name)));
    }
    if !org.authorized_machine_ids.contains(&machine.id) {
        return Err(Error::NotAuthorized(format!("machine {} not granted to {}", machine.name, org.name)));
    }
    if !setup.supported_machine_ids.contains(&machine.id) {
        return Err(Error::NotAuthorized(format!("machine {} not supported by simsetup {}", machine.name, setup.name)));
    }
    if !machine.enabled {
        return Err(Error::validation(format!("machine {} is disabled", machine.name)));
    }
    let g = t
        .geometries
        .get(&b.geometry_id)
        .filter(|g| g.owner_org_id == b.org_id)
        .ok_or_else(|| Error::not_found(format!("geometry {}", b.geometry_id)))?;
    if g.validation != GeometryValidation::Valid {
        return Err(Error::validation(format!("GEOMETRY_NOT_VALID: geometry {} is {:?}", g.name, g.validation)));
    }
    if b.nodes == Some(0) {
        return Err(Error::validation("nodes: must be > 0"));
    }
    Ok(())
}
