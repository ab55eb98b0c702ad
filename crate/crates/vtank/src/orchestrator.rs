//! Durable task queue, the submission protocol, status callbacks, result
//! collection and job monitoring.
//!
//! Tasks are leased rather than removed: a worker that dies mid-task leaves
//! the lease to expire and the task is picked up again. Every task body is
//! idempotent, and all work on one simulation runs under its own mutex.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use vtank_core::jobscript::Scheduler;
use vtank_core::retry::RetryPolicy;
use vtank_core::status::{Applied, StepCode};

use crate::catalogue::{new_id, Catalogue};
use crate::error::{Error, Result};
use crate::inp::{InpCallbacks, InpGeometry, InpMachine, InpSimulation, LincosimInp, INP_FILE};
use crate::machine::{job_script, prepare_job_name, shell_quote, simulate_job_name, Connector, JobHandle, JobState, MachineAccess, MachineError};
use crate::model::*;
use crate::notify::Notification;
use crate::pipeline::StatusPost;
use crate::results::{kpis_from_summary, verify_artifact, Manifest, MANIFEST_FILE};

pub const LEASE_SECS: f64 = 300.0;
pub const LOST_JOB_GRACE_SECS: f64 = 120.0;

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    /// Command that runs `vtank` on the machines.
    pub job_exe: String,
    /// Base URL machines use for status callbacks; empty disables them.
    pub callback_base_url: String,
    pub lease_secs: f64,
    pub lost_job_grace_secs: f64,
    pub retry: RetryPolicy,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            job_exe: "vtank".into(),
            callback_base_url: String::new(),
            lease_secs: LEASE_SECS,
            lost_job_grace_secs: LOST_JOB_GRACE_SECS,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Transient failure; try again after backoff.
    Retry(String),
    /// Permanent failure.
    Fail(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollReport {
    pub handles: Vec<JobHandle>,
    pub unreachable: Vec<(Id, String)>,
    pub lost: Vec<Id>,
}

pub struct Orchestrator {
    cat: Arc<Catalogue>,
    connector: Arc<dyn Connector>,
    config: OrchestratorConfig,
    locks: Mutex<HashMap<Id, Arc<Mutex<()>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn geometry_file_name(g: &Geometry) -> String {
    let ext = Path::new(&g.filename).extension().and_then(|e| e.to_str()).unwrap_or("stl").to_ascii_lowercase();
    format!("geometry.{ext}")
}

/// The input file a simulation is run from.
pub fn build_inp(sim: &Simulation, setup: &SimSetup, machine: &Machine, geometry: &Geometry, base_url: &str) -> LincosimInp {
    LincosimInp {
        simulation: InpSimulation {
            id: sim.id.clone(),
            name: sim.name.clone(),
            setup: setup.build_script_ref.clone(),
            dof_mode: setup.dof_mode,
        },
        geometry: InpGeometry { file: geometry_file_name(geometry), digest: geometry.file_ref.clone() },
        machine: InpMachine {
            nodes: sim.nodes.unwrap_or(machine.nodes_default),
            tasks_per_node: machine.tasks_per_node,
            walltime: machine.walltime,
        },
        physics: (&sim.params).into(),
        callbacks: InpCallbacks { base_url: base_url.into(), token: sim.callback_token.clone() },
    }
}

fn machine_err(e: MachineError) -> Outcome {
    Outcome::Retry(e.to_string())
}

impl Orchestrator {
    pub fn new(cat: Arc<Catalogue>, connector: Arc<dyn Connector>, config: OrchestratorConfig) -> Self {
        Self { cat, connector, config, locks: Mutex::new(HashMap::new()) }
    }

    pub fn catalogue(&self) -> &Arc<Catalogue> {
        &self.cat
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    fn sim_lock(&self, sim_id: &str) -> Arc<Mutex<()>> {
        lock(&self.locks).entry(sim_id.to_string()).or_default().clone()
    }

    // ---- queue

    /// Queues a task unless an unfinished one with the same kind and payload
    /// exists, in which case that task's id is returned.
    pub fn enqueue(&self, kind: TaskKind, payload: &str) -> Result<Id> {
        let now = self.cat.now();
        self.cat.store.write(|t| {
            if let Some(existing) = t.tasks.values().find(|x| !x.done && x.kind == kind && x.payload == payload) {
                return Ok(existing.id.clone());
            }
            t.task_seq += 1;
            let task = Task {
                id: new_id("t"),
                kind,
                payload: payload.into(),
                attempts: 0,
                next_attempt_at: now,
                lease_until: None,
                done: false,
                last_error: None,
                created_at: now,
                seq: t.task_seq,
            };
            t.tasks.insert(task.id.clone(), task.clone());
            Ok(task.id)
        })
    }

    pub fn task(&self, id: &str) -> Option<Task> {
        self.cat.store.read(|t| t.tasks.get(id).cloned())
    }

    pub fn pending_tasks(&self) -> usize {
        self.cat.store.read(|t| t.tasks.values().filter(|x| !x.done).count())
    }

    /// Takes the oldest due task and hides it from other workers for the
    /// lease period. Counts the attempt.
    pub fn lease(&self) -> Result<Option<Task>> {
        let now = self.cat.now();
        let lease = self.config.lease_secs;
        self.cat.store.write(|t| {
            let due = t
                .tasks
                .values()
                .filter(|x| !x.done && x.next_attempt_at <= now && x.lease_until.is_none_or(|l| l <= now))
                .min_by_key(|x| x.seq)
                .map(|x| x.id.clone());
            Ok(due.map(|id| {
                let x = t.tasks.get_mut(&id).expect("task exists");
                x.lease_until = Some(now + lease);
                x.attempts += 1;
                x.clone()
            }))
        })
    }

    pub fn execute(&self, task: &Task) -> Outcome {
        match task.kind {
            TaskKind::ValidateGeometry => match self.cat.validate_geometry(&task.payload) {
                Ok(_) | Err(Error::NotFound(_)) => Outcome::Done,
                Err(e) => Outcome::Retry(e.to_string()),
            },
            TaskKind::SubmitSimulation => self.submit_simulation(&task.payload),
            TaskKind::CollectResults => self.collect_results(&task.payload),
        }
    }

    /// Records the outcome of an executed task.
    pub fn finish(&self, task: &Task, outcome: Outcome) -> Result<()> {
        let now = self.cat.now();
        let policy = self.config.retry;
        let outcome = match outcome {
            Outcome::Retry(e) if policy.exhausted(task.attempts) => {
                Outcome::Fail(format!("giving up after {} attempts: {e}", task.attempts))
            }
            o => o,
        };
        self.cat.store.write(|t| {
            let x = t.tasks.get_mut(&task.id).ok_or_else(|| Error::not_found(format!("task {}", task.id)))?;
            x.lease_until = None;
            match &outcome {
                Outcome::Done => x.done = true,
                Outcome::Fail(e) => {
                    x.done = true;
                    x.last_error = Some(e.clone());
                }
                Outcome::Retry(e) => {
                    x.last_error = Some(e.clone());
                    x.next_attempt_at = now + policy.delay_after(x.attempts) as f64;
                }
            }
            Ok(())
        })?;
        match &outcome {
            Outcome::Retry(e) => log::warn!("task {} {:?} attempt {} failed: {e}", task.id, task.kind, task.attempts),
            Outcome::Fail(e) => {
                log::error!("task {} {:?} failed: {e}", task.id, task.kind);
                if task.kind == TaskKind::SubmitSimulation {
                    self.fail_submission(&task.payload, e)?;
                }
            }
            Outcome::Done => {}
        }
        Ok(())
    }

    /// Leases, executes and finishes one task. Returns false when nothing
    /// was due.
    pub fn run_once(&self) -> Result<bool> {
        let Some(task) = self.lease()? else { return Ok(false) };
        let outcome = self.execute(&task);
        self.finish(&task, outcome)?;
        Ok(true)
    }

    /// Runs due tasks until none is left.
    pub fn drain(&self) -> Result<usize> {
        let mut n = 0;
        while self.run_once()? {
            n += 1;
        }
        Ok(n)
    }

    // ---- submission

    /// Checks the request and queues the submission.
    pub fn request_submit(&self, user: &User, sim_id: &str) -> Result<Id> {
        let sim = self.cat.get_simulation(user, sim_id)?;
        if !vtank_core::access::can_write(&sim.owner_org_id, &user.orgs()) {
            return Err(Error::NotAuthorized(format!("simulation {sim_id} belongs to another organization")));
        }
        if sim.deleted {
            return Err(Error::Conflict(format!("simulation {sim_id} is deleted")));
        }
        if sim.is_group {
            return Err(Error::Conflict(format!("simulation {sim_id} is a range group header")));
        }
        if sim.status_history.current() != StepCode::CREATED {
            return Err(Error::Conflict(format!("simulation {sim_id} is {}", sim.status().as_str())));
        }
        self.enqueue(TaskKind::SubmitSimulation, sim_id)
    }

    /// Task body: write the inputs to the machine and queue `prepare`.
    /// Adopts a `prepare` job left by an earlier interrupted attempt.
    pub fn submit_simulation(&self, sim_id: &str) -> Outcome {
        let m = self.sim_lock(sim_id);
        let _guard = lock(&m);
        let Ok(sim) = self.cat.simulation(sim_id) else { return Outcome::Done };
        if sim.deleted || sim.is_group || sim.status_history.current() != StepCode::CREATED {
            return Outcome::Done;
        }
        let snap = self.cat.store.snapshot();
        let (Some(machine), Some(setup), Some(geometry)) =
            (snap.machines.get(&sim.machine_id), snap.simsetups.get(&sim.simsetup_id), snap.geometries.get(&sim.geometry_id))
        else {
            return Outcome::Fail("machine, simsetup or geometry record missing".into());
        };
        if !machine.enabled {
            return Outcome::Retry(format!("machine {} is disabled", machine.name));
        }
        let access = match self.connector.connect(machine) {
            Ok(a) => a,
            Err(e) => return machine_err(e),
        };
        let name = prepare_job_name(sim_id);
        let job_id = match access.find_job(&name) {
            Err(e) => return machine_err(e),
            Ok(Some(h)) => {
                log::info!("simulation {sim_id}: adopting existing job {}", h.id);
                h.id
            }
            Ok(None) => {
                let bytes = match self.cat.blobs.get(&geometry.file_ref) {
                    Ok(b) => b,
                    Err(e) => return Outcome::Fail(format!("geometry file: {e}")),
                };
                let inp = build_inp(&sim, setup, machine, geometry, &self.config.callback_base_url);
                match self.write_and_submit(access.as_ref(), machine.scheduler, &sim, &inp, &bytes) {
                    Ok(id) => id,
                    Err(e) => return e,
                }
            }
        };
        let now = self.cat.now();
        let rec = JobRecord {
            id: format!("j-{sim_id}-prepare"),
            sim_id: sim_id.into(),
            machine_id: machine.id.clone(),
            job_name: name,
            scheduler_job_id: job_id.clone(),
            submitted_at: now,
            missing_since: None,
        };
        let res = self.cat.store.write(|t| {
            t.jobs.insert(rec.id.clone(), rec);
            Ok(())
        });
        if let Err(e) = res {
            return Outcome::Retry(e.to_string());
        }
        match self.cat.apply_status(sim_id, StepCode::SUBMITTED, &format!("Submitted as job {job_id}")) {
            Ok(_) => Outcome::Done,
            Err(e) => Outcome::Retry(e.to_string()),
        }
    }

    fn write_and_submit(
        &self,
        access: &dyn MachineAccess,
        scheduler: Scheduler,
        sim: &Simulation,
        inp: &LincosimInp,
        geometry: &[u8],
    ) -> Result<String, Outcome> {
        let rel = format!("sims/{}", sim.id);
        access.write_file(&format!("{rel}/{}", inp.geometry.file), geometry).map_err(machine_err)?;
        access.write_file(&format!("{rel}/{INP_FILE}"), &inp.to_canonical_bytes()).map_err(machine_err)?;
        let workdir = access.sim_dir(&sim.id);
        let command = format!("{} job prepare --scheduler {} .", shell_quote(&self.config.job_exe), scheduler.as_str());
        let script = job_script(scheduler, prepare_job_name(&sim.id), workdir, inp, command);
        if let Err(e) = script.render() {
            return Err(Outcome::Fail(e.to_string()));
        }
        access.submit(&script).map_err(machine_err)
    }

    fn fail_submission(&self, sim_id: &str, message: &str) -> Result<()> {
        let m = self.sim_lock(sim_id);
        let _guard = lock(&m);
        let (applied, sim) = self.cat.apply_status(sim_id, StepCode::error(1), message)?;
        if applied.changed() {
            self.notify_owner(&sim, "error", &format!("Submission of {} failed: {message}", sim.name));
        }
        Ok(())
    }

    fn notify_owner(&self, sim: &Simulation, event: &str, text: &str) {
        let to = self.cat.store.read(|t| t.users.get(&sim.created_by).map(|u| u.login.clone()));
        self.cat.notifier.send(Notification {
            at: self.cat.now(),
            to: to.unwrap_or_else(|| sim.created_by.clone()),
            event: event.into(),
            entity_id: sim.id.clone(),
            text: text.into(),
        });
    }

    // ---- callbacks

    /// Checks the per-simulation callback token.
    pub fn authorize_callback(&self, sim_id: &str, token: &str) -> Result<()> {
        let sim = self.cat.simulation(sim_id).map_err(|_| Error::not_found(format!("UNKNOWN_SIMULATION {sim_id}")))?;
        if sim.callback_token.is_empty() || sim.callback_token != token {
            return Err(Error::Unauthenticated);
        }
        Ok(())
    }

    /// Idempotent status update from a running job.
    pub fn status_callback(&self, sim_id: &str, post: &StatusPost) -> Result<Applied> {
        let step = StepCode::new(post.step).ok_or_else(|| Error::validation(format!("step {} out of range", post.step)))?;
        let m = self.sim_lock(sim_id);
        let _guard = lock(&m);
        let (applied, sim) = self.cat.apply_status(sim_id, step, &post.message)?;
        if !applied.changed() {
            return Ok(applied);
        }
        if step == StepCode::COMPLETED {
            self.enqueue(TaskKind::CollectResults, sim_id)?;
        }
        match post.event.as_deref() {
            Some("start") => self.notify_owner(&sim, "start", &format!("Simulation {} started", sim.name)),
            Some("end") => self.notify_owner(&sim, "end", &format!("Simulation {} ended: {}", sim.name, post.message)),
            _ if step.is_error() => self.notify_owner(&sim, "error", &format!("Simulation {} failed: {}", sim.name, post.message)),
            _ => {}
        }
        Ok(applied)
    }

    // ---- results

    /// Task body: copies a completed simulation's results into the blob
    /// store, checking every digest against the manifest.
    pub fn collect_results(&self, sim_id: &str) -> Outcome {
        let m = self.sim_lock(sim_id);
        let _guard = lock(&m);
        let Ok(sim) = self.cat.simulation(sim_id) else { return Outcome::Done };
        if sim.results_ref.is_some() || sim.status_history.current() != StepCode::COMPLETED {
            return Outcome::Done;
        }
        let Ok(machine) = self.cat.find_machine(&sim.machine_id) else { return Outcome::Fail("machine record missing".into()) };
        let access = match self.connector.connect(&machine) {
            Ok(a) => a,
            Err(e) => return machine_err(e),
        };
        match self.fetch_results(access.as_ref(), &sim) {
            Ok(()) => Outcome::Done,
            Err(e) => Outcome::Retry(e),
        }
    }

    fn fetch_results(&self, access: &dyn MachineAccess, sim: &Simulation) -> Result<(), String> {
        let rel = format!("sims/{}", sim.id);
        let manifest_bytes = access.read_file(&format!("{rel}/{MANIFEST_FILE}")).map_err(|e| e.to_string())?;
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes).map_err(|e| format!("manifest: {e}"))?;
        let mut summary = None;
        for entry in &manifest.files {
            let bytes = access.read_file(&format!("{rel}/{}", entry.path)).map_err(|e| e.to_string())?;
            verify_artifact(entry, &bytes).map_err(|e| e.to_string())?;
            self.cat.blobs.put(&bytes).map_err(|e| e.to_string())?;
            if entry.path == "results/summary.csv" {
                summary = Some(bytes);
            }
        }
        let summary = summary.ok_or("manifest lacks results/summary.csv")?;
        let kpis = kpis_from_summary(&String::from_utf8_lossy(&summary)).map_err(|e| e.to_string())?;
        let manifest_ref = self.cat.blobs.put(&manifest_bytes).map_err(|e| e.to_string())?;
        self.cat.set_results(&sim.id, &manifest_ref, kpis).map_err(|e| e.to_string())?;
        Ok(())
    }

    /// Bytes of one result artifact, e.g. `results/summary.csv`.
    pub fn result_artifact(&self, user: &User, sim_id: &str, artifact: &str) -> Result<Vec<u8>> {
        let sim = self.cat.get_simulation(user, sim_id)?;
        let r = sim.results_ref.ok_or_else(|| Error::not_found(format!("results of {sim_id}")))?;
        let manifest: Manifest = serde_json::from_slice(&self.cat.blobs.get(&r)?)?;
        if artifact == MANIFEST_FILE || artifact == "manifest.json" {
            return Ok(manifest.to_bytes());
        }
        let entry = manifest
            .find(artifact)
            .or_else(|| manifest.find(&format!("results/{artifact}")))
            .ok_or_else(|| Error::not_found(format!("artifact {artifact}")))?;
        Ok(self.cat.blobs.get(&entry.sha256)?)
    }

    // ---- monitoring

    /// Asks each enabled machine about the jobs of its running simulations
    /// and fails simulations whose job has been gone longer than the grace
    /// period.
    pub fn poll_jobs(&self) -> PollReport {
        let snap = self.cat.store.snapshot();
        let mut report = PollReport { handles: Vec::new(), unreachable: Vec::new(), lost: Vec::new() };
        for machine in snap.machines.values().filter(|m| m.enabled) {
            let sims: Vec<&Simulation> = snap
                .simulations
                .values()
                .filter(|s| s.machine_id == machine.id && !s.deleted && !s.is_group)
                .filter(|s| !s.status_history.is_terminal() && s.status_history.current().value() >= 1)
                .collect();
            if sims.is_empty() {
                continue;
            }
            let access = match self.connector.connect(machine) {
                Ok(a) => a,
                Err(e) => {
                    log::warn!("poll: machine {}: {e}", machine.name);
                    report.unreachable.push((machine.id.clone(), e.to_string()));
                    continue;
                }
            };
            for sim in sims {
                match self.poll_sim(access.as_ref(), sim) {
                    Ok((handles, lost)) => {
                        report.handles.extend(handles);
                        if lost {
                            report.lost.push(sim.id.clone());
                        }
                    }
                    Err(e) => {
                        log::warn!("poll: machine {}: {e}", machine.name);
                        report.unreachable.push((machine.id.clone(), e.to_string()));
                        break;
                    }
                }
            }
        }
        report
    }

    fn poll_sim(&self, access: &dyn MachineAccess, sim: &Simulation) -> Result<(Vec<JobHandle>, bool), MachineError> {
        let mut handles = Vec::new();
        for name in [simulate_job_name(&sim.id), prepare_job_name(&sim.id)] {
            if let Some(h) = access.find_job(&name)? {
                handles.push(h);
            }
        }
        let live = handles.iter().any(|h| h.state.is_live());
        let now = self.cat.now();
        let grace = self.config.lost_job_grace_secs;
        let Some(rec) = self.cat.store.read(|t| t.jobs_of(&sim.id).last().map(|j| (*j).clone())) else {
            return Ok((handles, false));
        };
        let missing_since = if live { None } else { Some(rec.missing_since.unwrap_or(now)) };
        if missing_since != rec.missing_since {
            let _ = self.cat.store.write(|t| {
                if let Some(j) = t.jobs.get_mut(&rec.id) {
                    j.missing_since = missing_since;
                }
                Ok(())
            });
        }
        let lost = matches!(missing_since, Some(since) if now - since >= grace);
        if lost {
            let m = self.sim_lock(&sim.id);
            let _guard = lock(&m);
            if let Ok((applied, sim)) = self.cat.apply_status(&sim.id, StepCode::error(6), "job lost") {
                if applied.changed() {
                    self.notify_owner(&sim, "error", &format!("Simulation {} failed: job lost", sim.name));
                }
            }
        }
        Ok((handles, lost))
    }

    /// Liveness of a recorded job, for the consistency check.
    pub fn job_alive(&self, machine: &Machine, job: &JobRecord) -> Option<bool> {
        let access = self.connector.connect(machine).ok()?;
        let state = access.job_state(&job.scheduler_job_id).ok()?;
        Some(state.is_live() || state == JobState::Done)
    }
}
