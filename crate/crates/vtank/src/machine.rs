//! Access to compute machines: file transfer, job submission and job
//! queries. `LOCAL` machines use a spool directory drained by a process
//! pool; PBS and SLURM machines are driven through their command line tools,
//! locally or over ssh.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use vtank_core::jobscript::{JobScript, Scheduler};

use crate::inp::LincosimInp;
use crate::model::Machine;
use crate::pipeline::SimulateSubmitter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Unknown,
}

impl JobState {
    pub fn is_live(self) -> bool {
        matches!(self, JobState::Queued | JobState::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobHandle {
    pub id: String,
    pub name: String,
    pub machine_id: String,
    pub state: JobState,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MachineError {
    #[error("machine unreachable: {0}")]
    Unreachable(String),
    #[error("{0}")]
    Failed(String),
}

pub trait MachineAccess: Send + Sync {
    /// `rel` is relative to the machine root folder.
    fn write_file(&self, rel: &str, bytes: &[u8]) -> Result<(), MachineError>;
    fn read_file(&self, rel: &str) -> Result<Vec<u8>, MachineError>;
    /// Returns the scheduler job id.
    fn submit(&self, script: &JobScript) -> Result<String, MachineError>;
    /// Most recent job with this name, in any state the scheduler still knows.
    fn find_job(&self, name: &str) -> Result<Option<JobHandle>, MachineError>;
    fn job_state(&self, id: &str) -> Result<JobState, MachineError>;
    /// Absolute workdir of a simulation on the machine.
    fn sim_dir(&self, sim_id: &str) -> String;
}

pub trait Connector: Send + Sync {
    fn connect(&self, machine: &Machine) -> Result<Arc<dyn MachineAccess>, MachineError>;
}

pub fn is_local_address(address: &str) -> bool {
    matches!(address, "" | "local" | "localhost" | "127.0.0.1")
}

/// Connects local addresses directly and everything else through ssh.
pub struct DefaultConnector;

impl Connector for DefaultConnector {
    fn connect(&self, m: &Machine) -> Result<Arc<dyn MachineAccess>, MachineError> {
        let local = is_local_address(&m.address);
        Ok(match (local, m.scheduler) {
            (true, Scheduler::Local) => Arc::new(LocalMachine::new(&m.root_folder, &m.id)),
            (true, s) => Arc::new(ShellMachine { machine_id: m.id.clone(), root: m.root_folder.clone(), shell: Shell::Local, scheduler: s }),
            (false, s) => Arc::new(ShellMachine {
                machine_id: m.id.clone(),
                root: m.root_folder.clone(),
                shell: Shell::Ssh { target: if m.username.is_empty() { m.address.clone() } else { format!("{}@{}", m.username, m.address) } },
                scheduler: s,
            }),
        })
    }
}

pub fn shell_quote(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_./:=@%+,".contains(c)) {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

fn io_err(e: impl std::fmt::Display) -> MachineError {
    MachineError::Failed(e.to_string())
}

fn check_rel(rel: &str) -> Result<(), MachineError> {
    if rel.is_empty() || rel.starts_with('/') || rel.split('/').any(|c| c == "..") {
        return Err(MachineError::Failed(format!("invalid machine path {rel:?}")));
    }
    Ok(())
}

// ---- spool

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpoolJob {
    pub id: String,
    pub name: String,
    pub workdir: String,
    pub script: String,
}

const SPOOL_STATES: [(&str, JobState); 4] =
    [("pending", JobState::Queued), ("running", JobState::Running), ("done", JobState::Done), ("failed", JobState::Failed)];

/// FIFO job queue in `<root>/queue/{pending,running,done,failed}`. Workers
/// claim a job by renaming it from `pending` to `running`.
#[derive(Debug, Clone)]
pub struct Spool {
    root: PathBuf,
}

impl Spool {
    pub fn new(machine_root: impl Into<PathBuf>) -> Self {
        Self { root: machine_root.into().join("queue") }
    }

    fn dir(&self, state: &str) -> PathBuf {
        self.root.join(state)
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.root.join("logs").join(format!("{id}.log"))
    }

    pub fn enqueue(&self, script: &JobScript) -> Result<String, MachineError> {
        let text = script.render().map_err(io_err)?;
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        let id = format!("{nanos:020}-{}", uuid::Uuid::new_v4().simple());
        let job = SpoolJob { id: id.clone(), name: script.name.clone(), workdir: script.workdir.clone(), script: text };
        let pending = self.dir("pending");
        fs::create_dir_all(&pending).map_err(io_err)?;
        let tmp = self.root.join(format!(".{id}.tmp"));
        fs::write(&tmp, serde_json::to_vec(&job).map_err(io_err)?).map_err(io_err)?;
        fs::rename(&tmp, pending.join(format!("{id}.json"))).map_err(io_err)?;
        Ok(id)
    }

    fn jobs_in(&self, state: &str) -> Vec<(String, PathBuf)> {
        let Ok(rd) = fs::read_dir(self.dir(state)) else { return Vec::new() };
        let mut v: Vec<_> = rd
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".json").map(|id| (id.to_string(), e.path()))
            })
            .collect();
        v.sort();
        v
    }

    fn load(path: &Path) -> Option<SpoolJob> {
        serde_json::from_slice(&fs::read(path).ok()?).ok()
    }

    pub fn state(&self, id: &str) -> JobState {
        SPOOL_STATES
            .iter()
            .find(|(dir, _)| self.dir(dir).join(format!("{id}.json")).is_file())
            .map_or(JobState::Unknown, |(_, s)| *s)
    }

    pub fn find(&self, name: &str) -> Option<(SpoolJob, JobState)> {
        let mut best: Option<(SpoolJob, JobState)> = None;
        for (dir, state) in SPOOL_STATES {
            for (_, path) in self.jobs_in(dir) {
                if let Some(job) = Self::load(&path).filter(|j| j.name == name) {
                    if best.as_ref().is_none_or(|(b, _)| job.id > b.id) {
                        best = Some((job, state));
                    }
                }
            }
        }
        best
    }

    /// Claims and runs the oldest pending job. Returns its id, or `None` when
    /// the queue is empty.
    pub fn run_next(&self) -> Option<String> {
        for (id, path) in self.jobs_in("pending") {
            let running = self.dir("running").join(format!("{id}.json"));
            if fs::create_dir_all(self.dir("running")).is_err() || fs::rename(&path, &running).is_err() {
                continue;
            }
            let ok = Self::load(&running).is_some_and(|job| self.execute(&job));
            let dest = self.dir(if ok { "done" } else { "failed" });
            if let Err(e) = fs::create_dir_all(&dest).and_then(|_| fs::rename(&running, dest.join(format!("{id}.json")))) {
                log::error!("spool job {id}: {e}");
            }
            return Some(id);
        }
        None
    }

    fn execute(&self, job: &SpoolJob) -> bool {
        let scripts = self.root.join("scripts");
        let logs = self.root.join("logs");
        let script = scripts.join(format!("{}.sh", job.id));
        let res = fs::create_dir_all(&scripts)
            .and_then(|_| fs::create_dir_all(&logs))
            .and_then(|_| fs::write(&script, &job.script))
            .and_then(|_| fs::File::create(self.log_path(&job.id)))
            .and_then(|log| {
                let err = log.try_clone()?;
                Command::new("sh").arg(&script).stdin(Stdio::null()).stdout(log).stderr(err).status()
            });
        match res {
            Ok(st) if st.success() => true,
            Ok(st) => {
                log::warn!("job {} ({}) exited with {st}", job.id, job.name);
                false
            }
            Err(e) => {
                log::error!("job {} ({}): {e}", job.id, job.name);
                false
            }
        }
    }
}

/// Drains a spool with `workers` threads until `stop` is set.
pub fn spawn_runners(spool: Spool, workers: usize, idle: Duration, stop: Arc<AtomicBool>) -> Vec<JoinHandle<()>> {
    (0..workers.max(1))
        .map(|_| {
            let spool = spool.clone();
            let stop = stop.clone();
            std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    if spool.run_next().is_none() {
                        std::thread::sleep(idle);
                    }
                }
            })
        })
        .collect()
}

// ---- local machine

pub struct LocalMachine {
    root: PathBuf,
    machine_id: String,
    spool: Spool,
}

impl LocalMachine {
    pub fn new(root: impl Into<PathBuf>, machine_id: &str) -> Self {
        let root = root.into();
        Self { spool: Spool::new(&root), root, machine_id: machine_id.into() }
    }

    pub fn spool(&self) -> &Spool {
        &self.spool
    }
}

impl MachineAccess for LocalMachine {
    fn write_file(&self, rel: &str, bytes: &[u8]) -> Result<(), MachineError> {
        check_rel(rel)?;
        let path = self.root.join(rel);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p).map_err(io_err)?;
        }
        let tmp = path.with_extension("part");
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)
    }

    fn read_file(&self, rel: &str) -> Result<Vec<u8>, MachineError> {
        check_rel(rel)?;
        fs::read(self.root.join(rel)).map_err(|e| MachineError::Failed(format!("{rel}: {e}")))
    }

    fn submit(&self, script: &JobScript) -> Result<String, MachineError> {
        self.spool.enqueue(script)
    }

    fn find_job(&self, name: &str) -> Result<Option<JobHandle>, MachineError> {
        Ok(self.spool.find(name).map(|(j, state)| JobHandle { id: j.id, name: j.name, machine_id: self.machine_id.clone(), state }))
    }

    fn job_state(&self, id: &str) -> Result<JobState, MachineError> {
        Ok(self.spool.state(id))
    }

    fn sim_dir(&self, sim_id: &str) -> String {
        self.root.join("sims").join(sim_id).to_string_lossy().into_owned()
    }
}

// ---- PBS / SLURM

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shell {
    Local,
    Ssh { target: String },
}

impl Shell {
    pub fn run(&self, cmd: &str, stdin: Option<&[u8]>) -> Result<String, MachineError> {
        let mut c = match self {
            Shell::Local => {
                let mut c = Command::new("sh");
                c.arg("-c").arg(cmd);
                c
            }
            Shell::Ssh { target } => {
                let mut c = Command::new("ssh");
                c.args(["-o", "BatchMode=yes", "-o", "ConnectTimeout=10", target.as_str(), cmd]);
                c
            }
        };
        c.stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() }).stdout(Stdio::piped()).stderr(Stdio::piped());
        let mut child = c.spawn().map_err(|e| MachineError::Unreachable(e.to_string()))?;
        if let (Some(data), Some(mut pipe)) = (stdin, child.stdin.take()) {
            pipe.write_all(data).map_err(io_err)?;
        }
        let out = child.wait_with_output().map_err(io_err)?;
        let stderr = String::from_utf8_lossy(&out.stderr).trim().to_string();
        match out.status.code() {
            Some(0) => Ok(String::from_utf8_lossy(&out.stdout).into_owned()),
            Some(255) if matches!(self, Shell::Ssh { .. }) => Err(MachineError::Unreachable(stderr)),
            _ => Err(MachineError::Failed(format!("`{cmd}`: {stderr}"))),
        }
    }
}

/// Job id printed by `sbatch` ("Submitted batch job 123") or `qsub`.
pub fn parse_submit_output(scheduler: Scheduler, out: &str) -> Result<String, MachineError> {
    let id = match scheduler {
        Scheduler::Slurm => out.split_whitespace().last(),
        _ => out.lines().map(str::trim).find(|l| !l.is_empty()),
    };
    id.filter(|s| !s.is_empty()).map(str::to_string).ok_or_else(|| MachineError::Failed(format!("unexpected submit output {out:?}")))
}

pub fn parse_slurm_state(s: &str) -> JobState {
    match s.trim() {
        "PENDING" | "CONFIGURING" | "REQUEUED" | "SUSPENDED" => JobState::Queued,
        "RUNNING" | "COMPLETING" => JobState::Running,
        "COMPLETED" => JobState::Done,
        "" => JobState::Unknown,
        _ => JobState::Failed,
    }
}

pub fn parse_pbs_state(qstat_f: &str) -> JobState {
    let state = qstat_f.lines().find_map(|l| l.trim().strip_prefix("job_state = ")).map(str::trim);
    match state {
        Some("Q" | "H" | "W" | "T") => JobState::Queued,
        Some("R" | "E" | "B") => JobState::Running,
        Some("F" | "X") => JobState::Done,
        _ => JobState::Unknown,
    }
}

pub struct ShellMachine {
    pub machine_id: String,
    pub root: String,
    pub shell: Shell,
    pub scheduler: Scheduler,
}

impl ShellMachine {
    fn path(&self, rel: &str) -> Result<String, MachineError> {
        check_rel(rel)?;
        Ok(format!("{}/{rel}", self.root.trim_end_matches('/')))
    }

    fn spool_find(&self, name: &str) -> Result<Option<JobHandle>, MachineError> {
        let pattern = format!("\"name\":\"{name}\"");
        let cmd = format!("grep -l -F {} {}/queue/*/*.json 2>/dev/null || true", shell_quote(&pattern), shell_quote(&self.root));
        let out = self.shell.run(&cmd, None)?;
        let best = out.lines().filter_map(spool_entry).max_by(|a, b| a.0.cmp(&b.0));
        Ok(best.map(|(id, state)| JobHandle { id, name: name.into(), machine_id: self.machine_id.clone(), state }))
    }
}

/// `<root>/queue/<state>/<id>.json` → (id, state).
fn spool_entry(path: &str) -> Option<(String, JobState)> {
    let mut parts = path.trim().rsplit('/');
    let id = parts.next()?.strip_suffix(".json")?.to_string();
    let dir = parts.next()?;
    SPOOL_STATES.iter().find(|(d, _)| *d == dir).map(|(_, s)| (id, *s))
}

impl MachineAccess for ShellMachine {
    fn write_file(&self, rel: &str, bytes: &[u8]) -> Result<(), MachineError> {
        let p = self.path(rel)?;
        let dir = p.rsplit_once('/').map_or(".", |(d, _)| d);
        self.shell.run(&format!("mkdir -p {} && cat > {}", shell_quote(dir), shell_quote(&p)), Some(bytes)).map(|_| ())
    }

    fn read_file(&self, rel: &str) -> Result<Vec<u8>, MachineError> {
        let p = self.path(rel)?;
        self.shell.run(&format!("cat {}", shell_quote(&p)), None).map(String::into_bytes)
    }

    fn submit(&self, script: &JobScript) -> Result<String, MachineError> {
        let text = script.render().map_err(io_err)?;
        if self.scheduler == Scheduler::Local {
            // The remote side runs `vtank worker` on its spool.
            let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
            let id = format!("{nanos:020}-{}", uuid::Uuid::new_v4().simple());
            let job = SpoolJob { id: id.clone(), name: script.name.clone(), workdir: script.workdir.clone(), script: text };
            self.write_file(&format!("queue/pending/{id}.json"), &serde_json::to_vec(&job).map_err(io_err)?)?;
            return Ok(id);
        }
        let file = format!("{}/{}.job", script.workdir, script.name);
        self.shell.run(&format!("mkdir -p {0} && cat > {1}", shell_quote(&script.workdir), shell_quote(&file)), Some(text.as_bytes()))?;
        let tool = if self.scheduler == Scheduler::Slurm { "sbatch" } else { "qsub" };
        let out = self.shell.run(&format!("cd {} && {tool} {}", shell_quote(&script.workdir), shell_quote(&file)), None)?;
        parse_submit_output(self.scheduler, &out)
    }

    fn find_job(&self, name: &str) -> Result<Option<JobHandle>, MachineError> {
        let ids = match self.scheduler {
            Scheduler::Local => return self.spool_find(name),
            Scheduler::Slurm => self.shell.run(&format!("squeue -h -n {} -o %i", shell_quote(name)), None)?,
            Scheduler::Pbs => self.shell.run(&format!("qselect -N {}", shell_quote(name)), None)?,
        };
        let Some(id) = ids.lines().map(str::trim).filter(|l| !l.is_empty()).last() else { return Ok(None) };
        let state = self.job_state(id)?;
        Ok(Some(JobHandle { id: id.into(), name: name.into(), machine_id: self.machine_id.clone(), state }))
    }

    fn job_state(&self, id: &str) -> Result<JobState, MachineError> {
        match self.scheduler {
            Scheduler::Local => {
                let out = self.shell.run(&format!("ls {}/queue/*/{}.json 2>/dev/null || true", shell_quote(&self.root), shell_quote(id)), None)?;
                Ok(out.lines().find_map(spool_entry).map_or(JobState::Unknown, |(_, s)| s))
            }
            Scheduler::Slurm => Ok(parse_slurm_state(&self.shell.run(&format!("squeue -h -j {} -o %T 2>/dev/null || true", shell_quote(id)), None)?)),
            Scheduler::Pbs => Ok(parse_pbs_state(&self.shell.run(&format!("qstat -f {} 2>/dev/null || true", shell_quote(id)), None)?)),
        }
    }

    fn sim_dir(&self, sim_id: &str) -> String {
        format!("{}/sims/{sim_id}", self.root.trim_end_matches('/'))
    }
}

// ---- job scripts for the two pipeline jobs

pub fn prepare_job_name(sim_id: &str) -> String {
    format!("prepare-{sim_id}")
}

pub fn simulate_job_name(sim_id: &str) -> String {
    format!("simulate-{sim_id}")
}

pub fn job_script(scheduler: Scheduler, name: String, workdir: String, inp: &LincosimInp, command: String) -> JobScript {
    JobScript {
        scheduler,
        name,
        nodes: inp.machine.nodes,
        tasks_per_node: inp.machine.tasks_per_node,
        walltime: inp.machine.walltime,
        workdir,
        body: vec![command],
    }
}

/// Used by the `prepare` job to queue `simulate` on the machine it runs on.
pub struct SchedulerSubmitter {
    pub scheduler: Scheduler,
    pub exe: String,
    pub machine_root: PathBuf,
}

impl SimulateSubmitter for SchedulerSubmitter {
    fn submit_simulate(&self, workdir: &Path, inp: &LincosimInp) -> Result<String, String> {
        let workdir = workdir.to_string_lossy().into_owned();
        let command = format!("{} job simulate --scheduler {} .", shell_quote(&self.exe), self.scheduler.as_str());
        let script = job_script(self.scheduler, simulate_job_name(&inp.simulation.id), workdir, inp, command);
        let access: Box<dyn MachineAccess> = match self.scheduler {
            Scheduler::Local => Box::new(LocalMachine::new(&self.machine_root, "")),
            s => Box::new(ShellMachine { machine_id: String::new(), root: self.machine_root.to_string_lossy().into_owned(), shell: Shell::Local, scheduler: s }),
        };
        access.submit(&script).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(name: &str, workdir: &Path, body: &str) -> JobScript {
        JobScript {
            scheduler: Scheduler::Local,
            name: name.into(),
            nodes: 1,
            tasks_per_node: 1,
            walltime: 60,
            workdir: workdir.to_string_lossy().into_owned(),
            body: vec![body.into()],
        }
    }

    #[test]
    fn spool_runs_fifo_and_tracks_state() {
        let dir = tempfile::tempdir().unwrap();
        let m = LocalMachine::new(dir.path(), "m1");
        let a = m.submit(&script("a", dir.path(), "echo a >> order.txt")).unwrap();
        let b = m.submit(&script("b", dir.path(), "exit 3")).unwrap();
        assert_eq!(m.job_state(&a).unwrap(), JobState::Queued);
        assert_eq!(m.find_job("b").unwrap().unwrap().id, b);
        assert_eq!(m.spool().run_next().as_deref(), Some(a.as_str()));
        assert_eq!(m.spool().run_next().as_deref(), Some(b.as_str()));
        assert!(m.spool().run_next().is_none());
        assert_eq!(m.job_state(&a).unwrap(), JobState::Done);
        assert_eq!(m.job_state(&b).unwrap(), JobState::Failed);
        assert_eq!(fs::read_to_string(dir.path().join("order.txt")).unwrap(), "a\n");
        assert!(m.find_job("c").unwrap().is_none());
    }

    #[test]
    fn files_stay_under_root() {
        let dir = tempfile::tempdir().unwrap();
        let m = LocalMachine::new(dir.path(), "m1");
        m.write_file("sims/x/a.txt", b"hi").unwrap();
        assert_eq!(m.read_file("sims/x/a.txt").unwrap(), b"hi");
        assert!(m.write_file("../escape", b"").is_err());
        assert!(m.read_file("/etc/passwd").is_err());
    }

    #[test]
    fn shell_machine_over_local_shell_uses_spool_layout() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_string_lossy().into_owned();
        let m = ShellMachine { machine_id: "m".into(), root, shell: Shell::Local, scheduler: Scheduler::Local };
        let id = m.submit(&script("job-x", dir.path(), "true")).unwrap();
        let h = m.find_job("job-x").unwrap().unwrap();
        assert_eq!((h.id.as_str(), h.state), (id.as_str(), JobState::Queued));
        Spool::new(dir.path()).run_next();
        assert_eq!(m.job_state(&id).unwrap(), JobState::Done);
        m.write_file("sims/s/f.bin", &[0, 1, 2]).unwrap();
        assert_eq!(m.read_file("sims/s/f.bin").unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn scheduler_output_parsing() {
        assert_eq!(parse_submit_output(Scheduler::Slurm, "Submitted batch job 4242\n").unwrap(), "4242");
        assert_eq!(parse_submit_output(Scheduler::Pbs, "17.pbs-server\n").unwrap(), "17.pbs-server");
        assert!(parse_submit_output(Scheduler::Slurm, "").is_err());
        assert_eq!(parse_slurm_state("RUNNING\n"), JobState::Running);
        assert_eq!(parse_slurm_state("PENDING"), JobState::Queued);
        assert_eq!(parse_pbs_state("Job Id: 1\n    job_state = R\n"), JobState::Running);
        assert_eq!(parse_pbs_state(""), JobState::Unknown);
    }

    #[test]
    fn quoting() {
        assert_eq!(shell_quote("/a/b-c"), "/a/b-c");
        assert_eq!(shell_quote("it's"), r"'it'\''s'");
        assert_eq!(shell_quote(""), "''");
    }
}
