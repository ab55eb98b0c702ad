//! Shared fixtures: an in-memory catalogue on a manual clock, a scripted
//! cluster that can drop, lose and delay jobs, and helpers to run a job's
//! pipeline in-process.
#![allow(dead_code)]

pub mod faults;
pub mod records;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use vtank::blobs::BlobStore;
use vtank::catalogue::{Catalogue, NewMachine, NewSimSetup, NewSimulation};
use vtank::clock::ManualClock;
use vtank::machine::{Connector, JobHandle, JobState, MachineAccess, MachineError};
use vtank::model::{Geometry, Machine, Organization, SimSetup, Simulation, User};
use vtank::notify::Notifier;
use vtank::orchestrator::{Orchestrator, OrchestratorConfig};
use vtank::pipeline::{run_prepare, run_simulate, NoSubmit, RecordingSink, StatusPost};
use vtank::store::Store;
use vtank_core::access::Visibility;
use vtank_core::jobscript::{JobScript, Scheduler};
use vtank_core::mesh::shapes::box_mesh;
use vtank_core::mesh::write_binary_stl;
use vtank_core::{DofMode, PhysicalParameters, Vec3};

pub const T0: f64 = 1_700_000_000.0;

pub fn cube_stl() -> Vec<u8> {
    write_binary_stl(&box_mesh(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)))
}

pub fn cube_params(velocity: f64) -> PhysicalParameters {
    PhysicalParameters {
        mass: 500.0,
        cog: Vec3::new(0.5, 0.5, 0.25),
        velocity,
        water_temperature: 15.0,
        inertia_diag: [1.0; 3],
        water_z: 0.5,
        wave_height: 0.0,
        trim_angle: 0.0,
    }
}

/// Cluster double. Files live under a real directory so jobs can run the
/// pipeline against them; the scheduler is a list of handles.
#[derive(Default)]
pub struct FakeCluster {
    pub root: PathBuf,
    pub jobs: Mutex<Vec<(JobHandle, JobScript)>>,
    /// Every connect and every operation fails while set.
    pub down: AtomicBool,
    /// The next n operations fail, then the cluster recovers.
    pub flaky_ops: AtomicU32,
    /// The next submit is accepted but its reply is lost.
    pub lose_submit_reply: AtomicBool,
    pub submits: AtomicUsize,
    seq: AtomicUsize,
}

impl FakeCluster {
    pub fn new(root: &Path) -> Arc<Self> {
        Arc::new(Self { root: root.to_path_buf(), ..Self::default() })
    }

    fn gate(&self) -> Result<(), MachineError> {
        if self.down.load(Ordering::SeqCst) {
            return Err(MachineError::Unreachable("cluster down".into()));
        }
        if self.flaky_ops.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok() {
            return Err(MachineError::Unreachable("connection reset".into()));
        }
        Ok(())
    }

    pub fn jobs_named(&self, name: &str) -> usize {
        self.jobs.lock().unwrap().iter().filter(|(h, _)| h.name == name).count()
    }

    pub fn set_state(&self, name: &str, state: JobState) {
        for (h, _) in self.jobs.lock().unwrap().iter_mut().filter(|(h, _)| h.name == name) {
            h.state = state;
        }
    }

    /// The scheduler forgets the job, as after a node crash.
    pub fn forget(&self, name: &str) {
        self.jobs.lock().unwrap().retain(|(h, _)| h.name != name);
    }

    pub fn add_job(&self, name: &str, state: JobState) {
        let id = format!("fake.{}", self.seq.fetch_add(1, Ordering::SeqCst));
        let script = JobScript {
            scheduler: Scheduler::Slurm,
            name: name.into(),
            nodes: 1,
            tasks_per_node: 1,
            walltime: 60,
            workdir: String::new(),
            body: Vec::new(),
        };
        self.jobs.lock().unwrap().push((JobHandle { id, name: name.into(), machine_id: "m".into(), state }, script));
    }
}

impl MachineAccess for FakeCluster {
    fn write_file(&self, rel: &str, bytes: &[u8]) -> Result<(), MachineError> {
        self.gate()?;
        let p = self.root.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, bytes).map_err(|e| MachineError::Failed(e.to_string()))
    }

    fn read_file(&self, rel: &str) -> Result<Vec<u8>, MachineError> {
        self.gate()?;
        std::fs::read(self.root.join(rel)).map_err(|e| MachineError::Failed(e.to_string()))
    }

    fn submit(&self, script: &JobScript) -> Result<String, MachineError> {
        self.gate()?;
        self.submits.fetch_add(1, Ordering::SeqCst);
        let id = format!("fake.{}", self.seq.fetch_add(1, Ordering::SeqCst));
        let h = JobHandle { id: id.clone(), name: script.name.clone(), machine_id: "m".into(), state: JobState::Queued };
        self.jobs.lock().unwrap().push((h, script.clone()));
        if self.lose_submit_reply.swap(false, Ordering::SeqCst) {
            return Err(MachineError::Unreachable("reply lost".into()));
        }
        Ok(id)
    }

    fn find_job(&self, name: &str) -> Result<Option<JobHandle>, MachineError> {
        self.gate()?;
        Ok(self.jobs.lock().unwrap().iter().rev().find(|(h, _)| h.name == name).map(|(h, _)| h.clone()))
    }

    fn job_state(&self, id: &str) -> Result<JobState, MachineError> {
        self.gate()?;
        Ok(self.jobs.lock().unwrap().iter().find(|(h, _)| h.id == id).map(|(h, _)| h.state).unwrap_or(JobState::Unknown))
    }

    fn sim_dir(&self, sim_id: &str) -> String {
        self.root.join("sims").join(sim_id).to_string_lossy().into_owned()
    }
}

pub struct FakeConnector(pub Arc<FakeCluster>);

impl Connector for FakeConnector {
    fn connect(&self, _: &Machine) -> Result<Arc<dyn MachineAccess>, MachineError> {
        if self.0.down.load(Ordering::SeqCst) {
            return Err(MachineError::Unreachable("cluster down".into()));
        }
        Ok(self.0.clone())
    }
}

pub struct World {
    pub dir: tempfile::TempDir,
    pub clock: ManualClock,
    pub cat: Arc<Catalogue>,
    pub orch: Orchestrator,
    pub cluster: Arc<FakeCluster>,
    pub admin: User,
    pub alice: User,
    pub bob: User,
    pub org_a: Organization,
    pub org_b: Organization,
    pub machine: Machine,
    pub setup: SimSetup,
    pub geometry: Geometry,
}

impl World {
    pub fn new() -> Self {
        Self::with_store(Store::in_memory())
    }

    pub fn with_store(store: Store) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(T0);
        let cat = Arc::new(Catalogue::new(
            Arc::new(store),
            BlobStore::new(dir.path().join("blobs")),
            Arc::new(clock.clone()),
            Arc::new(Notifier::in_memory()),
        ));
        let cluster = FakeCluster::new(&dir.path().join("cluster"));
        let orch = Orchestrator::new(cat.clone(), Arc::new(FakeConnector(cluster.clone())), OrchestratorConfig::default());
        let sys = User::system();
        let admin = user(&cat, "admin", true);
        let alice = user(&cat, "alice", false);
        let bob = user(&cat, "bob", false);
        let org_a = cat.create_org(&sys, "org-a").unwrap();
        let org_b = cat.create_org(&sys, "org-b").unwrap();
        cat.add_member(&sys, &org_a.id, &alice.id).unwrap();
        cat.add_member(&sys, &org_b.id, &bob.id).unwrap();
        cat.add_member(&sys, &org_a.id, &admin.id).unwrap();
        let machine = cat
            .add_machine(
                &sys,
                NewMachine {
                    name: "hpc".into(),
                    address: "hpc.example.org".into(),
                    root_folder: "/scratch/vtank".into(),
                    username: "sim".into(),
                    scheduler: Scheduler::Slurm,
                    nodes_default: 1,
                    tasks_per_node: 4,
                    walltime: 3600,
                },
            )
            .unwrap();
        let machine = cat.set_machine_enabled(&sys, &machine.id, true).unwrap();
        let setup = cat
            .add_simsetup(
                &sys,
                NewSimSetup {
                    name: "reference-1dof".into(),
                    dof_mode: DofMode::Sink1Dof,
                    default_parameters: BTreeMap::new(),
                    statuses_dictionary: BTreeMap::new(),
                    supported_machine_ids: [machine.id.clone()].into(),
                    build_script_ref: "builtin:reference".into(),
                },
            )
            .unwrap();
        for org in [&org_a, &org_b] {
            cat.grant_machine(&sys, &org.id, &machine.id).unwrap();
            cat.grant_simsetup(&sys, &org.id, &setup.id).unwrap();
        }
        let alice = cat.find_user(&alice.id).unwrap();
        let bob = cat.find_user(&bob.id).unwrap();
        let admin = cat.find_user(&admin.id).unwrap();
        let geometry = cat.create_geometry(&alice, &org_a.id, "cube", "cube.stl", &cube_stl()).unwrap();
        let geometry = cat.validate_geometry(&geometry.id).unwrap();
        Self { dir, clock, cat, orch, cluster, admin, alice, bob, org_a, org_b, machine, setup, geometry }
    }

    pub fn new_sim(&self, name: &str, velocity: f64) -> Simulation {
        self.new_sim_as(&self.alice, &self.org_a.id, &self.geometry.id, name, velocity, Visibility::Private)
    }

    pub fn new_sim_as(&self, u: &User, org: &str, geo: &str, name: &str, velocity: f64, visibility: Visibility) -> Simulation {
        let basic = NewSimulation {
            name: name.into(),
            org_id: org.into(),
            simsetup_id: self.setup.id.clone(),
            machine_id: self.machine.id.clone(),
            geometry_id: geo.into(),
            visibility,
            nodes: None,
        };
        self.cat.create_simulation(u, basic, cube_params(velocity)).unwrap()
    }

    pub fn sim(&self, id: &str) -> Simulation {
        self.cat.simulation(id).unwrap()
    }

    pub fn workdir(&self, sim_id: &str) -> PathBuf {
        self.cluster.root.join("sims").join(sim_id)
    }

    /// Runs prepare and simulate in-process on the cluster files and
    /// returns what the job would have posted.
    pub fn run_job(&self, sim_id: &str) -> Vec<StatusPost> {
        let sink = RecordingSink::default();
        let wd = self.workdir(sim_id);
        if run_prepare(&wd, &self.cluster.root, &sink, &NoSubmit).is_ok() {
            self.cluster.add_job(&format!("simulate-{sim_id}"), JobState::Running);
            let _ = run_simulate(&wd, &self.cluster.root, &sink);
        }
        let posts = sink.posts.lock().unwrap().clone();
        posts
    }
}

fn user(cat: &Catalogue, login: &str, admin: bool) -> User {
    let u = cat.register_user(login, login, "pw").unwrap();
    cat.approve_user(&User::system(), &u.id, admin).unwrap()
}

impl World {
    pub fn clock_now(&self) -> f64 {
        vtank::clock::Clock::now(&self.clock)
    }
}

/// Wetted area and drag of the 1 m cube at `draft`, computed by hand:
/// bottom plus four sides, ITTC-1957 friction with form factor 1.2.
pub fn cube_oracle(velocity: f64, draft: f64) -> (f64, f64) {
    let f = vtank_core::fluid::fluid_properties(15.0).unwrap();
    let wsa = 1.0 + 4.0 * draft;
    if velocity == 0.0 {
        return (wsa, 0.0);
    }
    let re = velocity / f.nu;
    let cf = 0.075 / (re.log10() - 2.0).powi(2);
    (wsa, 0.5 * f.rho * velocity * velocity * wsa * cf * 1.2)
}

pub fn free_draft() -> f64 {
    500.0 / vtank_core::fluid::fluid_properties(15.0).unwrap().rho
}
