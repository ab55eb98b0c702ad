//! Command line: service, administration, headless runs, checks and the
//! job entry points executed on machines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use vtank_core::jobscript::Scheduler;
use vtank_core::mesh::{parse_mesh, WatertightMesh};
use vtank_core::DofMode;

use crate::api;
use crate::blobs::sha256_hex;
use crate::catalogue::{NewMachine, NewSimSetup};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::inp::{InpCallbacks, InpGeometry, InpMachine, InpPhysics, InpSimulation, LincosimInp, INP_FILE};
use crate::machine::{spawn_runners, SchedulerSubmitter, Spool};
use crate::model::{User, REFERENCE_SETUP};
use crate::pipeline::{run_prepare, run_simulate, sink_for, FileSink, NoSubmit, StepFailure};
use crate::service::App;
use crate::setup::read_inp;

#[derive(Debug, Parser)]
#[command(name = "vtank", version, about = "Virtual towing tank service and tools")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "VTANK_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the configured data directory.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start the web service and its background workers.
    Serve {
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    #[command(subcommand)]
    Admin(Admin),
    /// Run the full pipeline on one hull without the service and print
    /// `summary.csv`.
    Run(RunArgs),
    #[command(subcommand)]
    Check(Check),
    /// One-shot health report for cron.
    Monitor,
    /// Drain the job spool of a local machine.
    Worker {
        #[arg(long)]
        machine_root: PathBuf,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        /// Run queued jobs and exit.
        #[arg(long)]
        once: bool,
    },
    #[command(subcommand, hide = true)]
    Job(Job),
}

#[derive(Debug, Subcommand)]
pub enum Admin {
    #[command(subcommand)]
    Org(OrgCmd),
    #[command(subcommand)]
    Machine(MachineCmd),
    #[command(subcommand)]
    Simsetup(SimSetupCmd),
    #[command(subcommand)]
    User(UserCmd),
}

#[derive(Debug, Subcommand)]
pub enum OrgCmd {
    Create { name: String },
    /// Grant a machine or simsetup to an organization, or add a member.
    Grant {
        org: String,
        #[arg(long)]
        machine: Option<String>,
        #[arg(long)]
        simsetup: Option<String>,
        #[arg(long)]
        user: Option<String>,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum MachineCmd {
    /// Register a machine. New machines are disabled.
    Add {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "localhost")]
        address: String,
        #[arg(long)]
        root: String,
        #[arg(long, default_value = "")]
        username: String,
        #[arg(long, value_parser = parse_scheduler)]
        scheduler: Scheduler,
        #[arg(long, default_value_t = 1)]
        nodes: u32,
        #[arg(long, default_value_t = 1)]
        tasks_per_node: u32,
        /// Seconds.
        #[arg(long, default_value_t = 3600)]
        walltime: u64,
    },
    Enable { machine: String },
    Disable { machine: String },
    List,
}

#[derive(Debug, Subcommand)]
pub enum SimSetupCmd {
    Add {
        #[arg(long)]
        name: String,
        /// Degrees of freedom: 0, 1 or 2.
        #[arg(long, value_parser = parse_dof)]
        dof: DofMode,
        /// `builtin:reference` or a directory with `build_prepare` and `run`.
        #[arg(long, default_value = REFERENCE_SETUP)]
        build_script: String,
        /// Supported machine, by name or id. Repeatable.
        #[arg(long = "machine")]
        machines: Vec<String>,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum UserCmd {
    /// Register and approve a user.
    Create {
        login: String,
        #[arg(long)]
        password: String,
        #[arg(long, default_value = "")]
        display_name: String,
        #[arg(long)]
        admin: bool,
    },
    Approve {
        user: String,
        #[arg(long)]
        admin: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Hull geometry (STL or OBJ).
    #[arg(long)]
    pub geometry: PathBuf,
    /// JSON with the physics block of `lincosim.inp`.
    #[arg(long)]
    pub params: PathBuf,
    /// Degrees of freedom: 0, 1 or 2.
    #[arg(long, value_parser = parse_dof, default_value = "1")]
    pub dof: DofMode,
    /// Run in this process. Required; remote runs go through the service.
    #[arg(long)]
    pub local: bool,
    /// Machine root for the run; a temporary directory when omitted.
    #[arg(long)]
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Check {
    Consistency,
}

#[derive(Debug, Subcommand)]
pub enum Job {
    Prepare(JobArgs),
    Simulate(JobArgs),
}

#[derive(Debug, Args)]
pub struct JobArgs {
    #[arg(long, value_parser = parse_scheduler, default_value = "LOCAL")]
    pub scheduler: Scheduler,
    /// Machine root; defaults to two levels above the workdir.
    #[arg(long)]
    pub machine_root: Option<PathBuf>,
    #[arg(default_value = ".")]
    pub workdir: PathBuf,
}

fn parse_scheduler(s: &str) -> std::result::Result<Scheduler, String> {
    s.parse().map_err(|e: vtank_core::jobscript::ScriptError| e.to_string())
}

fn parse_dof(s: &str) -> std::result::Result<DofMode, String> {
    s.parse::<u8>().ok().and_then(DofMode::from_count).ok_or_else(|| format!("dof must be 0, 1 or 2, got {s}"))
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut c = Config::load(cli.config.as_deref())?;
    if let Some(d) = &cli.data_dir {
        c.data_dir = d.clone();
    }
    Ok(c)
}

fn print_json(out: &mut dyn Write, v: &impl serde::Serialize) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string(v).map_err(Error::internal)?)?;
    Ok(())
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Serve { listen } => {
            let mut config = load_config(&cli)?;
            if let Some(l) = listen {
                config.listen = l.clone();
            }
            serve(config)
        }
        Command::Admin(a) => admin(App::open(load_config(&cli)?)?, a, out),
        Command::Run(r) => {
            let summary = run_command(r)?;
            out.write_all(summary.as_bytes())?;
            Ok(())
        }
        Command::Check(Check::Consistency) => {
            let app = App::open(load_config(&cli)?)?;
            let anomalies = app.cat.consistency_check(|m, j| app.orch.job_alive(m, j));
            for a in &anomalies {
                print_json(out, a)?;
            }
            if anomalies.is_empty() {
                Ok(())
            } else {
                Err(Error::validation(format!("{} anomalies", anomalies.len())))
            }
        }
        Command::Monitor => {
            let app = App::open(load_config(&cli)?)?;
            let poll = app.orch.poll_jobs();
            let mut report = api::health_report(&app);
            report["lost_jobs"] = json!(poll.lost);
            report["unreachable_machines"] = json!(poll.unreachable);
            if !poll.unreachable.is_empty() {
                report["status"] = json!("degraded");
            }
            print_json(out, &report)?;
            if poll.unreachable.is_empty() {
                Ok(())
            } else {
                Err(Error::Io(std::io::Error::other("machines unreachable")))
            }
        }
        Command::Worker { machine_root, workers, once } => {
            let spool = Spool::new(machine_root);
            if *once {
                while let Some(id) = spool.run_next() {
                    writeln!(out, "{id}")?;
                }
                return Ok(());
            }
            let stop = Arc::new(AtomicBool::new(false));
            for h in spawn_runners(spool, *workers, Duration::from_millis(200), stop) {
                let _ = h.join();
            }
            Ok(())
        }
        Command::Job(j) => job(j),
    }
}

fn serve(mut config: Config) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.listen).await?;
        let addr = listener.local_addr()?;
        if config.base_url.is_empty() {
            config.base_url = format!("http://{addr}");
        }
        let app = Arc::new(App::open(config)?);
        let _background = app.start_background();
        log::info!("listening on {addr}");
        eprintln!("vtank listening on http://{addr}");
        api::serve(app, listener).await?;
        Ok(())
    })
}

fn admin(app: App, cmd: &Admin, out: &mut dyn Write) -> Result<()> {
    let sys = User::system();
    let cat = &app.cat;
    match cmd {
        Admin::Org(OrgCmd::Create { name }) => print_json(out, &cat.create_org(&sys, name)?),
        Admin::Org(OrgCmd::Grant { org, machine, simsetup, user }) => {
            if machine.is_none() && simsetup.is_none() && user.is_none() {
                return Err(Error::validation("give --machine, --simsetup or --user"));
            }
            let org = cat.find_org(org)?;
            if let Some(m) = machine {
                cat.grant_machine(&sys, &org.id, &cat.find_machine(m)?.id)?;
            }
            if let Some(s) = simsetup {
                cat.grant_simsetup(&sys, &org.id, &cat.find_simsetup(s)?.id)?;
            }
            if let Some(u) = user {
                cat.add_member(&sys, &org.id, &cat.find_user(u)?.id)?;
            }
            print_json(out, &cat.find_org(&org.id)?)
        }
        Admin::Org(OrgCmd::List) => {
            for o in cat.store().snapshot().organizations.values() {
                print_json(out, o)?;
            }
            Ok(())
        }
        Admin::Machine(MachineCmd::Add { name, address, root, username, scheduler, nodes, tasks_per_node, walltime }) => {
            let m = cat.add_machine(
                &sys,
                NewMachine {
                    name: name.clone(),
                    address: address.clone(),
                    root_folder: root.clone(),
                    username: username.clone(),
                    scheduler: *scheduler,
                    nodes_default: *nodes,
                    tasks_per_node: *tasks_per_node,
                    walltime: *walltime,
                },
            )?;
            print_json(out, &m)
        }
        Admin::Machine(MachineCmd::Enable { machine }) => {
            print_json(out, &cat.set_machine_enabled(&sys, &cat.find_machine(machine)?.id, true)?)
        }
        Admin::Machine(MachineCmd::Disable { machine }) => {
            print_json(out, &cat.set_machine_enabled(&sys, &cat.find_machine(machine)?.id, false)?)
        }
        Admin::Machine(MachineCmd::List) => {
            for m in cat.list_machines(&sys) {
                print_json(out, &m)?;
            }
            Ok(())
        }
        Admin::Simsetup(SimSetupCmd::Add { name, dof, build_script, machines }) => {
            let ids = machines.iter().map(|m| cat.find_machine(m).map(|m| m.id)).collect::<Result<_>>()?;
            let s = cat.add_simsetup(
                &sys,
                NewSimSetup {
                    name: name.clone(),
                    dof_mode: *dof,
                    default_parameters: Default::default(),
                    statuses_dictionary: Default::default(),
                    supported_machine_ids: ids,
                    build_script_ref: build_script.clone(),
                },
            )?;
            print_json(out, &s)
        }
        Admin::Simsetup(SimSetupCmd::List) => {
            for s in cat.list_simsetups(&sys) {
                print_json(out, &s)?;
            }
            Ok(())
        }
        Admin::User(UserCmd::Create { login, password, display_name, admin }) => {
            let u = cat.register_user(login, display_name, password)?;
            let u = cat.approve_user(&sys, &u.id, *admin)?;
            print_json(out, &json!({ "id": u.id, "login": u.login, "approved": u.approved, "admin": u.admin }))
        }
        Admin::User(UserCmd::Approve { user, admin }) => {
            let u = cat.approve_user(&sys, &cat.find_user(user)?.id, *admin)?;
            print_json(out, &json!({ "id": u.id, "login": u.login, "approved": u.approved, "admin": u.admin }))
        }
    }
}

// ---- headless run

pub const LOCAL_SIM_ID: &str = "local";

fn step_error(f: StepFailure) -> Error {
    match f.step {
        -3 => Error::validation(f.message),
        -5 => Error::Io(std::io::Error::other(f.message)),
        _ => Error::Solver(f.message),
    }
}

fn run_command(r: &RunArgs) -> Result<String> {
    if !r.local {
        return Err(Error::validation("only --local runs are supported from the command line"));
    }
    let text = fs::read(&r.params)?;
    let physics: InpPhysics = serde_json::from_slice(&text).map_err(|e| Error::validation(format!("params: {e}")))?;
    let geometry = fs::read(&r.geometry)?;
    let filename = r.geometry.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_else(|| "hull.stl".into());
    let (root, _tmp) = match &r.workdir {
        Some(w) => (w.clone(), None),
        None => {
            let t = std::env::temp_dir().join(format!("vtank-run-{}", uuid::Uuid::new_v4().simple()));
            (t.clone(), Some(TempRoot(t)))
        }
    };
    let workdir = run_local(&geometry, &filename, &physics, r.dof, &root)?;
    Ok(fs::read_to_string(workdir.join("results").join("summary.csv"))?)
}

struct TempRoot(PathBuf);

impl Drop for TempRoot {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

/// Prepares and simulates one hull with the reference setup under
/// `<root>/sims/local`, exactly as a machine would. Returns the workdir.
pub fn run_local(geometry: &[u8], filename: &str, physics: &InpPhysics, dof: DofMode, root: &Path) -> Result<PathBuf> {
    let mesh = parse_mesh(geometry, filename)?;
    WatertightMesh::new(mesh)?;
    let params: vtank_core::PhysicalParameters = physics.into();
    params.validate()?;
    let ext = Path::new(filename).extension().and_then(|e| e.to_str()).unwrap_or("stl").to_ascii_lowercase();
    let inp = LincosimInp {
        simulation: InpSimulation {
            id: LOCAL_SIM_ID.into(),
            name: Path::new(filename).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            setup: REFERENCE_SETUP.into(),
            dof_mode: dof,
        },
        geometry: InpGeometry { file: format!("geometry.{ext}"), digest: sha256_hex(geometry) },
        machine: InpMachine { nodes: 1, tasks_per_node: 1, walltime: 3600 },
        physics: physics.clone(),
        callbacks: InpCallbacks { base_url: String::new(), token: String::new() },
    };
    let workdir = root.join("sims").join(LOCAL_SIM_ID);
    if workdir.exists() {
        fs::remove_dir_all(&workdir)?;
    }
    fs::create_dir_all(&workdir)?;
    fs::write(workdir.join(&inp.geometry.file), geometry)?;
    fs::write(workdir.join(INP_FILE), inp.to_canonical_bytes())?;
    let sink = FileSink::in_workdir(&workdir);
    run_prepare(&workdir, root, &sink, &NoSubmit).map_err(step_error)?;
    run_simulate(&workdir, root, &sink).map_err(step_error)?;
    Ok(workdir)
}

// ---- jobs on machines

fn job(j: &Job) -> Result<()> {
    let (Job::Prepare(a) | Job::Simulate(a)) = j;
    let workdir = fs::canonicalize(&a.workdir)?;
    let root = match &a.machine_root {
        Some(r) => r.clone(),
        None => workdir.parent().and_then(Path::parent).map(Path::to_path_buf).ok_or_else(|| Error::validation("workdir has no machine root"))?,
    };
    let inp = read_inp(&workdir).ok();
    let sink = sink_for(&workdir, inp.as_ref());
    match j {
        Job::Prepare(_) => {
            let exe = std::env::current_exe()?.to_string_lossy().into_owned();
            let submitter = SchedulerSubmitter { scheduler: a.scheduler, exe, machine_root: root.clone() };
            run_prepare(&workdir, &root, &sink, &submitter).map(|_| ()).map_err(step_error)
        }
        Job::Simulate(_) => run_simulate(&workdir, &root, &sink).map_err(step_error),
    }
}
