//! Wires the catalogue, orchestrator and background threads together.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use vtank_core::jobscript::Scheduler;

use crate::blobs::BlobStore;
use crate::catalogue::Catalogue;
use crate::clock::{Clock, SystemClock};
use crate::config::Config;
use crate::error::Result;
use crate::machine::{is_local_address, spawn_runners, Connector, DefaultConnector, Spool};
use crate::model::User;
use crate::notify::Notifier;
use crate::orchestrator::{Orchestrator, OrchestratorConfig};
use crate::store::Store;

pub struct App {
    pub config: Config,
    pub cat: Arc<Catalogue>,
    pub orch: Arc<Orchestrator>,
}

impl App {
    /// Opens the persistent store under the data directory.
    pub fn open(config: Config) -> Result<Self> {
        std::fs::create_dir_all(&config.data_dir)?;
        let store = Arc::new(Store::open_file(config.store_path())?);
        let notifier = Arc::new(Notifier::to_file(config.notifications_path()));
        let cat = Arc::new(Catalogue::new(store, BlobStore::new(config.blob_dir()), Arc::new(SystemClock), notifier));
        Self::assemble(config, cat, Arc::new(DefaultConnector))
    }

    pub fn assemble(config: Config, cat: Arc<Catalogue>, connector: Arc<dyn Connector>) -> Result<Self> {
        let job_exe = match &config.job_exe {
            Some(e) => e.clone(),
            None => std::env::current_exe().map(|p| p.to_string_lossy().into_owned()).unwrap_or_else(|_| "vtank".into()),
        };
        let base_url = if config.base_url.is_empty() { format!("http://{}", config.listen) } else { config.base_url.clone() };
        let orch_config = OrchestratorConfig { job_exe, callback_base_url: base_url, ..OrchestratorConfig::default() };
        let orch = Arc::new(Orchestrator::new(cat.clone(), connector, orch_config));
        let app = Self { config, cat, orch };
        app.bootstrap()?;
        Ok(app)
    }

    /// Creates configured machines that do not exist yet.
    fn bootstrap(&self) -> Result<()> {
        let admin = User::system();
        for m in &self.config.machines {
            if self.cat.find_machine(&m.name).is_err() {
                self.cat.add_machine(&admin, m.clone())?;
            }
        }
        Ok(())
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.cat.clock
    }

    /// Starts queue workers, the job poller and spool runners for local
    /// machines. Threads stop when the returned handle is dropped.
    pub fn start_background(&self) -> Background {
        let stop = Arc::new(AtomicBool::new(false));
        let mut threads = Vec::new();
        for _ in 0..self.config.workers.max(1) {
            let orch = self.orch.clone();
            let stop = stop.clone();
            threads.push(std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match orch.run_once() {
                        Ok(true) => {}
                        Ok(false) => std::thread::sleep(Duration::from_millis(50)),
                        Err(e) => {
                            log::error!("worker: {e}");
                            std::thread::sleep(Duration::from_millis(500));
                        }
                    }
                }
            }));
        }
        let runners = Arc::new(Mutex::new(Vec::new()));
        {
            let orch = self.orch.clone();
            let cat = self.cat.clone();
            let stop = stop.clone();
            let runners = runners.clone();
            let per_machine = self.config.local_runners;
            let interval = Duration::from_secs_f64(self.config.poll_interval_secs.max(0.05));
            threads.push(std::thread::spawn(move || {
                let mut started: BTreeSet<PathBuf> = BTreeSet::new();
                let mut last_poll = std::time::Instant::now();
                while !stop.load(Ordering::Relaxed) {
                    for m in cat.store.read(|t| t.machines.values().cloned().collect::<Vec<_>>()) {
                        let root = PathBuf::from(&m.root_folder);
                        if m.enabled && m.scheduler == Scheduler::Local && is_local_address(&m.address) && started.insert(root.clone()) {
                            let handles = spawn_runners(Spool::new(root), per_machine, Duration::from_millis(50), stop.clone());
                            runners.lock().unwrap_or_else(|e| e.into_inner()).extend(handles);
                        }
                    }
                    if last_poll.elapsed() >= interval {
                        orch.poll_jobs();
                        last_poll = std::time::Instant::now();
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
            }));
        }
        Background { stop, threads, runners }
    }
}

pub struct Background {
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    runners: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl Background {
    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let runners: Vec<_> = self.runners.lock().unwrap_or_else(|e| e.into_inner()).drain(..).collect();
        for t in runners {
            let _ = t.join();
        }
    }
}

impl Drop for Background {
    fn drop(&mut self) {
        self.stop();
    }
}
