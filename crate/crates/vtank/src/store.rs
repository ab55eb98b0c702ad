//! Embedded transactional metadata store. Readers get immutable snapshots;
//! writers are serialized, work on a copy and publish it only after the
//! backend has persisted it.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::*;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    pub users: BTreeMap<Id, User>,
    pub sessions: BTreeMap<String, Session>,
    pub organizations: BTreeMap<Id, Organization>,
    pub geometries: BTreeMap<Id, Geometry>,
    pub simulations: BTreeMap<Id, Simulation>,
    pub machines: BTreeMap<Id, Machine>,
    pub simsetups: BTreeMap<Id, SimSetup>,
    pub tasks: BTreeMap<Id, Task>,
    pub help_requests: BTreeMap<Id, HelpRequest>,
    pub jobs: BTreeMap<Id, JobRecord>,
    #[serde(default)]
    pub task_seq: u64,
}

impl Tables {
    pub fn user_by_login(&self, login: &str) -> Option<&User> {
        self.users.values().find(|u| u.login == login)
    }

    pub fn org_by_name(&self, name: &str) -> Option<&Organization> {
        self.organizations.values().find(|o| o.name == name)
    }

    pub fn machine_by_name(&self, name: &str) -> Option<&Machine> {
        self.machines.values().find(|m| m.name == name)
    }

    pub fn simsetup_by_name(&self, name: &str) -> Option<&SimSetup> {
        self.simsetups.values().find(|s| s.name == name)
    }

    /// Job records of a simulation, oldest first.
    pub fn jobs_of(&self, sim_id: &str) -> Vec<&JobRecord> {
        let mut v: Vec<_> = self.jobs.values().filter(|j| j.sim_id == sim_id).collect();
        v.sort_by(|a, b| a.submitted_at.total_cmp(&b.submitted_at).then(a.id.cmp(&b.id)));
        v
    }
}

/// Where committed snapshots go.
pub trait Backend: Send + Sync {
    fn load(&self) -> io::Result<Option<Tables>>;
    fn save(&self, tables: &Tables) -> io::Result<()>;
}

#[derive(Debug, Default)]
pub struct MemoryBackend;

impl Backend for MemoryBackend {
    fn load(&self) -> io::Result<Option<Tables>> {
        Ok(None)
    }
    fn save(&self, _: &Tables) -> io::Result<()> {
        Ok(())
    }
}

/// One JSON document, replaced atomically (write temp file, fsync, rename).
#[derive(Debug)]
pub struct JsonFileBackend {
    path: PathBuf,
}

impl JsonFileBackend {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Backend for JsonFileBackend {
    fn load(&self) -> io::Result<Option<Tables>> {
        match fs::read(&self.path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn save(&self, tables: &Tables) -> io::Result<()> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = self.path.with_extension("json.tmp");
        let bytes = serde_json::to_vec_pretty(tables).map_err(io::Error::other)?;
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &self.path)
    }
}

pub struct Store {
    current: RwLock<Arc<Tables>>,
    writer: Mutex<()>,
    backend: Box<dyn Backend>,
}

impl Store {
    pub fn open(backend: Box<dyn Backend>) -> Result<Self> {
        let tables = backend.load()?.unwrap_or_default();
        Ok(Self { current: RwLock::new(Arc::new(tables)), writer: Mutex::new(()), backend })
    }

    pub fn in_memory() -> Self {
        Self::open(Box::new(MemoryBackend)).expect("memory backend cannot fail")
    }

    pub fn open_file(path: impl Into<PathBuf>) -> Result<Self> {
        Self::open(Box::new(JsonFileBackend::new(path)))
    }

    pub fn snapshot(&self) -> Arc<Tables> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn read<R>(&self, f: impl FnOnce(&Tables) -> R) -> R {
        f(&self.snapshot())
    }

    /// Runs `f` on a private copy; commits only if `f` succeeds and the
    /// backend saves the result.
    pub fn write<R>(&self, f: impl FnOnce(&mut Tables) -> Result<R>) -> Result<R> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = Tables::clone(&self.snapshot());
        let out = f(&mut next)?;
        self.backend.save(&next).map_err(Error::from)?;
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
        Ok(out)
    }
}
