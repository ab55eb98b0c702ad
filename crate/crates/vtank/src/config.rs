//! Service configuration: a TOML file plus `VTANK_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalogue::NewMachine;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/blobs`.
    pub blob_dir: Option<PathBuf>,
    /// URL machines use to reach this service. Defaults to the listen address.
    pub base_url: String,
    /// Command that runs `vtank` on machines. Defaults to this executable.
    pub job_exe: Option<String>,
    pub workers: usize,
    /// Spool runners per local machine.
    pub local_runners: usize,
    pub poll_interval_secs: f64,
    /// Machines created (disabled) at startup when missing.
    pub machines: Vec<NewMachine>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("vtank-data"),
            blob_dir: None,
            base_url: String::new(),
            job_exe: None,
            workers: 2,
            local_runners: 2,
            poll_interval_secs: 10.0,
            machines: Vec::new(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))
    }

    /// Reads `path` if given, then applies the environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut c = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p)?)?,
            None => Self::default(),
        };
        c.apply_env(|k| std::env::var(k).ok());
        Ok(c)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("VTANK_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = get("VTANK_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("VTANK_BLOB_DIR") {
            self.blob_dir = Some(v.into());
        }
        if let Some(v) = get("VTANK_BASE_URL") {
            self.base_url = v;
        }
        if let Some(v) = get("VTANK_JOB_EXE") {
            self.job_exe = Some(v);
        }
    }

    pub fn blob_dir(&self) -> PathBuf {
        self.blob_dir.clone().unwrap_or_else(|| self.data_dir.join("blobs"))
    }

    pub fn store_path(&self) -> PathBuf {
        self.data_dir.join("catalogue.json")
    }

    pub fn notifications_path(&self) -> PathBuf {
        self.data_dir.join("notifications.jsonl")
    }

    pub fn tickets_dir(&self) -> PathBuf {
        self.data_dir.join("tickets")
    }
}
