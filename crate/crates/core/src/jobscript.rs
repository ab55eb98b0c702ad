//! Batch job scripts for the supported workload managers.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheduler {
    Pbs,
    Slurm,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("unsupported scheduler: {0}")]
    UnsupportedScheduler(String),
    #[error("invalid job field {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

impl Scheduler {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheduler::Pbs => "PBS",
            Scheduler::Slurm => "SLURM",
            Scheduler::Local => "LOCAL",
        }
    }
}

impl FromStr for Scheduler {
    type Err = ScriptError;
    fn from_str(s: &str) -> Result<Self, ScriptError> {
        match s.to_ascii_uppercase().as_str() {
            "PBS" => Ok(Scheduler::Pbs),
            "SLURM" => Ok(Scheduler::Slurm),
            "LOCAL" => Ok(Scheduler::Local),
            _ => Err(ScriptError::UnsupportedScheduler(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobScript {
    pub scheduler: Scheduler,
    pub name: String,
    pub nodes: u32,
    pub tasks_per_node: u32,
    /// Seconds.
    pub walltime: u64,
    pub workdir: String,
    pub body: Vec<String>,
}

/// `HH:MM:SS`; hours are not wrapped at 24.
pub fn format_walltime(secs: u64) -> String {
    alloc::format!("{:02}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60)
}

impl JobScript {
    fn check(&self) -> Result<(), ScriptError> {
        let bad = |field, reason: &str| Err(ScriptError::InvalidField { field, reason: reason.to_string() });
        if self.name.is_empty() || self.name.chars().any(|c| c.is_whitespace()) {
            return bad("name", "must be non-empty without whitespace");
        }
        if self.workdir.is_empty() || self.workdir.chars().any(|c| c.is_whitespace()) {
            return bad("workdir", "must be non-empty without whitespace");
        }
        if self.nodes == 0 {
            return bad("nodes", "must be > 0");
        }
        if self.tasks_per_node == 0 {
            return bad("tasks_per_node", "must be > 0");
        }
        if self.body.iter().any(|l| l.contains('\n')) {
            return bad("body", "lines must not contain newlines");
        }
        Ok(())
    }

    pub fn render(&self) -> Result<String, ScriptError> {
        self.check()?;
        let wt = format_walltime(self.walltime);
        let mut out = String::from("#!/bin/sh\n");
        // writing to a String cannot fail
        let _ = match self.scheduler {
            Scheduler::Pbs => write!(
                out,
                "#PBS -N {}\n#PBS -l select={}:ncpus={}\n#PBS -l walltime={}\n",
                self.name, self.nodes, self.tasks_per_node, wt
            ),
            Scheduler::Slurm => write!(
                out,
                "#SBATCH --job-name={}\n#SBATCH --nodes={}\n#SBATCH --ntasks-per-node={}\n#SBATCH --time={}\n",
                self.name, self.nodes, self.tasks_per_node, wt
            ),
            Scheduler::Local => Ok(()),
        };
        out.push('\n');
        let _ = writeln!(out, "cd {}", self.workdir);
        for line in &self.body {
            out.push_str(line);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Renders a job for the named scheduler.
pub fn render_job_script(scheduler: &str, job: &JobScript) -> Result<String, ScriptError> {
    let s: Scheduler = scheduler.parse()?;
    JobScript { scheduler: s, ..job.clone() }.render()
}
