//! The two jobs that run on a machine: `prepare` (steps 1→2) and
//! `simulate` (steps 3→6). Both report progress through a [`CallbackSink`].

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use vtank_core::kpi::{default_slice_offsets, extract_kpis, pressure_slices};
use vtank_core::GRAVITY;

use crate::fields::read_fields;
use crate::inp::LincosimInp;
use crate::results::{package_results, write_results_csv, ResultSet, SummaryExtras};
use crate::setup::{load_geometry, read_inp, resolve_setup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusPost {
    pub step: i8,
    pub message: String,
    /// `start` or `end` asks the service to notify the owner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
}

pub trait CallbackSink: Send + Sync {
    fn post(&self, post: &StatusPost);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFailure {
    pub step: i8,
    pub message: String,
}

impl std::fmt::Display for StepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {} failed: {}", self.step, self.message)
    }
}

/// Appends posts to `logs/status.jsonl` in the workdir.
pub struct FileSink {
    pub path: PathBuf,
}

impl FileSink {
    pub fn in_workdir(workdir: &Path) -> Self {
        Self { path: workdir.join("logs").join("status.jsonl") }
    }
}

impl CallbackSink for FileSink {
    fn post(&self, post: &StatusPost) {
        let line = serde_json::to_string(post).expect("status serializes");
        let res = self
            .path
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|_| OpenOptions::new().create(true).append(true).open(&self.path))
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = res {
            log::warn!("status log {}: {e}", self.path.display());
        }
    }
}

/// Posts to `<base>/simulations/<id>/status` with the per-simulation token.
pub struct HttpSink {
    pub base_url: String,
    pub sim_id: String,
    pub token: String,
    pub attempts: u32,
}

impl CallbackSink for HttpSink {
    fn post(&self, post: &StatusPost) {
        let url = format!("{}/simulations/{}/status", self.base_url.trim_end_matches('/'), self.sim_id);
        for i in 0..self.attempts.max(1) {
            let res = ureq::post(&url).header("Authorization", &format!("Bearer {}", self.token)).send_json(post);
            match res {
                Ok(_) => return,
                Err(e) => {
                    log::warn!("status callback to {url} failed: {e}");
                    std::thread::sleep(Duration::from_millis(200 * (u64::from(i) + 1)));
                }
            }
        }
    }
}

#[derive(Default)]
pub struct RecordingSink {
    pub posts: Mutex<Vec<StatusPost>>,
}

impl RecordingSink {
    pub fn steps(&self) -> Vec<i8> {
        self.posts.lock().unwrap_or_else(|e| e.into_inner()).iter().map(|p| p.step).collect()
    }
}

impl CallbackSink for RecordingSink {
    fn post(&self, post: &StatusPost) {
        self.posts.lock().unwrap_or_else(|e| e.into_inner()).push(post.clone());
    }
}

/// Every post goes to all sinks.
pub struct Tee(pub Vec<Box<dyn CallbackSink>>);

impl CallbackSink for Tee {
    fn post(&self, post: &StatusPost) {
        for s in &self.0 {
            s.post(post);
        }
    }
}

/// Sinks for a job: the workdir log, plus HTTP when the inp names a service.
pub fn sink_for(workdir: &Path, inp: Option<&LincosimInp>) -> Tee {
    let mut sinks: Vec<Box<dyn CallbackSink>> = vec![Box::new(FileSink::in_workdir(workdir))];
    if let Some(inp) = inp.filter(|i| !i.callbacks.base_url.is_empty()) {
        sinks.push(Box::new(HttpSink {
            base_url: inp.callbacks.base_url.clone(),
            sim_id: inp.simulation.id.clone(),
            token: inp.callbacks.token.clone(),
            attempts: 5,
        }));
    }
    Tee(sinks)
}

/// Queues the `simulate` job on the machine's scheduler.
pub trait SimulateSubmitter {
    fn submit_simulate(&self, workdir: &Path, inp: &LincosimInp) -> Result<String, String>;
}

/// For headless runs: nothing is queued, the caller runs simulate next.
pub struct NoSubmit;

impl SimulateSubmitter for NoSubmit {
    fn submit_simulate(&self, _: &Path, _: &LincosimInp) -> Result<String, String> {
        Ok("inline".into())
    }
}

fn post(sink: &dyn CallbackSink, step: i8, message: impl Into<String>, event: Option<&str>) {
    sink.post(&StatusPost { step, message: message.into(), event: event.map(str::to_string) });
}

fn fail(sink: &dyn CallbackSink, step: i8, message: String, event: Option<&str>) -> StepFailure {
    post(sink, -step, message.clone(), event);
    StepFailure { step: -step, message }
}

/// Reads the inp, runs the setup's `build_prepare` and queues `simulate`.
pub fn run_prepare(
    workdir: &Path,
    machine_root: &Path,
    sink: &dyn CallbackSink,
    submitter: &dyn SimulateSubmitter,
) -> Result<LincosimInp, StepFailure> {
    let inp = read_inp(workdir).map_err(|e| fail(sink, 2, e, None))?;
    let setup = resolve_setup(&inp.simulation.setup, machine_root).map_err(|e| fail(sink, 2, e, None))?;
    setup.build_prepare(workdir).map_err(|e| fail(sink, 2, format!("build_prepare: {e}"), None))?;
    let job = submitter.submit_simulate(workdir, &inp).map_err(|e| fail(sink, 2, format!("submitting simulate: {e}"), None))?;
    post(sink, 2, format!("Prepared; simulate job {job} queued"), None);
    Ok(inp)
}

/// Steps 3 (geometry), 4 (solve), 5 (post-process), 6 (completed).
pub fn run_simulate(workdir: &Path, machine_root: &Path, sink: &dyn CallbackSink) -> Result<(), StepFailure> {
    let inp = read_inp(workdir).map_err(|e| fail(sink, 3, e, Some("end")))?;
    for d in ["fields", "logs", "results"] {
        fs::create_dir_all(workdir.join(d)).map_err(|e| fail(sink, 3, e.to_string(), Some("end")))?;
    }
    load_geometry(workdir, &inp).map_err(|e| fail(sink, 3, e, Some("end")))?;
    post(sink, 3, "GeometryProcessed", Some("start"));

    let setup = resolve_setup(&inp.simulation.setup, machine_root).map_err(|e| fail(sink, 4, e, Some("end")))?;
    setup.run(workdir).map_err(|e| fail(sink, 4, e, Some("end")))?;
    post(sink, 4, "Solved", None);

    postprocess(workdir, &inp).map_err(|e| fail(sink, 5, e, Some("end")))?;
    post(sink, 5, "PostProcessed", None);
    post(sink, 6, "Completed", Some("end"));
    Ok(())
}

/// Fields → KPIs, tables and the result manifest.
pub fn postprocess(workdir: &Path, inp: &LincosimInp) -> Result<(), String> {
    let mut out = read_fields(workdir).map_err(|e| e.to_string())?;
    out.kpis = extract_kpis(&out).map_err(|e| e.to_string())?;
    let params = inp.params();
    let offsets = default_slice_offsets(&out.mesh);
    let (slices, warnings) = pressure_slices(&out.mesh, &out.pressure.values, |t| out.wetted_mask[t] > 0.0, &offsets);
    for w in warnings {
        log::warn!("{w}");
    }
    let fr = if out.lwl > 0.0 { params.velocity / (GRAVITY * out.lwl).sqrt() } else { 0.0 };
    let set = ResultSet {
        kpis: &out.kpis,
        params: &params,
        extras: SummaryExtras { lwl: out.lwl, re: out.re, fr, cf: out.cf },
        force: &out.force_series,
        sink: &out.sink_series,
        trim: &out.trim_series,
        waterline: &out.waterline,
        slices: &slices,
    };
    write_results_csv(&set, &workdir.join("results")).map_err(|e| e.to_string())?;
    package_results(workdir).map_err(|e| e.to_string())?;
    Ok(())
}
