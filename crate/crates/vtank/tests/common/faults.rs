//! Randomized fault schedules for the submission protocol.

use std::sync::atomic::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtank::inp::INP_FILE;
use vtank::machine::JobState;
use vtank::model::TaskKind;
use vtank::results::kpis_from_summary;
use vtank_core::status::StepCode;

use super::World;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// What one schedule ended in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ending {
    Completed,
    /// The machine never came back; retries ran out.
    SubmissionFailed,
    /// The job itself reported an error.
    JobFailed,
}

/// Drives one simulation through crashes, outages, duplicate tasks and
/// shuffled callbacks, checking the protocol invariants after every event.
pub fn run_schedule(seed: u64) -> Result<Ending, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = World::new();
    let sim = w.new_sim("faulty", 1.0 + rng.gen_range(0.0..3.0));
    let prepare = format!("prepare-{}", sim.id);
    // Some machines stay down for good, some jobs are handed a corrupt input.
    let outage = rng.gen_bool(0.08);
    let broken = rng.gen_bool(0.1);
    let first = w.orch.request_submit(&w.alice, &sim.id).map_err(|e| e.to_string())?;

    let check = |w: &World| -> Result<(), String> {
        let s = w.sim(&sim.id);
        s.status_history.check().map_err(|e| format!("history: {e:?}"))?;
        let jobs = w.cluster.jobs_named(&prepare);
        ensure!(jobs <= 1, "{jobs} prepare jobs submitted");
        if s.status_history.current().value() >= 1 {
            ensure!(jobs == 1, "submitted without a job");
            let recs = w.cat.store().read(|t| t.jobs_of(&sim.id).len());
            ensure!(recs == 1, "{recs} job records");
        }
        Ok(())
    };

    for _ in 0..rng.gen_range(10..60) {
        match rng.gen_range(0..10) {
            0 | 1 => {
                w.orch.run_once().map_err(|e| e.to_string())?;
            }
            2 => {
                w.orch.lease().map_err(|e| e.to_string())?;
            }
            3 => {
                if let Some(t) = w.orch.lease().map_err(|e| e.to_string())? {
                    w.orch.execute(&t);
                }
            }
            4 => w.clock.advance(rng.gen_range(0.0..700.0)),
            5 => {
                let d = w.cluster.down.load(Ordering::SeqCst);
                w.cluster.down.store(!d, Ordering::SeqCst);
            }
            6 => w.cluster.flaky_ops.store(rng.gen_range(1..4), Ordering::SeqCst),
            7 => w.cluster.lose_submit_reply.store(true, Ordering::SeqCst),
            8 => {
                if let Ok(id) = w.orch.request_submit(&w.alice, &sim.id) {
                    ensure!(id == first || w.orch.task(&first).is_some_and(|t| t.done), "duplicate request made a second live task");
                }
                w.orch.enqueue(TaskKind::SubmitSimulation, &sim.id).map_err(|e| e.to_string())?;
            }
            _ => {
                w.orch.poll_jobs();
            }
        }
        check(&w)?;
    }

    // Heal the cluster and let the queue settle. A permanent outage only
    // makes sense before the job was handed over.
    let stays_down = outage && w.sim(&sim.id).status_history.current().value() < 1;
    w.cluster.down.store(stays_down, Ordering::SeqCst);
    w.cluster.flaky_ops.store(0, Ordering::SeqCst);
    w.cluster.lose_submit_reply.store(false, Ordering::SeqCst);
    for _ in 0..200 {
        if w.orch.pending_tasks() == 0 {
            break;
        }
        w.clock.advance(1801.0);
        w.orch.drain().map_err(|e| e.to_string())?;
        check(&w)?;
    }
    ensure!(w.orch.pending_tasks() == 0, "queue did not settle");
    let s = w.sim(&sim.id);
    if s.status_history.current() == StepCode::error(1) {
        let errors = w.cat.notifier().sent().iter().filter(|n| n.event == "error").count();
        ensure!(errors == 1, "{errors} error notifications for a failed submission");
        return Ok(Ending::SubmissionFailed);
    }
    ensure!(s.status_history.current() == StepCode::SUBMITTED, "after submission: {:?}", s.status_history.steps());
    ensure!(w.cluster.jobs_named(&prepare) == 1, "prepare job count");

    // The job runs; callbacks arrive shuffled and duplicated.
    if broken {
        let inp = w.workdir(&sim.id).join(INP_FILE);
        let bytes = std::fs::read(&inp).map_err(|e| e.to_string())?;
        std::fs::write(&inp, &bytes[..bytes.len() / 2]).map_err(|e| e.to_string())?;
    }
    let posts = w.run_job(&sim.id);
    let steps: Vec<i8> = posts.iter().map(|p| p.step).collect();
    let expected: &[i8] = if broken { &[-2] } else { &[2, 3, 4, 5, 6] };
    ensure!(steps == expected, "pipeline posted {steps:?}");
    let mut delivery = posts.clone();
    for _ in 0..rng.gen_range(0..5) {
        delivery.push(posts.choose(&mut rng).unwrap().clone());
    }
    if rng.gen_bool(0.5) {
        delivery.shuffle(&mut rng);
    }
    for p in &delivery {
        w.orch.status_callback(&sim.id, p).map_err(|e| e.to_string())?;
        if rng.gen_bool(0.2) {
            w.orch.poll_jobs();
        }
        check(&w)?;
    }
    w.cluster.set_state(&prepare, JobState::Done);
    w.cluster.set_state(&format!("simulate-{}", sim.id), JobState::Done);
    w.cluster.flaky_ops.store(rng.gen_range(0..3), Ordering::SeqCst);
    for _ in 0..20 {
        if w.orch.pending_tasks() == 0 {
            break;
        }
        w.clock.advance(1801.0);
        w.orch.drain().map_err(|e| e.to_string())?;
    }
    let s = w.sim(&sim.id);
    if broken {
        ensure!(s.status_history.current() == StepCode::error(2), "final steps {:?}", s.status_history.steps());
        ensure!(s.kpis.is_none(), "KPIs stored for a failed job");
        ensure!(w.cluster.submits.load(Ordering::SeqCst) == 1, "resubmitted after a job error");
        return Ok(Ending::JobFailed);
    }
    ensure!(s.status_history.current() == StepCode::COMPLETED, "final steps {:?}", s.status_history.steps());
    let kpis = s.kpis.ok_or("results not collected")?;
    let summary = std::fs::read_to_string(w.workdir(&sim.id).join("results/summary.csv")).map_err(|e| e.to_string())?;
    ensure!(kpis == kpis_from_summary(&summary).map_err(|e| e.to_string())?, "stored KPIs differ from summary.csv");
    ensure!(w.cat.blobs().exists(s.results_ref.as_deref().unwrap_or("")), "manifest blob missing");
    let sent = w.cat.notifier().sent();
    for ev in ["start", "end"] {
        let n = sent.iter().filter(|x| x.event == ev).count();
        ensure!(n <= 1, "{n} {ev} notifications");
    }
    ensure!(w.cluster.submits.load(Ordering::SeqCst) == 1, "scheduler saw {} submits", w.cluster.submits.load(Ordering::SeqCst));
    Ok(Ending::Completed)
}
