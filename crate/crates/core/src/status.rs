//! Simulation lifecycle: step codes, the status history rules, and the
//! dashboard status they map to.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub struct StepCode(i8);

pub const MAX_STEP: i8 = 6;

impl StepCode {
    pub const CREATED: StepCode = StepCode(0);
    pub const SUBMITTED: StepCode = StepCode(1);
    pub const PREPARED: StepCode = StepCode(2);
    pub const GEOMETRY_PROCESSED: StepCode = StepCode(3);
    pub const SOLVED: StepCode = StepCode(4);
    pub const POST_PROCESSED: StepCode = StepCode(5);
    pub const COMPLETED: StepCode = StepCode(6);

    pub fn new(v: i8) -> Option<Self> {
        (-MAX_STEP..=MAX_STEP).contains(&v).then_some(StepCode(v))
    }

    /// The error code for a failure during step `k` (1..=6).
    pub fn error(k: i8) -> Self {
        debug_assert!((1..=MAX_STEP).contains(&k));
        StepCode(-k.clamp(1, MAX_STEP))
    }

    pub fn value(self) -> i8 {
        self.0
    }

    pub fn magnitude(self) -> i8 {
        self.0.abs()
    }

    pub fn is_error(self) -> bool {
        self.0 < 0
    }

    pub fn is_terminal(self) -> bool {
        self.0 < 0 || self.0 == MAX_STEP
    }

    pub fn status(self) -> DashboardStatus {
        match self.0 {
            0 => DashboardStatus::Created,
            6 => DashboardStatus::Completed,
            v if v < 0 => DashboardStatus::Error,
            _ => DashboardStatus::Running,
        }
    }
}

impl TryFrom<i8> for StepCode {
    type Error = String;
    fn try_from(v: i8) -> Result<Self, String> {
        StepCode::new(v).ok_or_else(|| alloc::format!("step code {v} outside -6..=6"))
    }
}

impl From<StepCode> for i8 {
    fn from(s: StepCode) -> i8 {
        s.0
    }
}

impl fmt::Display for StepCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DashboardStatus {
    Created,
    Running,
    Completed,
    Error,
    Deleted,
}

impl DashboardStatus {
    pub const ALL: [DashboardStatus; 5] = [Self::Created, Self::Running, Self::Completed, Self::Error, Self::Deleted];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Created => "Created",
            Self::Running => "Running",
            Self::Completed => "Completed",
            Self::Error => "Error",
            Self::Deleted => "Deleted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str().eq_ignore_ascii_case(s))
    }
}

/// Reference setup step names.
pub fn reference_step_name(step: i8) -> Option<&'static str> {
    Some(match step {
        0 => "Created",
        1 => "Submitted",
        2 => "Prepared",
        3 => "GeometryProcessed",
        4 => "Solved",
        5 => "PostProcessed",
        6 => "Completed",
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusEntry {
    pub step: StepCode,
    pub message: String,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Applied {
    Appended,
    /// Same (step, message) as an entry already present.
    Duplicate,
    /// |step| lower than the last entry's; ignored.
    Stale,
    /// History already ended in a terminal step.
    AfterTerminal,
}

impl Applied {
    pub fn changed(&self) -> bool {
        matches!(self, Applied::Appended)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatusHistory {
    entries: Vec<StatusEntry>,
}

impl StatusHistory {
    pub fn created(timestamp: f64) -> Self {
        Self { entries: alloc::vec![StatusEntry { step: StepCode::CREATED, message: String::from("Created"), timestamp }] }
    }

    pub fn entries(&self) -> &[StatusEntry] {
        &self.entries
    }

    pub fn last(&self) -> Option<&StatusEntry> {
        self.entries.last()
    }

    pub fn current(&self) -> StepCode {
        self.last().map(|e| e.step).unwrap_or(StepCode::CREATED)
    }

    pub fn status(&self) -> DashboardStatus {
        self.current().status()
    }

    pub fn is_terminal(&self) -> bool {
        self.current().is_terminal()
    }

    pub fn steps(&self) -> Vec<i8> {
        self.entries.iter().map(|e| e.step.value()).collect()
    }

    /// Applies a status callback. Timestamps are clamped so the history stays
    /// monotone even if the caller's clock goes backwards.
    pub fn apply(&mut self, step: StepCode, message: &str, timestamp: f64) -> Applied {
        if self.entries.iter().any(|e| e.step == step && e.message == message) {
            return Applied::Duplicate;
        }
        if let Some(last) = self.entries.last() {
            if last.step.is_terminal() {
                return Applied::AfterTerminal;
            }
            if step.magnitude() < last.step.magnitude() {
                return Applied::Stale;
            }
        }
        let timestamp = self.entries.last().map_or(timestamp, |l| timestamp.max(l.timestamp));
        self.entries.push(StatusEntry { step, message: String::from(message), timestamp });
        Applied::Appended
    }

    /// Checks the history invariants; returns a description of the first
    /// violation.
    pub fn check(&self) -> Result<(), String> {
        let mut prev: Option<&StatusEntry> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(p) = prev {
                if p.step.is_terminal() {
                    return Err(alloc::format!("entry {i} follows terminal step {}", p.step));
                }
                if e.step.magnitude() < p.step.magnitude() {
                    return Err(alloc::format!("entry {i} step {} after {}", e.step, p.step));
                }
                if e.timestamp < p.timestamp {
                    return Err(alloc::format!("entry {i} timestamp goes backwards"));
                }
            }
            prev = Some(e);
        }
        Ok(())
    }
}
