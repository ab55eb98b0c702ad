//! Append-only notification log, standing in for mail.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub at: f64,
    /// A user login, or `support` for help requests.
    pub to: String,
    pub event: String,
    pub entity_id: String,
    pub text: String,
}

#[derive(Debug, Default)]
pub struct Notifier {
    path: Option<PathBuf>,
    sent: Mutex<Vec<Notification>>,
}

impl Notifier {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Notifications are appended as JSON lines to `path`.
    pub fn to_file(path: impl Into<PathBuf>) -> Self {
        Self { path: Some(path.into()), sent: Mutex::new(Vec::new()) }
    }

    pub fn send(&self, n: Notification) {
        if let Some(p) = &self.path {
            let line = serde_json::to_string(&n).expect("notifications serialize");
            let res = p
                .parent()
                .map_or(Ok(()), std::fs::create_dir_all)
                .and_then(|_| OpenOptions::new().create(true).append(true).open(p))
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = res {
                log::warn!("notification log {}: {e}", p.display());
            }
        }
        self.sent.lock().unwrap_or_else(|e| e.into_inner()).push(n);
    }

    pub fn sent(&self) -> Vec<Notification> {
        self.sent.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}
