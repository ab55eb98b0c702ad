//! Submission retry schedule.

pub const BASE_DELAY_SECS: u64 = 30;
pub const MAX_DELAY_SECS: u64 = 30 * 60;
pub const MAX_ATTEMPTS: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub base_secs: u64,
    pub cap_secs: u64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { base_secs: BASE_DELAY_SECS, cap_secs: MAX_DELAY_SECS, max_attempts: MAX_ATTEMPTS }
    }
}

impl RetryPolicy {
    /// Delay before the next attempt after `failed` failed attempts (1-based).
    pub fn delay_after(&self, failed: u32) -> u64 {
        let k = failed.saturating_sub(1).min(63);
        self.base_secs.checked_shl(k).filter(|d| *d >> k == self.base_secs).unwrap_or(u64::MAX).min(self.cap_secs)
    }

    pub fn exhausted(&self, attempts: u32) -> bool {
        attempts >= self.max_attempts
    }
}
