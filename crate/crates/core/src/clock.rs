//! Time sources. Replayed campaigns use a logical clock so that their
//! records are byte-identical across processes.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Starts at 2025-01-01T00:00:00Z and advances one second per reading.
#[derive(Debug)]
pub struct LogicalClock {
    next: AtomicI64,
}

impl LogicalClock {
    pub const EPOCH: i64 = 1_735_689_600;

    pub fn new() -> Self {
        Self::starting_at(Self::EPOCH)
    }

    pub fn starting_at(unix_seconds: i64) -> Self {
        Self {
            next: AtomicI64::new(unix_seconds),
        }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        let secs = self.next.fetch_add(1, Ordering::SeqCst);
        Utc.timestamp_opt(secs, 0).single().expect("logical clock within range")
    }
}

/// ISO-8601 UTC with a `Z` suffix and whole seconds.
pub fn iso8601(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}
