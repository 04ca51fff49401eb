//! Injectable clocks. Everything that schedules work asks a [`Clock`], so a
//! day of rotation can be exercised in milliseconds.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use chrono::{DateTime, TimeDelta, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

/// Wall-clock UTC.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Clone)]
pub struct ManualClock {
    inner: Arc<Mutex<DateTime<Utc>>>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            inner: Arc::new(Mutex::new(start)),
        }
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.inner.lock().expect("clock poisoned") = t;
    }

    pub fn advance(&self, by: TimeDelta) {
        let mut t = self.inner.lock().expect("clock poisoned");
        *t += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.inner.lock().expect("clock poisoned")
    }
}

/// Runs `factor` times faster than wall time from `origin`, counted from
/// construction.
#[derive(Debug, Clone)]
pub struct AcceleratedClock {
    origin: DateTime<Utc>,
    started: Instant,
    factor: f64,
}

impl AcceleratedClock {
    pub fn new(origin: DateTime<Utc>, factor: f64) -> Self {
        assert!(factor > 0.0, "acceleration factor must be positive");
        Self {
            origin,
            started: Instant::now(),
            factor,
        }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

impl Clock for AcceleratedClock {
    fn now(&self) -> DateTime<Utc> {
        let scaled = self.started.elapsed().as_secs_f64() * self.factor;
        self.origin + TimeDelta::microseconds((scaled * 1e6) as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_clock_moves_on_request() {
        let t0 = DateTime::from_timestamp(1_587_081_600, 0).unwrap();
        let c = ManualClock::new(t0);
        assert_eq!(c.now(), t0);
        c.advance(TimeDelta::hours(25));
        assert_eq!(c.now(), t0 + TimeDelta::hours(25));
    }

    #[test]
    fn accelerated_clock_runs_fast() {
        let t0 = DateTime::from_timestamp(1_587_081_600, 0).unwrap();
        let c = AcceleratedClock::new(t0, 3600.0);
        std::thread::sleep(std::time::Duration::from_millis(20));
        let elapsed = c.now() - t0;
        assert!(elapsed >= TimeDelta::seconds(70), "{elapsed}");
    }
}
