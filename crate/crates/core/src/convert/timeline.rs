//! The merged, timestamp-ordered record sequence.

use std::cmp::Ordering;

use chrono::{DateTime, Utc};

use crate::parse::{GpsFix, LoranMeasurement};
use crate::Execution;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Gps(GpsFix),
    Loran(LoranMeasurement),
}

impl Payload {
    pub fn timestamp(&self) -> DateTime<Utc> {
        match self {
            Payload::Gps(f) => f.timestamp,
            Payload::Loran(m) => m.timestamp,
        }
    }

    /// GPS sorts before Loran at equal timestamps.
    pub fn rank(&self) -> u8 {
        match self {
            Payload::Gps(_) => 0,
            Payload::Loran(_) => 1,
        }
    }

    pub fn record_type(&self) -> &'static str {
        match self {
            Payload::Gps(_) => "gps",
            Payload::Loran(_) => "loran",
        }
    }

    /// Equality at the declared field precisions.
    pub fn same_measurement(&self, other: &Payload) -> bool {
        match (self, other) {
            (Payload::Gps(a), Payload::Gps(b)) => a.same_measurement(b),
            (Payload::Loran(a), Payload::Loran(b)) => a.same_measurement(b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRecord {
    pub timestamp: DateTime<Utc>,
    pub payload: Payload,
    /// Position in the original stream.
    pub arrival_index: u64,
}

impl TimelineRecord {
    pub fn new(payload: Payload, arrival_index: u64) -> Self {
        Self {
            timestamp: payload.timestamp(),
            payload,
            arrival_index,
        }
    }
}

/// The timeline order: timestamp, then GPS before Loran, then arrival.
pub fn timeline_order(a: &TimelineRecord, b: &TimelineRecord) -> Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then(a.payload.rank().cmp(&b.payload.rank()))
        .then(a.arrival_index.cmp(&b.arrival_index))
}

/// Merge parsed records into one sorted timeline.
///
/// Each record's `source_line` is its arrival index.
pub fn merge_sort(
    gps: Vec<GpsFix>,
    loran: Vec<LoranMeasurement>,
    exec: Execution,
) -> Vec<TimelineRecord> {
    let mut out = Vec::with_capacity(gps.len() + loran.len());
    out.extend(gps.into_iter().map(|f| {
        let idx = f.source_line;
        TimelineRecord::new(Payload::Gps(f), idx)
    }));
    out.extend(loran.into_iter().map(|m| {
        let idx = m.source_line;
        TimelineRecord::new(Payload::Loran(m), idx)
    }));
    exec.sort_by(&mut out, timeline_order);
    out
}

/// Whether a timeline is non-decreasing in timestamp.
pub fn is_sorted(timeline: &[TimelineRecord]) -> bool {
    timeline
        .windows(2)
        .all(|w| w[0].timestamp <= w[1].timestamp)
}
