//! Time-of-day fields and date context for resolving full UTC instants.

use chrono::{DateTime, Days, NaiveDate, NaiveTime, TimeDelta, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::FieldError;

const HALF_DAY_MS: i64 = 12 * 3600 * 1000;

/// Truncate an instant to whole milliseconds.
pub fn truncate_ms(t: DateTime<Utc>) -> DateTime<Utc> {
    let nanos = t.timestamp_subsec_nanos();
    t - TimeDelta::nanoseconds(i64::from(nanos % 1_000_000))
}

/// Parse `hhmmss[.f...]` into a time of day, truncated to milliseconds.
pub fn parse_time_of_day(s: &str) -> Result<NaiveTime, FieldError> {
    let bad = |why: &str| FieldError::field("time", format!("{why} in {s:?}"));
    let (whole, frac) = match s.split_once('.') {
        Some((w, f)) => (w, f),
        None => (s, ""),
    };
    if whole.len() != 6 || !whole.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("expected hhmmss"));
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("non-numeric fraction"));
    }
    let h: u32 = whole[0..2].parse().map_err(|_| bad("hours"))?;
    let m: u32 = whole[2..4].parse().map_err(|_| bad("minutes"))?;
    let sec: u32 = whole[4..6].parse().map_err(|_| bad("seconds"))?;
    let mut ms = 0u32;
    for (i, b) in frac.bytes().take(3).enumerate() {
        ms += u32::from(b - b'0') * 10u32.pow(2 - i as u32);
    }
    if h > 23 || m > 59 || sec > 59 {
        return Err(bad("out of range"));
    }
    NaiveTime::from_hms_milli_opt(h, m, sec, ms).ok_or_else(|| bad("invalid"))
}

/// Format a time of day as `hhmmss` plus `decimals` fractional digits (≤ 3).
pub fn format_time_of_day(t: NaiveTime, decimals: usize) -> String {
    let ms = t.nanosecond() / 1_000_000;
    let base = format!("{:02}{:02}{:02}", t.hour(), t.minute(), t.second());
    match decimals {
        0 => base,
        d => {
            let frac = format!("{ms:03}");
            format!("{base}.{}", &frac[..d.min(3)])
        }
    }
}

fn tod_ms(t: NaiveTime) -> i64 {
    i64::from(t.num_seconds_from_midnight()) * 1000 + i64::from(t.nanosecond() / 1_000_000)
}

/// Where the current date came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DateSource {
    Rmc,
    Zda,
    ConfiguredStartDate,
}

/// Date state threaded through a segment, needed because GGA and `$PLRM`
/// carry only the time of day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DateContext {
    pub current_date: NaiveDate,
    pub last_tod: Option<NaiveTime>,
    pub source: DateSource,
}

impl DateContext {
    pub fn new(current_date: NaiveDate, source: DateSource) -> Self {
        Self {
            current_date,
            last_tod: None,
            source,
        }
    }

    pub fn with_last_tod(mut self, tod: NaiveTime) -> Self {
        self.last_tod = Some(tod);
        self
    }

    /// Combine `tod` with the current date, advancing one day when the time
    /// of day jumps back by more than twelve hours (midnight rollover).
    pub fn resolve(&mut self, tod: NaiveTime) -> DateTime<Utc> {
        if let Some(last) = self.last_tod {
            if tod_ms(tod) < tod_ms(last) - HALF_DAY_MS {
                self.current_date = self.current_date + Days::new(1);
            }
        }
        self.last_tod = Some(tod);
        self.current_date.and_time(tod).and_utc()
    }

    /// Apply a date carried by an RMC/ZDA sentence. Dates older than the
    /// current one are ignored so the context never moves backwards.
    /// Returns whether the date was accepted.
    pub fn apply_date(
        &mut self,
        date: NaiveDate,
        tod: Option<NaiveTime>,
        source: DateSource,
    ) -> bool {
        if date < self.current_date {
            return false;
        }
        self.current_date = date;
        self.source = source;
        if let Some(t) = tod {
            self.last_tod = Some(t);
        }
        true
    }
}

/// Functional form of [`DateContext::resolve`].
pub fn resolve_timestamp(tod: NaiveTime, ctx: &DateContext) -> (DateTime<Utc>, DateContext) {
    let mut next = ctx.clone();
    let t = next.resolve(tod);
    (t, next)
}

/// The date among `anchor`'s day and its neighbours that puts `tod` closest
/// to `anchor`.
pub fn nearest_date(anchor: DateTime<Utc>, tod: NaiveTime) -> NaiveDate {
    let d = anchor.date_naive();
    [d - Days::new(1), d, d + Days::new(1)]
        .into_iter()
        .min_by_key(|day| {
            (day.and_time(tod).and_utc() - anchor)
                .num_milliseconds()
                .abs()
        })
        .unwrap_or(d)
}

/// Date for a line seen before the first date sentence `(date, tod)` of a
/// segment: the previous day when it lies more than twelve hours after the
/// anchor's time of day.
pub fn date_before_anchor(
    anchor_date: NaiveDate,
    anchor_tod: Option<NaiveTime>,
    tod: NaiveTime,
) -> NaiveDate {
    match anchor_tod {
        Some(a) if tod_ms(tod) > tod_ms(a) + HALF_DAY_MS => anchor_date - Days::new(1),
        _ => anchor_date,
    }
}
