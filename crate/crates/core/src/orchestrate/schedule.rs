//! Rotation policy and boundary arithmetic.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use chrono::{DateTime, Days, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

/// When the active raw segment is closed and a new one opened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RotationPolicy {
    /// Every 00:00:00 UTC.
    #[default]
    UtcMidnight,
    /// Every `interval` from the session start.
    FixedInterval(Duration),
}

impl RotationPolicy {
    pub fn fixed(interval: Duration) -> Result<Self, String> {
        if interval < Duration::from_secs(1) {
            return Err(format!(
                "rotation interval must be at least 1s, got {}",
                humantime_serde::re::humantime::format_duration(interval)
            ));
        }
        Ok(RotationPolicy::FixedInterval(interval))
    }
}

impl fmt::Display for RotationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotationPolicy::UtcMidnight => f.write_str("utc-midnight"),
            RotationPolicy::FixedInterval(d) => {
                write!(f, "{}", humantime_serde::re::humantime::format_duration(*d))
            }
        }
    }
}

impl FromStr for RotationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "utc-midnight" | "midnight" | "daily" => Ok(RotationPolicy::UtcMidnight),
            other => {
                let d = humantime_serde::re::humantime::parse_duration(other)
                    .map_err(|e| format!("rotation {other:?}: {e}"))?;
                RotationPolicy::fixed(d)
            }
        }
    }
}

impl Serialize for RotationPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RotationPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// First rotation boundary strictly after `now`.
///
/// Midnight-aligned: the next 00:00:00Z. Fixed interval: the smallest
/// `session_start + k * interval` that is strictly after `now`.
pub fn next_boundary(
    now: DateTime<Utc>,
    policy: RotationPolicy,
    session_start: DateTime<Utc>,
) -> DateTime<Utc> {
    match policy {
        RotationPolicy::UtcMidnight => (now.date_naive() + Days::new(1))
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc(),
        RotationPolicy::FixedInterval(interval) => {
            let step = interval.as_millis() as i64;
            let elapsed = (now - session_start).num_milliseconds();
            // truncation of `now` to ms can only pull it earlier, so guard
            let mut k = elapsed.div_euclid(step) + 1;
            let mut b = session_start + TimeDelta::milliseconds(k * step);
            while b <= now {
                k += 1;
                b = session_start + TimeDelta::milliseconds(k * step);
            }
            b
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn utc(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, mo, d, h, mi, s).unwrap()
    }

    #[test]
    fn midnight_alignment() {
        let start = utc(2020, 4, 17, 9, 30, 0);
        assert_eq!(
            next_boundary(start, RotationPolicy::UtcMidnight, start),
            utc(2020, 4, 18, 0, 0, 0)
        );
    }

    #[test]
    fn boundary_tie_goes_to_following_midnight() {
        let t = utc(2020, 4, 18, 0, 0, 0);
        assert_eq!(
            next_boundary(t, RotationPolicy::UtcMidnight, t),
            utc(2020, 4, 19, 0, 0, 0)
        );
    }

    #[test]
    fn fixed_interval_from_start() {
        let start = utc(2020, 4, 17, 0, 0, 0);
        let day = RotationPolicy::fixed(Duration::from_secs(86_400)).unwrap();
        assert_eq!(next_boundary(start, day, start), utc(2020, 4, 18, 0, 0, 0));

        let start = utc(2020, 4, 17, 9, 30, 0);
        assert_eq!(next_boundary(start, day, start), utc(2020, 4, 18, 9, 30, 0));
    }

    #[test]
    fn policy_text() {
        assert_eq!(
            "utc-midnight".parse::<RotationPolicy>().unwrap(),
            RotationPolicy::UtcMidnight
        );
        assert_eq!(
            "24h".parse::<RotationPolicy>().unwrap(),
            RotationPolicy::FixedInterval(Duration::from_secs(86_400))
        );
        assert!("0s".parse::<RotationPolicy>().is_err());
        assert!("soon".parse::<RotationPolicy>().is_err());
        let p: RotationPolicy = "1h 30m".parse().unwrap();
        assert_eq!(p.to_string().parse::<RotationPolicy>().unwrap(), p);
    }

    proptest! {
        #[test]
        fn boundary_is_after_now_and_on_lattice(
            start_s in 1_500_000_000i64..1_700_000_000,
            offset_ms in -86_400_000i64..(10 * 86_400_000),
            interval_s in 1u64..200_000,
            midnight in any::<bool>(),
        ) {
            let start = DateTime::from_timestamp(start_s, 0).unwrap();
            let now = start + TimeDelta::milliseconds(offset_ms);
            if midnight {
                let b = next_boundary(now, RotationPolicy::UtcMidnight, start);
                prop_assert!(b > now);
                prop_assert!(b - now <= TimeDelta::days(1));
                prop_assert_eq!(b.timestamp() % 86_400, 0);
                prop_assert_eq!(b.timestamp_subsec_nanos(), 0);
            } else {
                let policy = RotationPolicy::FixedInterval(Duration::from_secs(interval_s));
                let b = next_boundary(now, policy, start);
                let step = TimeDelta::seconds(interval_s as i64);
                prop_assert!(b > now);
                prop_assert!(b - step <= now, "not the smallest lattice point");
                prop_assert_eq!((b - start).num_milliseconds() % (interval_s as i64 * 1000), 0);
            }
        }
    }
}
