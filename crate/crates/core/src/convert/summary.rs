//! Descriptive statistics over a timeline.

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use super::export::TimeSpan;
use super::timeline::{Payload, TimelineRecord};
use crate::parse::StationId;

pub const DEFAULT_GAP_THRESHOLD: Duration = Duration::from_secs(300);

/// A silent interval between two consecutive records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Gap {
    pub fn duration(&self) -> TimeDelta {
        self.end - self.start
    }
}

/// Intervals between consecutive records longer than `threshold`.
pub fn find_gaps(timeline: &[TimelineRecord], threshold: Duration) -> Vec<Gap> {
    let threshold = TimeDelta::from_std(threshold).unwrap_or(TimeDelta::MAX);
    timeline
        .windows(2)
        .filter(|w| w[1].timestamp - w[0].timestamp > threshold)
        .map(|w| Gap {
            start: w[0].timestamp,
            end: w[1].timestamp,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrStats {
    pub count: u64,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub time_span: Option<TimeSpan>,
    /// Fixes with a position; no-fix records are counted separately.
    pub gps_fix_count: u64,
    pub no_fix_count: u64,
    pub bbox: Option<BoundingBox>,
    pub loran_count: u64,
    pub stations: BTreeMap<StationId, SnrStats>,
    pub gaps: Vec<Gap>,
}

pub fn summarize(timeline: &[TimelineRecord], gap_threshold: Duration) -> Summary {
    let mut s = Summary {
        time_span: match (timeline.first(), timeline.last()) {
            (Some(a), Some(b)) => Some(TimeSpan {
                first: a.timestamp,
                last: b.timestamp,
            }),
            _ => None,
        },
        gaps: find_gaps(timeline, gap_threshold),
        ..Default::default()
    };
    let mut sums: BTreeMap<StationId, f64> = BTreeMap::new();
    for r in timeline {
        match &r.payload {
            Payload::Gps(f) => match (f.is_no_fix(), f.lat_deg, f.lon_deg) {
                (false, Some(lat), Some(lon)) => {
                    s.gps_fix_count += 1;
                    let b = s.bbox.get_or_insert(BoundingBox {
                        min_lat: lat,
                        max_lat: lat,
                        min_lon: lon,
                        max_lon: lon,
                    });
                    b.min_lat = b.min_lat.min(lat);
                    b.max_lat = b.max_lat.max(lat);
                    b.min_lon = b.min_lon.min(lon);
                    b.max_lon = b.max_lon.max(lon);
                }
                _ => s.no_fix_count += 1,
            },
            Payload::Loran(m) => {
                s.loran_count += 1;
                let e = s.stations.entry(m.station()).or_insert(SnrStats {
                    count: 0,
                    min: f64::INFINITY,
                    mean: 0.0,
                    max: f64::NEG_INFINITY,
                });
                e.count += 1;
                e.min = e.min.min(m.snr_db);
                e.max = e.max.max(m.snr_db);
                *sums.entry(m.station()).or_default() += m.snr_db;
            }
        }
    }
    for (id, st) in s.stations.iter_mut() {
        st.mean = sums[id] / st.count as f64;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{GpsFix, LoranMeasurement, StationRole};
    use chrono::TimeZone;

    fn t(s: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 4, 17, 0, 0, 0).unwrap() + TimeDelta::seconds(s)
    }

    fn snr(s: i64, v: f64) -> TimelineRecord {
        TimelineRecord::new(
            Payload::Loran(LoranMeasurement {
                timestamp: t(s),
                gri: 9930,
                station_role: StationRole::M,
                toa_us: 1.0,
                snr_db: v,
                ecd_us: 0.0,
                source_line: 0,
            }),
            s as u64,
        )
    }

    #[test]
    fn snr_descriptors() {
        let tl = vec![snr(0, 10.0), snr(10, 12.0), snr(20, 14.0)];
        let s = summarize(&tl, DEFAULT_GAP_THRESHOLD);
        let st = s.stations[&"9930M".parse().unwrap()];
        assert_eq!((st.count, st.min, st.mean, st.max), (3, 10.0, 12.0, 14.0));
        assert!(s.gaps.is_empty());
    }

    #[test]
    fn two_hour_silence_is_one_gap() {
        let tl = vec![
            snr(0, 1.0),
            snr(60, 1.0),
            snr(60 + 7200, 1.0),
            snr(60 + 7260, 1.0),
        ];
        let s = summarize(&tl, Duration::from_secs(600));
        assert_eq!(
            s.gaps,
            [Gap {
                start: t(60),
                end: t(7260)
            }]
        );
        assert_eq!(s.gaps[0].duration(), TimeDelta::hours(2));
    }

    #[test]
    fn empty_and_no_fix() {
        let s = summarize(&[], DEFAULT_GAP_THRESHOLD);
        assert_eq!(s, Summary::default());

        let nofix = GpsFix {
            timestamp: t(0),
            lat_deg: None,
            lon_deg: None,
            alt_m: None,
            fix_quality: 0,
            num_sats: 0,
            hdop: None,
            source_line: 1,
        };
        let good = GpsFix {
            lat_deg: Some(37.5),
            lon_deg: Some(127.0),
            alt_m: Some(1.0),
            fix_quality: 1,
            ..nofix.clone()
        };
        let tl = vec![
            TimelineRecord::new(Payload::Gps(nofix), 0),
            TimelineRecord::new(Payload::Gps(good), 1),
        ];
        let s = summarize(&tl, DEFAULT_GAP_THRESHOLD);
        assert_eq!((s.gps_fix_count, s.no_fix_count), (1, 1));
        assert_eq!(s.bbox.unwrap().min_lat, 37.5);
    }
}
