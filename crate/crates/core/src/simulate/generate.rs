//! Deterministic stream generation.

use std::path::Path;

use chrono::{DateTime, TimeDelta, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::Scenario;
use crate::convert::{merge_sort, write_table, ConvertError, ExportFormat, Table, TimelineRecord};
use crate::parse::{
    quantize_tenth, serialize_gga, serialize_loran, serialize_rmc, serialize_zda, GpsFix,
    LoranMeasurement,
};
use crate::Execution;

const METRES_PER_DEG_LAT: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Zda,
    Rmc,
    Gga,
    Loran,
    Garbage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Damage {
    BadChecksum,
    Truncated,
}

/// One emitted line and where it sits in the byte stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamLine {
    /// Scenario time the line is emitted at.
    pub at: DateTime<Utc>,
    /// Byte range including the CRLF terminator.
    pub start: usize,
    pub end: usize,
    pub kind: LineKind,
    pub damage: Option<Damage>,
}

/// Uncorrupted records in emission order, at export precision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub fixes: Vec<GpsFix>,
    pub loran: Vec<LoranMeasurement>,
}

impl GroundTruth {
    pub fn timeline(&self) -> Vec<TimelineRecord> {
        merge_sort(
            self.fixes.clone(),
            self.loran.clone(),
            Execution::Sequential,
        )
    }

    /// Write as a `timeline_all`-schema CSV.
    pub fn write_csv(&self, path: &Path) -> Result<u64, ConvertError> {
        write_table(path, Table::All, ExportFormat::Columns, &self.timeline())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub lines: u64,
    pub gga: u64,
    pub zda: u64,
    pub rmc: u64,
    pub loran: u64,
    pub bad_checksum: u64,
    pub truncated: u64,
    pub garbage: u64,
}

impl Tally {
    pub fn corrupted(&self) -> u64 {
        self.bad_checksum + self.truncated + self.garbage
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedStream {
    pub bytes: Vec<u8>,
    pub lines: Vec<StreamLine>,
    pub truth: GroundTruth,
    pub tally: Tally,
}

impl GeneratedStream {
    /// Consecutive lines sharing an emission time, as `(time, bytes)`.
    pub fn timed_chunks(&self) -> Vec<(DateTime<Utc>, Vec<u8>)> {
        let mut out: Vec<(DateTime<Utc>, Vec<u8>)> = Vec::new();
        for l in &self.lines {
            let bytes = &self.bytes[l.start..l.end];
            match out.last_mut() {
                Some((at, buf)) if *at == l.at => buf.extend_from_slice(bytes),
                _ => out.push((l.at, bytes.to_vec())),
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Event {
    Zda,
    Rmc,
    Gga,
    Station(usize),
}

impl Event {
    fn rank(self) -> (u8, usize) {
        match self {
            Event::Zda => (0, 0),
            Event::Rmc => (0, 1),
            Event::Gga => (1, 0),
            Event::Station(i) => (2, i),
        }
    }
}

fn period_ms(rate_hz: f64) -> i64 {
    ((1000.0 / rate_hz).round() as i64).max(1)
}

fn schedule(s: &Scenario) -> Vec<(i64, Event)> {
    let dur = s.duration.as_millis() as i64;
    let mut ev = Vec::new();
    let mut every = |first: i64, step: i64, e: Event| {
        let mut t = first;
        while t < dur {
            ev.push((t, e));
            t += step;
        }
    };
    if let Some(iv) = s.zda_interval {
        every(0, iv.as_millis() as i64, Event::Zda);
    }
    if let Some(iv) = s.rmc_interval {
        every(0, iv.as_millis() as i64, Event::Rmc);
    }
    every(0, period_ms(s.gps_rate_hz), Event::Gga);
    for (i, st) in s.stations.iter().enumerate() {
        every(
            st.offset.as_millis() as i64,
            period_ms(st.rate_hz),
            Event::Station(i),
        );
    }
    ev.sort_by_key(|&(t, e)| (t, e.rank()));
    ev
}

/// Build the scenario's byte stream and ground truth.
///
/// Time ties emit date sentences first, then GGA, then stations in list
/// order. Every line draws the same number of random values whatever the
/// corruption outcome, so changing one rate does not reshuffle the rest.
pub fn generate_stream(s: &Scenario) -> GeneratedStream {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let base = &s.base_position;
    let m_per_deg_lon = METRES_PER_DEG_LAT * base.lat_deg.to_radians().cos().max(1e-6);

    let mut out = GeneratedStream {
        bytes: Vec::new(),
        lines: Vec::new(),
        truth: GroundTruth::default(),
        tally: Tally::default(),
    };

    for (t_ms, event) in schedule(s) {
        let at = s.start + TimeDelta::milliseconds(t_ms);
        let t_s = t_ms as f64 / 1000.0;
        let (kind, sentence, record) = match event {
            Event::Zda => (LineKind::Zda, serialize_zda(at), None),
            Event::Rmc => (
                LineKind::Rmc,
                serialize_rmc(at, base.lat_deg, base.lon_deg),
                None,
            ),
            Event::Gga => {
                let (n_lat, n_lon, n_alt): (f64, f64, f64) = (
                    unit.sample(&mut rng),
                    unit.sample(&mut rng),
                    unit.sample(&mut rng),
                );
                let sats: u8 = rng.random_range(6..=12);
                let hdop: f64 = rng.random_range(0.6..1.8);
                let sigma = base.noise_sigma_m;
                let lat = (base.lat_deg + n_lat * sigma / METRES_PER_DEG_LAT).clamp(-90.0, 90.0);
                let lon = (base.lon_deg + n_lon * sigma / m_per_deg_lon).clamp(-180.0, 180.0);
                let fix = GpsFix {
                    timestamp: at,
                    lat_deg: Some(lat),
                    lon_deg: Some(lon),
                    alt_m: Some(base.alt_m + n_alt * sigma),
                    fix_quality: 1,
                    num_sats: sats,
                    hdop: Some(hdop),
                    source_line: 0,
                }
                .quantized();
                (LineKind::Gga, serialize_gga(&fix), Some(Rec::Gps(fix)))
            }
            Event::Station(i) => {
                let st = &s.stations[i];
                let m = LoranMeasurement {
                    timestamp: at,
                    gri: st.gri,
                    station_role: st.role,
                    toa_us: quantize_tenth(st.toa_us.at(t_s)),
                    snr_db: quantize_tenth(st.snr_db.at(t_s)),
                    ecd_us: quantize_tenth(st.ecd_us.at(t_s)),
                    source_line: 0,
                };
                (LineKind::Loran, serialize_loran(&m), Some(Rec::Loran(m)))
            }
        };

        let c = &s.corruption;
        let (u_bad, u_trunc, u_garbage): (f64, f64, f64) =
            (rng.random(), rng.random(), rng.random());
        let flip: u8 = rng.random_range(1..=255);
        let cut_frac: f64 = rng.random();
        let garbage_len: usize = rng.random_range(4..=60);
        let garbage_seed: u64 = rng.random();

        let mut line = sentence.into_bytes();
        let damage = if u_bad < c.bad_checksum_rate {
            flip_checksum(&mut line, flip);
            Some(Damage::BadChecksum)
        } else if u_trunc < c.truncation_rate {
            truncate(&mut line, cut_frac);
            Some(Damage::Truncated)
        } else {
            None
        };

        match kind {
            LineKind::Zda => out.tally.zda += 1,
            LineKind::Rmc => out.tally.rmc += 1,
            LineKind::Gga => out.tally.gga += 1,
            LineKind::Loran => out.tally.loran += 1,
            LineKind::Garbage => {}
        }
        match damage {
            Some(Damage::BadChecksum) => out.tally.bad_checksum += 1,
            Some(Damage::Truncated) => out.tally.truncated += 1,
            None => {
                let idx = out.lines.len() as u64 + 1;
                match record {
                    Some(Rec::Gps(f)) => out.truth.fixes.push(GpsFix {
                        source_line: idx,
                        ..f
                    }),
                    Some(Rec::Loran(m)) => out.truth.loran.push(LoranMeasurement {
                        source_line: idx,
                        ..m
                    }),
                    None => {}
                }
            }
        }
        push_line(&mut out, at, kind, damage, &line);

        if u_garbage < c.garbage_line_rate {
            let g = garbage(garbage_seed, garbage_len);
            out.tally.garbage += 1;
            push_line(&mut out, at, LineKind::Garbage, None, &g);
        }
    }
    out
}

enum Rec {
    Gps(GpsFix),
    Loran(LoranMeasurement),
}

fn push_line(
    out: &mut GeneratedStream,
    at: DateTime<Utc>,
    kind: LineKind,
    damage: Option<Damage>,
    line: &[u8],
) {
    let start = out.bytes.len();
    out.bytes.extend_from_slice(line);
    out.bytes.extend_from_slice(b"\r\n");
    out.lines.push(StreamLine {
        at,
        start,
        end: out.bytes.len(),
        kind,
        damage,
    });
    out.tally.lines += 1;
}

fn flip_checksum(line: &mut Vec<u8>, flip: u8) {
    let star = line
        .iter()
        .rposition(|&b| b == b'*')
        .expect("serialized sentences carry a checksum");
    let hex = std::str::from_utf8(&line[star + 1..]).expect("ascii");
    let cs = u8::from_str_radix(hex, 16).expect("hex checksum") ^ flip;
    line.truncate(star + 1);
    line.extend_from_slice(format!("{cs:02X}").as_bytes());
}

/// Cut somewhere before the last comma, dropping at least one field.
fn truncate(line: &mut Vec<u8>, frac: f64) {
    let last_comma = line.iter().rposition(|&b| b == b',').unwrap_or(line.len());
    let cut = 1 + ((last_comma.saturating_sub(1)) as f64 * frac) as usize;
    line.truncate(cut.min(last_comma).max(1));
}

/// Non-`$`-led bytes with no CR or LF.
fn garbage(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g: Vec<u8> = (0..len)
        .map(|_| loop {
            let b: u8 = rng.random();
            if b != b'\r' && b != b'\n' {
                break b;
            }
        })
        .collect();
    if g[0] == b'$' {
        g[0] = b'#';
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{
        classify_line, frame_buffer, verify_checksum, ChecksumStatus, MessageClass,
    };
    use crate::parse::{parse_lines, ParserRegistry};
    use std::time::Duration;

    #[test]
    fn one_minute_basic_counts() {
        let s = Scenario::basic(1, Duration::from_secs(60));
        let g = generate_stream(&s);
        assert_eq!(g.tally.gga, 60);
        assert_eq!(g.tally.loran, 6);
        assert_eq!(g.tally.zda, 1);
        assert_eq!(g.truth.fixes.len(), 60);
        assert_eq!(g.truth.loran.len(), 6);
        assert_eq!(g.tally.corrupted(), 0);
        assert_eq!(g.lines.len() as u64, g.tally.lines);
        assert_eq!(g.lines.last().unwrap().end, g.bytes.len());
    }

    #[test]
    fn deterministic_per_seed() {
        let mut s = Scenario::basic(9, Duration::from_secs(600));
        s.corruption = crate::simulate::Corruption::uniform(0.05);
        let a = generate_stream(&s);
        let b = generate_stream(&s);
        assert_eq!(a.bytes, b.bytes);
        assert_eq!(a.truth, b.truth);
        s.seed = 10;
        assert_ne!(generate_stream(&s).bytes, a.bytes);
    }

    #[test]
    fn uncorrupted_lines_verify_and_parse_back() {
        let mut s = Scenario::basic(3, Duration::from_secs(1800));
        s.rmc_interval = Some(Duration::from_secs(90));
        s.corruption = crate::simulate::Corruption::uniform(0.03);
        let g = generate_stream(&s);
        for l in &g.lines {
            let raw = &g.bytes[l.start..l.end - 2];
            match (l.kind, l.damage) {
                (LineKind::Garbage, _) => assert_eq!(classify_line(raw), MessageClass::Unknown),
                (_, None) => assert_eq!(verify_checksum(raw), ChecksumStatus::Valid),
                (_, Some(Damage::BadChecksum)) => {
                    assert_eq!(verify_checksum(raw), ChecksumStatus::Invalid)
                }
                (_, Some(Damage::Truncated)) => {
                    assert_ne!(verify_checksum(raw), ChecksumStatus::Valid)
                }
            }
        }
        let lines = crate::classify::classify_bytes(&g.bytes, Execution::Sequential);
        assert_eq!(lines.len(), frame_buffer(&g.bytes).len());
        // drop what classification would quarantine, then parse
        let kept: Vec<_> = lines
            .into_iter()
            .filter(|l| {
                l.class != MessageClass::Unknown && l.checksum_status != ChecksumStatus::Invalid
            })
            .collect();
        let out = parse_lines(
            &kept,
            s.start,
            &ParserRegistry::default(),
            Execution::Sequential,
        );
        assert_eq!(out.fixes.len(), g.truth.fixes.len());
        assert_eq!(out.loran.len(), g.truth.loran.len());
        for (a, b) in out.fixes.iter().zip(&g.truth.fixes) {
            assert!(a.same_measurement(b), "{a:?} vs {b:?}");
        }
        for (a, b) in out.loran.iter().zip(&g.truth.loran) {
            assert!(a.same_measurement(b), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn bad_checksum_count_is_binomial() {
        let mut s = Scenario::basic(2024, Duration::from_secs(10_000));
        s.stations.clear();
        s.zda_interval = None;
        s.corruption.bad_checksum_rate = 0.1;
        let g = generate_stream(&s);
        assert_eq!(g.tally.lines, 10_000);
        let bad = frame_buffer(&g.bytes)
            .iter()
            .filter(|f| verify_checksum(f.slice(&g.bytes)) == ChecksumStatus::Invalid)
            .count() as f64;
        let (n, p) = (10_000.0, 0.1);
        let sigma = n * p * (1.0 - p);
        assert!((bad - n * p).abs() <= 3.0 * sigma.sqrt(), "{bad}");
    }

    #[test]
    fn timestamps_never_decrease() {
        let g = generate_stream(&Scenario::basic(5, Duration::from_secs(3600)));
        assert!(g.lines.windows(2).all(|w| w[0].at <= w[1].at));
        let chunks = g.timed_chunks();
        assert_eq!(
            chunks.iter().map(|c| c.1.len()).sum::<usize>(),
            g.bytes.len()
        );
    }
}
