#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use gpsloran::orchestrate::{
    Hooks, ManualClock, Pipeline, PipelineConfig, PipelineError, RunReport,
};
use gpsloran::record::{RetryPolicy, SourceEndpoint};
use gpsloran::simulate::{GeneratedStream, ScriptedSource};

/// Config for runs fed by a scripted source; the endpoint is never dialled.
pub fn scripted_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(SourceEndpoint::tcp("127.0.0.1:9").unwrap(), out);
    cfg.retry = RetryPolicy::none();
    cfg.formats = vec![
        gpsloran::convert::ExportFormat::Columns,
        gpsloran::convert::ExportFormat::Lines,
    ];
    cfg
}

/// Run the pipeline over `stream` in scenario time. The clock starts at
/// `start` and is left at `end` when the stream runs out.
pub fn run_scripted(
    stream: &GeneratedStream,
    cfg: PipelineConfig,
    hooks: Hooks,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
) -> Result<RunReport, PipelineError> {
    let clock = ManualClock::new(start);
    let source = ScriptedSource::new(stream.timed_chunks(), clock.clone()).ending_at(end);
    Pipeline::new(cfg)
        .with_clock(Arc::new(clock))
        .with_source(Box::new(source))
        .with_hooks(hooks)
        .run()
}

/// Every regular file under `dir`, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    let Ok(rd) = fs::read_dir(dir) else { return };
    for e in rd.flatten() {
        let p = e.path();
        if p.is_dir() {
            walk(root, &p, out);
        } else {
            out.insert(
                p.strip_prefix(root).unwrap().to_owned(),
                fs::read(&p).unwrap(),
            );
        }
    }
}

pub fn hours(h: u64) -> Duration {
    Duration::from_secs(h * 3600)
}

pub mod corpus {
    use chrono::{DateTime, TimeDelta, TimeZone, Utc};
    use gpsloran::classify::with_checksum;
    use gpsloran::parse::{
        serialize_gga, serialize_loran, serialize_rmc, serialize_zda, GpsFix, LoranMeasurement,
        StationRole,
    };
    use rand::seq::IndexedRandom;
    use rand::Rng;

    /// What a corpus line was built as.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Kind {
        Gga,
        Zda,
        Rmc,
        Loran,
        Garbage,
        BadChecksum,
        NoChecksum,
    }

    pub fn base_time() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 4, 17, 0, 0, 0).unwrap()
    }

    pub fn random_fix(rng: &mut impl Rng, at: DateTime<Utc>) -> GpsFix {
        let no_fix = rng.random_bool(0.05);
        GpsFix {
            timestamp: at,
            lat_deg: (!no_fix).then(|| rng.random_range(-89.99..89.99)),
            lon_deg: (!no_fix).then(|| rng.random_range(-179.99..179.99)),
            alt_m: (!no_fix).then(|| rng.random_range(-400.0..9000.0)),
            fix_quality: if no_fix { 0 } else { rng.random_range(1..=8) },
            num_sats: rng.random_range(0..=24),
            hdop: rng.random_bool(0.9).then(|| rng.random_range(0.5..50.0)),
            source_line: 0,
        }
    }

    pub fn random_loran(rng: &mut impl Rng, at: DateTime<Utc>) -> LoranMeasurement {
        let gri = rng.random_range(4000..=9999u16);
        LoranMeasurement {
            timestamp: at,
            gri,
            station_role: *StationRole::ALL.choose(rng).unwrap(),
            toa_us: rng.random_range(0.0..f64::from(gri) * 10.0 - 0.1),
            snr_db: rng.random_range(-20.0..40.0),
            ecd_us: rng.random_range(-5.0..5.0),
            source_line: 0,
        }
    }

    fn garbage(rng: &mut impl Rng) -> Vec<u8> {
        let n = rng.random_range(0..80);
        (0..n)
            .map(|_| loop {
                let b: u8 = rng.random();
                if b != b'\n' && b != b'\r' {
                    break b;
                }
            })
            .collect()
    }

    /// One line (no terminator) of the given kind at time `at`.
    pub fn line(rng: &mut impl Rng, kind: Kind, at: DateTime<Utc>) -> Vec<u8> {
        match kind {
            Kind::Gga => serialize_gga(&random_fix(rng, at)).into_bytes(),
            Kind::Zda => serialize_zda(at).into_bytes(),
            Kind::Rmc => serialize_rmc(at, 37.5, 127.0).into_bytes(),
            Kind::Loran => serialize_loran(&random_loran(rng, at)).into_bytes(),
            Kind::Garbage => garbage(rng),
            Kind::BadChecksum => {
                let mut s = serialize_gga(&random_fix(rng, at)).into_bytes();
                let n = s.len();
                s[n - 1] = if s[n - 1] == b'0' { b'1' } else { b'0' };
                s
            }
            Kind::NoChecksum => with_checksum("$GPZDA,000000.00,17,04,2020,00,00")
                .split('*')
                .next()
                .unwrap()
                .as_bytes()
                .to_vec(),
        }
    }

    pub const KINDS: [Kind; 7] = [
        Kind::Gga,
        Kind::Zda,
        Kind::Rmc,
        Kind::Loran,
        Kind::Garbage,
        Kind::BadChecksum,
        Kind::NoChecksum,
    ];

    /// `n` lines of mixed kinds, one second apart, CRLF or LF terminated.
    pub fn mixed(rng: &mut impl Rng, n: usize) -> (Vec<u8>, Vec<Vec<u8>>) {
        let mut bytes = Vec::new();
        let mut lines = Vec::with_capacity(n);
        for i in 0..n {
            let kind = *KINDS.choose(rng).unwrap();
            let l = line(rng, kind, base_time() + TimeDelta::seconds(i as i64));
            bytes.extend_from_slice(&l);
            bytes.extend_from_slice(if rng.random_bool(0.9) { b"\r\n" } else { b"\n" });
            lines.push(l);
        }
        (bytes, lines)
    }
}

/// Checksum rule written out independently of the library: XOR of the
/// bytes between the first `$` and the last `*`, against two hex digits
/// that end the line.
pub fn oracle_checksum(line: &[u8]) -> &'static str {
    let Some(star) = line.iter().rposition(|&b| b == b'*') else {
        return "absent";
    };
    let tail = &line[star + 1..];
    let Some(start) = line[..star].iter().position(|&b| b == b'$') else {
        return "invalid";
    };
    if tail.len() != 2 || !tail.iter().all(u8::is_ascii_hexdigit) {
        return "invalid";
    }
    let want = u8::from_str_radix(std::str::from_utf8(tail).unwrap(), 16).unwrap();
    let mut x = 0u8;
    for b in &line[start + 1..star] {
        x ^= *b;
    }
    if x == want {
        "valid"
    } else {
        "invalid"
    }
}
