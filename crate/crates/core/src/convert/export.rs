//! Timeline files, the import reader, and the per-export manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::summary::{find_gaps, Gap};
use super::timeline::{Payload, TimelineRecord};
use super::ConvertError;
use crate::digest::sha256_file;
use crate::parse::{GpsFix, LoranMeasurement, StationRole};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    /// Comma-separated with a header row.
    Columns,
    /// One JSON object per line.
    Lines,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Columns => "csv",
            ExportFormat::Lines => "jsonl",
        }
    }

    fn from_extension(ext: &str) -> Option<Self> {
        match ext {
            "csv" => Some(ExportFormat::Columns),
            "jsonl" => Some(ExportFormat::Lines),
            _ => None,
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Columns => "columns",
            ExportFormat::Lines => "lines",
        })
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "columns" | "csv" => Ok(ExportFormat::Columns),
            "lines" | "jsonl" => Ok(ExportFormat::Lines),
            other => Err(format!("unknown export format {other:?} (columns|lines)")),
        }
    }
}

/// Which of the three timeline files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Gps,
    Loran,
    All,
}

impl Table {
    pub const ALL: [Table; 3] = [Table::Gps, Table::Loran, Table::All];

    pub fn stem(self) -> &'static str {
        match self {
            Table::Gps => "timeline_gps",
            Table::Loran => "timeline_loran",
            Table::All => "timeline_all",
        }
    }

    pub fn file_name(self, format: ExportFormat) -> String {
        format!("{}.{}", self.stem(), format.extension())
    }

    fn header(self) -> &'static [&'static str] {
        match self {
            Table::Gps => &GPS_COLUMNS,
            Table::Loran => &LORAN_COLUMNS,
            Table::All => &ALL_COLUMNS,
        }
    }

    fn includes(self, p: &Payload) -> bool {
        matches!(
            (self, p),
            (Table::All, _) | (Table::Gps, Payload::Gps(_)) | (Table::Loran, Payload::Loran(_))
        )
    }
}

const GPS_COLUMNS: [&str; 7] = [
    "timestamp",
    "lat_deg",
    "lon_deg",
    "alt_m",
    "fix_quality",
    "num_sats",
    "hdop",
];
const LORAN_COLUMNS: [&str; 6] = [
    "timestamp",
    "gri",
    "station_role",
    "toa_us",
    "snr_db",
    "ecd_us",
];
const ALL_COLUMNS: [&str; 13] = [
    "timestamp",
    "record_type",
    "lat_deg",
    "lon_deg",
    "alt_m",
    "fix_quality",
    "num_sats",
    "hdop",
    "gri",
    "station_role",
    "toa_us",
    "snr_db",
    "ecd_us",
];

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Serialize, Deserialize)]
struct GpsCols {
    lat_deg: Option<f64>,
    lon_deg: Option<f64>,
    alt_m: Option<f64>,
    fix_quality: u8,
    num_sats: u8,
    hdop: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct LoranCols {
    gri: u16,
    station_role: StationRole,
    toa_us: f64,
    snr_db: f64,
    ecd_us: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record_type", rename_all = "lowercase")]
enum Tagged {
    Gps(GpsCols),
    Loran(LoranCols),
}

#[derive(Serialize, Deserialize)]
struct GpsRow {
    timestamp: String,
    #[serde(flatten)]
    cols: GpsCols,
}

#[derive(Serialize, Deserialize)]
struct LoranRow {
    timestamp: String,
    #[serde(flatten)]
    cols: LoranCols,
}

#[derive(Serialize, Deserialize)]
struct AllRow {
    timestamp: String,
    #[serde(flatten)]
    payload: Tagged,
}

impl From<&GpsFix> for GpsCols {
    fn from(f: &GpsFix) -> Self {
        GpsCols {
            lat_deg: f.lat_deg,
            lon_deg: f.lon_deg,
            alt_m: f.alt_m,
            fix_quality: f.fix_quality,
            num_sats: f.num_sats,
            hdop: f.hdop,
        }
    }
}

impl From<&LoranMeasurement> for LoranCols {
    fn from(m: &LoranMeasurement) -> Self {
        LoranCols {
            gri: m.gri,
            station_role: m.station_role,
            toa_us: m.toa_us,
            snr_db: m.snr_db,
            ecd_us: m.ecd_us,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn gps_cells(f: &GpsFix) -> [String; 6] {
    [
        opt(f.lat_deg),
        opt(f.lon_deg),
        opt(f.alt_m),
        f.fix_quality.to_string(),
        f.num_sats.to_string(),
        opt(f.hdop),
    ]
}

fn loran_cells(m: &LoranMeasurement) -> [String; 5] {
    [
        m.gri.to_string(),
        m.station_role.to_string(),
        m.toa_us.to_string(),
        m.snr_db.to_string(),
        m.ecd_us.to_string(),
    ]
}

fn csv_row(table: Table, rec: &TimelineRecord) -> Vec<String> {
    let mut row = vec![format_timestamp(rec.timestamp)];
    match (table, &rec.payload) {
        (Table::Gps, Payload::Gps(f)) => row.extend(gps_cells(f)),
        (Table::Loran, Payload::Loran(m)) => row.extend(loran_cells(m)),
        (Table::All, Payload::Gps(f)) => {
            row.push("gps".into());
            row.extend(gps_cells(f));
            row.extend(std::iter::repeat_n(String::new(), 5));
        }
        (Table::All, Payload::Loran(m)) => {
            row.push("loran".into());
            row.extend(std::iter::repeat_n(String::new(), 6));
            row.extend(loran_cells(m));
        }
        _ => unreachable!("table filter"),
    }
    row
}

fn json_row(table: Table, rec: &TimelineRecord) -> serde_json::Result<String> {
    let timestamp = format_timestamp(rec.timestamp);
    match (table, &rec.payload) {
        (Table::Gps, Payload::Gps(f)) => serde_json::to_string(&GpsRow {
            timestamp,
            cols: f.into(),
        }),
        (Table::Loran, Payload::Loran(m)) => serde_json::to_string(&LoranRow {
            timestamp,
            cols: m.into(),
        }),
        (Table::All, p) => serde_json::to_string(&AllRow {
            timestamp,
            payload: match p {
                Payload::Gps(f) => Tagged::Gps(f.into()),
                Payload::Loran(m) => Tagged::Loran(m.into()),
            },
        }),
        _ => unreachable!("table filter"),
    }
}

/// Write one timeline file; returns the number of records written.
pub fn write_table(
    path: &Path,
    table: Table,
    format: ExportFormat,
    timeline: &[TimelineRecord],
) -> Result<u64, ConvertError> {
    let io_err = |e| ConvertError::io(path, e);
    let file = File::create(path).map_err(io_err)?;
    let mut n = 0u64;
    match format {
        ExportFormat::Columns => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(BufWriter::new(file));
            w.write_record(table.header())
                .map_err(|e| ConvertError::csv(path, e))?;
            for rec in timeline.iter().filter(|r| table.includes(&r.payload)) {
                w.write_record(csv_row(table, rec))
                    .map_err(|e| ConvertError::csv(path, e))?;
                n += 1;
            }
            let inner = w
                .into_inner()
                .map_err(|e| ConvertError::io(path, e.into_error()))?;
            inner
                .into_inner()
                .map_err(|e| io_err(e.into_error()))?
                .sync_data()
                .map_err(io_err)?;
        }
        ExportFormat::Lines => {
            let mut w = BufWriter::new(file);
            for rec in timeline.iter().filter(|r| table.includes(&r.payload)) {
                let line = json_row(table, rec).map_err(|e| ConvertError::json(path, e))?;
                writeln!(w, "{line}").map_err(io_err)?;
                n += 1;
            }
            w.into_inner()
                .map_err(|e| io_err(e.into_error()))?
                .sync_data()
                .map_err(io_err)?;
        }
    }
    Ok(n)
}

fn parse_ts(path: &Path, line: u64, s: &str) -> Result<DateTime<Utc>, ConvertError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| ConvertError::import(path, line, format!("timestamp {s:?}: {e}")))
}

fn gps_from(timestamp: DateTime<Utc>, c: GpsCols) -> Payload {
    Payload::Gps(GpsFix {
        timestamp,
        lat_deg: c.lat_deg,
        lon_deg: c.lon_deg,
        alt_m: c.alt_m,
        fix_quality: c.fix_quality,
        num_sats: c.num_sats,
        hdop: c.hdop,
        source_line: 0,
    })
}

fn loran_from(timestamp: DateTime<Utc>, c: LoranCols) -> Payload {
    Payload::Loran(LoranMeasurement {
        timestamp,
        gri: c.gri,
        station_role: c.station_role,
        toa_us: c.toa_us,
        snr_db: c.snr_db,
        ecd_us: c.ecd_us,
        source_line: 0,
    })
}

/// Read a timeline file written by [`write_table`]. The table and format
/// are taken from the file name; arrival indices are row numbers.
pub fn import_timeline(path: &Path) -> Result<Vec<TimelineRecord>, ConvertError> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let (stem, ext) = name
        .rsplit_once('.')
        .ok_or_else(|| ConvertError::import(path, 0, "no file extension"))?;
    let format = ExportFormat::from_extension(ext)
        .ok_or_else(|| ConvertError::import(path, 0, format!("unknown extension {ext:?}")))?;
    let table = Table::ALL
        .into_iter()
        .find(|t| t.stem() == stem)
        .ok_or_else(|| ConvertError::import(path, 0, "not a timeline file"))?;
    let file = File::open(path).map_err(|e| ConvertError::io(path, e))?;
    match format {
        ExportFormat::Columns => import_csv(path, file, table),
        ExportFormat::Lines => import_jsonl(path, file, table),
    }
}

fn import_csv(path: &Path, file: File, table: Table) -> Result<Vec<TimelineRecord>, ConvertError> {
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let header = r.headers().map_err(|e| ConvertError::csv(path, e))?.clone();
    if header.iter().ne(table.header().iter().copied()) {
        return Err(ConvertError::import(path, 1, "unexpected header"));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| ConvertError::csv(path, e))?;
        let bad = |what: &str| ConvertError::import(path, line, what.to_owned());
        let f64_at = |idx: usize| -> Result<Option<f64>, ConvertError> {
            let s = row.get(idx).unwrap_or_default();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| bad(&format!("column {idx}: {s:?}")))
        };
        let req = |idx: usize| -> Result<f64, ConvertError> {
            f64_at(idx)?.ok_or_else(|| bad(&format!("column {idx} is empty")))
        };
        let int_at = |idx: usize| -> Result<u16, ConvertError> {
            let s = row.get(idx).unwrap_or_default();
            s.parse().map_err(|_| bad(&format!("column {idx}: {s:?}")))
        };
        let ts = parse_ts(path, line, row.get(0).unwrap_or_default())?;
        let gps_at = |o: usize| -> Result<Payload, ConvertError> {
            Ok(gps_from(
                ts,
                GpsCols {
                    lat_deg: f64_at(o)?,
                    lon_deg: f64_at(o + 1)?,
                    alt_m: f64_at(o + 2)?,
                    fix_quality: int_at(o + 3)? as u8,
                    num_sats: int_at(o + 4)? as u8,
                    hdop: f64_at(o + 5)?,
                },
            ))
        };
        let loran_at = |o: usize| -> Result<Payload, ConvertError> {
            let role = row
                .get(o + 1)
                .and_then(|s| s.chars().next())
                .and_then(StationRole::from_letter)
                .ok_or_else(|| bad("station_role"))?;
            Ok(loran_from(
                ts,
                LoranCols {
                    gri: int_at(o)?,
                    station_role: role,
                    toa_us: req(o + 2)?,
                    snr_db: req(o + 3)?,
                    ecd_us: req(o + 4)?,
                },
            ))
        };
        let payload = match table {
            Table::Gps => gps_at(1)?,
            Table::Loran => loran_at(1)?,
            Table::All => match row.get(1) {
                Some("gps") => gps_at(2)?,
                Some("loran") => loran_at(8)?,
                other => return Err(bad(&format!("record_type {other:?}"))),
            },
        };
        out.push(TimelineRecord::new(payload, out.len() as u64));
    }
    Ok(out)
}

fn import_jsonl(
    path: &Path,
    file: File,
    table: Table,
) -> Result<Vec<TimelineRecord>, ConvertError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i as u64 + 1;
        let line = line.map_err(|e| ConvertError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| ConvertError::import(path, n, e.to_string());
        let payload = match table {
            Table::Gps => {
                let r: GpsRow = serde_json::from_str(&line).map_err(bad)?;
                gps_from(parse_ts(path, n, &r.timestamp)?, r.cols)
            }
            Table::Loran => {
                let r: LoranRow = serde_json::from_str(&line).map_err(bad)?;
                loran_from(parse_ts(path, n, &r.timestamp)?, r.cols)
            }
            Table::All => {
                let r: AllRow = serde_json::from_str(&line).map_err(bad)?;
                let ts = parse_ts(path, n, &r.timestamp)?;
                match r.payload {
                    Tagged::Gps(c) => gps_from(ts, c),
                    Tagged::Loran(c) => loran_from(ts, c),
                }
            }
        };
        out.push(TimelineRecord::new(payload, out.len() as u64));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFile {
    /// Relative to the manifest's directory.
    pub path: String,
    pub format: ExportFormat,
    pub records: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCounts {
    pub gps_fix: u64,
    /// Per station designator, e.g. `9930M`.
    pub loran: BTreeMap<String, u64>,
    pub parse_errors: u64,
    pub quarantined: u64,
    /// Lines in classes no parser handles, e.g. GSV or other vendors.
    #[serde(default)]
    pub unsupported: u64,
}

impl RecordCounts {
    pub fn loran_total(&self) -> u64 {
        self.loran.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub first: DateTime<Utc>,
    pub last: DateTime<Utc>,
}

/// Inventory of one export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: String,
    /// Raw segment the records came from, when exported per segment.
    pub segment: Option<String>,
    pub time_span: Option<TimeSpan>,
    pub record_counts: RecordCounts,
    pub export_files: Vec<ExportFile>,
    #[serde(with = "humantime_serde")]
    pub gap_threshold: Duration,
    pub gap_list: Vec<Gap>,
}

impl SessionManifest {
    pub fn read(dir: &Path) -> Result<Self, ConvertError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| ConvertError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| ConvertError::json(&path, e))
    }

    /// Check every listed file against its digest. Returns the mismatches.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.export_files
            .iter()
            .filter_map(|f| match sha256_file(&dir.join(&f.path)) {
                Ok(d) if d == f.sha256 => None,
                Ok(_) => Some(format!("{}: digest mismatch", f.path)),
                Err(e) => Some(format!("{}: {e}", f.path)),
            })
            .collect()
    }
}

/// Everything the manifest needs that is not in the timeline itself.
#[derive(Debug, Clone)]
pub struct ExportInfo {
    pub session_id: String,
    pub segment: Option<String>,
    pub parse_errors: u64,
    pub quarantined: u64,
    pub unsupported: u64,
    pub gap_threshold: Duration,
}

/// Write the three timeline files in each format, then `manifest.json`.
///
/// Output is a pure function of the inputs. On failure every file written
/// so far is removed.
pub fn export(
    timeline: &[TimelineRecord],
    formats: &[ExportFormat],
    out_dir: &Path,
    info: &ExportInfo,
) -> Result<SessionManifest, ConvertError> {
    fs::create_dir_all(out_dir).map_err(|e| ConvertError::io(out_dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = export_into(timeline, formats, out_dir, info, &mut written);
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

fn export_into(
    timeline: &[TimelineRecord],
    formats: &[ExportFormat],
    out_dir: &Path,
    info: &ExportInfo,
    written: &mut Vec<PathBuf>,
) -> Result<SessionManifest, ConvertError> {
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();

    let mut export_files = Vec::new();
    for format in formats {
        for table in Table::ALL {
            let name = table.file_name(format);
            let path = out_dir.join(&name);
            written.push(path.clone());
            let records = write_table(&path, table, format, timeline)?;
            let sha256 = sha256_file(&path).map_err(|e| ConvertError::io(&path, e))?;
            export_files.push(ExportFile {
                path: name,
                format,
                records,
                sha256,
            });
        }
    }

    let mut counts = RecordCounts {
        parse_errors: info.parse_errors,
        quarantined: info.quarantined,
        unsupported: info.unsupported,
        ..Default::default()
    };
    for r in timeline {
        match &r.payload {
            Payload::Gps(_) => counts.gps_fix += 1,
            Payload::Loran(m) => *counts.loran.entry(m.station().to_string()).or_default() += 1,
        }
    }
    let manifest = SessionManifest {
        session_id: info.session_id.clone(),
        segment: info.segment.clone(),
        time_span: match (timeline.first(), timeline.last()) {
            (Some(a), Some(b)) => Some(TimeSpan {
                first: a.timestamp,
                last: b.timestamp,
            }),
            _ => None,
        },
        record_counts: counts,
        export_files,
        gap_threshold: info.gap_threshold,
        gap_list: find_gaps(timeline, info.gap_threshold),
    };
    let path = out_dir.join(MANIFEST_FILE);
    written.push(path.clone());
    let mut text =
        serde_json::to_string_pretty(&manifest).map_err(|e| ConvertError::json(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| ConvertError::io(&path, e))?;
    Ok(manifest)
}
