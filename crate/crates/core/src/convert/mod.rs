//! Timeline merge, export and summaries.

mod export;
mod summary;
mod timeline;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

pub use export::{
    export, format_timestamp, import_timeline, write_table, ExportFile, ExportFormat, ExportInfo,
    RecordCounts, SessionManifest, Table, TimeSpan, MANIFEST_FILE,
};
pub use summary::{
    find_gaps, summarize, BoundingBox, Gap, SnrStats, Summary, DEFAULT_GAP_THRESHOLD,
};
pub use timeline::{is_sorted, merge_sort, timeline_order, Payload, TimelineRecord};

use crate::classify::{ClassificationReport, ClassifiedDir, ClassifyError};
use crate::parse::{parse_lines, LineError, ParseOutcome, ParserRegistry, StationId};
use crate::Execution;

pub const PARSE_ERRORS_FILE: &str = "parse_errors.tsv";

#[derive(Debug, thiserror::Error)]
pub enum ConvertError {
    #[error(transparent)]
    Classified(#[from] ClassifyError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Import {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{0}")]
    Injected(String),
}

impl ConvertError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ConvertError::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        ConvertError::Csv {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        ConvertError::Json {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn import(path: &Path, line: u64, reason: impl Into<String>) -> Self {
        ConvertError::Import {
            path: path.to_owned(),
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub formats: Vec<ExportFormat>,
    pub gap_threshold: Duration,
    pub exec: Execution,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            formats: vec![ExportFormat::Columns],
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            exec: Execution::default(),
        }
    }
}

/// A classified segment, parsed.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub report: ClassificationReport,
    pub outcome: ParseOutcome,
}

/// Parse a classified directory in segment order.
pub fn parse_classified(
    dir: &Path,
    registry: &ParserRegistry,
    exec: Execution,
) -> Result<Parsed, ConvertError> {
    let classified = ClassifiedDir::open(dir)?;
    let lines = classified.ordered_lines()?;
    let outcome = parse_lines(&lines, classified.report.segment.open_time, registry, exec);
    Ok(Parsed {
        report: classified.report,
        outcome,
    })
}

/// `line_number<TAB>class<TAB>reason`, one row per error.
pub fn write_parse_errors(path: &Path, errors: &[LineError]) -> Result<(), ConvertError> {
    let io_err = |e| ConvertError::io(path, e);
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    writeln!(w, "line_number\tclass\treason").map_err(io_err)?;
    for e in errors {
        let reason = e.reason.replace(['\t', '\r', '\n'], " ");
        writeln!(w, "{}\t{}\t{}", e.line_number, e.class, reason).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Merge, export and write the error report for a parsed segment.
pub fn export_parsed(
    parsed: Parsed,
    out_dir: &Path,
    opts: &ConvertOptions,
) -> Result<SessionManifest, ConvertError> {
    let Parsed { report, outcome } = parsed;
    let timeline = merge_sort(outcome.fixes, outcome.loran, opts.exec);
    let info = ExportInfo {
        session_id: report.segment.session_id.clone(),
        segment: Some(report.segment.file.clone()),
        parse_errors: outcome.errors.len() as u64,
        quarantined: report.quarantined_lines,
        unsupported: outcome.unsupported_lines,
        gap_threshold: opts.gap_threshold,
    };
    let manifest = export(&timeline, &opts.formats, out_dir, &info)?;
    let errors_path = out_dir.join(PARSE_ERRORS_FILE);
    if let Err(e) = write_parse_errors(&errors_path, &outcome.errors) {
        let _ = fs::remove_file(&errors_path);
        for f in &manifest.export_files {
            let _ = fs::remove_file(out_dir.join(&f.path));
        }
        let _ = fs::remove_file(out_dir.join(MANIFEST_FILE));
        return Err(e);
    }
    Ok(manifest)
}

/// Parse and export one classified directory.
pub fn convert_classified(
    classified_dir: &Path,
    out_dir: &Path,
    opts: &ConvertOptions,
) -> Result<SessionManifest, ConvertError> {
    let parsed = parse_classified(classified_dir, &ParserRegistry::default(), opts.exec)?;
    export_parsed(parsed, out_dir, opts)
}

/// `timestamp,snr_db` for one station.
pub fn write_snr_series(
    path: &Path,
    timeline: &[TimelineRecord],
    station: StationId,
) -> Result<u64, ConvertError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ConvertError::csv(path, e))?;
    w.write_record(["timestamp", "snr_db"])
        .map_err(|e| ConvertError::csv(path, e))?;
    let mut n = 0;
    for r in timeline {
        if let Payload::Loran(m) = &r.payload {
            if m.station() == station {
                w.write_record([format_timestamp(m.timestamp), m.snr_db.to_string()])
                    .map_err(|e| ConvertError::csv(path, e))?;
                n += 1;
            }
        }
    }
    w.flush().map_err(|e| ConvertError::io(path, e))?;
    Ok(n)
}

/// `timestamp,lat_deg,lon_deg,alt_m` for every fix with a position.
pub fn write_fix_series(path: &Path, timeline: &[TimelineRecord]) -> Result<u64, ConvertError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ConvertError::csv(path, e))?;
    w.write_record(["timestamp", "lat_deg", "lon_deg", "alt_m"])
        .map_err(|e| ConvertError::csv(path, e))?;
    let mut n = 0;
    for r in timeline {
        if let Payload::Gps(f) = &r.payload {
            if let (false, Some(lat), Some(lon)) = (f.is_no_fix(), f.lat_deg, f.lon_deg) {
                let alt = f.alt_m.map(|a| a.to_string()).unwrap_or_default();
                w.write_record([
                    format_timestamp(f.timestamp),
                    lat.to_string(),
                    lon.to_string(),
                    alt,
                ])
                .map_err(|e| ConvertError::csv(path, e))?;
                n += 1;
            }
        }
    }
    w.flush().map_err(|e| ConvertError::io(path, e))?;
    Ok(n)
}
