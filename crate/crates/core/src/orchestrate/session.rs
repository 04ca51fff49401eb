//! Reading back a processed session.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::process::{CONVERTED_DIR, SEGMENTS_DIR};
use crate::convert::{
    import_timeline, summarize, timeline_order, write_fix_series, write_snr_series, ConvertError,
    ExportFormat, Summary, Table, TimelineRecord, MANIFEST_FILE,
};
use crate::parse::StationId;

pub const SUMMARY_FILE: &str = "summary.json";
pub const FIX_SERIES_FILE: &str = "gps_fixes.csv";

pub fn snr_series_file(station: StationId) -> String {
    format!("snr_{station}.csv")
}

/// Converted directories under a session, in segment order. A directory
/// that is itself an export (has a manifest) is returned as is.
pub fn converted_dirs(dir: &Path) -> Result<Vec<PathBuf>, ConvertError> {
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![dir.to_owned()]);
    }
    let segs = dir.join(SEGMENTS_DIR);
    let mut out: Vec<PathBuf> = fs::read_dir(&segs)
        .map_err(|e| ConvertError::Io {
            path: segs.clone(),
            source: e,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path().join(CONVERTED_DIR))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    out.sort();
    Ok(out)
}

/// All converted records of a session as one timeline.
pub fn session_timeline(dir: &Path) -> Result<Vec<TimelineRecord>, ConvertError> {
    let mut all = Vec::new();
    for d in converted_dirs(dir)? {
        let file = [ExportFormat::Columns, ExportFormat::Lines]
            .into_iter()
            .map(|f| d.join(Table::All.file_name(f)))
            .find(|p| p.is_file())
            .ok_or_else(|| ConvertError::import(&d, 0, "no timeline_all export"))?;
        for mut r in import_timeline(&file)? {
            r.arrival_index = all.len() as u64;
            all.push(r);
        }
    }
    all.sort_by(timeline_order);
    Ok(all)
}

#[derive(Debug, Clone)]
pub struct StatsReport {
    pub summary: Summary,
    /// Station and number of samples written.
    pub snr_series: Vec<(StationId, u64)>,
    pub fix_count: u64,
    pub files: Vec<PathBuf>,
}

/// Summary plus SNR and fix series for a processed session.
///
/// Without `station` a series is written for every station seen.
pub fn write_stats(
    session: &Path,
    out_dir: &Path,
    station: Option<StationId>,
    gap_threshold: Duration,
) -> Result<StatsReport, ConvertError> {
    let timeline = session_timeline(session)?;
    let summary = summarize(&timeline, gap_threshold);
    fs::create_dir_all(out_dir).map_err(|e| ConvertError::io(out_dir, e))?;

    let mut files = Vec::new();
    let stations: Vec<StationId> = match station {
        Some(s) => vec![s],
        None => summary.stations.keys().copied().collect(),
    };
    let mut snr_series = Vec::new();
    for st in stations {
        let path = out_dir.join(snr_series_file(st));
        snr_series.push((st, write_snr_series(&path, &timeline, st)?));
        files.push(path);
    }
    let path = out_dir.join(FIX_SERIES_FILE);
    let fix_count = write_fix_series(&path, &timeline)?;
    files.push(path);

    let path = out_dir.join(SUMMARY_FILE);
    let json = serde_json::to_vec_pretty(&summary).map_err(|e| ConvertError::json(&path, e))?;
    crate::record::write_atomic(&path, &json).map_err(|e| ConvertError::io(&path, e))?;
    files.push(path);

    Ok(StatsReport {
        summary,
        snr_series,
        fix_count,
        files,
    })
}
