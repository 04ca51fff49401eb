//! Routing of a closed segment into per-class stores.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::checksum::{verify_checksum, ChecksumStatus};
use super::framing::{frame_buffer, FramedLine};
use super::header::{classify_line, MessageClass};
use super::ClassifyError;
use crate::digest::sha256_hex;
use crate::exec::Execution;

pub const QUARANTINE_STORE: &str = "quarantine";
pub const REPORT_FILE: &str = "report.json";
pub const ROUTING_FILE: &str = "routing.tsv";
pub const DEFAULT_MAX_LINE_LEN: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePolicy {
    /// Send lines with a bad checksum to quarantine instead of their class store.
    pub quarantine_invalid: bool,
    /// Lines longer than this are quarantined.
    pub max_line_len: usize,
}

impl Default for RoutePolicy {
    fn default() -> Self {
        Self {
            quarantine_invalid: true,
            max_line_len: DEFAULT_MAX_LINE_LEN,
        }
    }
}

/// Why a line was sent to quarantine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuarantineReason {
    UnknownClass,
    InvalidChecksum,
    Oversized,
}

impl QuarantineReason {
    fn as_str(self) -> &'static str {
        match self {
            QuarantineReason::UnknownClass => "unknown-class",
            QuarantineReason::InvalidChecksum => "invalid-checksum",
            QuarantineReason::Oversized => "oversized",
        }
    }
}

/// One framed line with its classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifiedLine {
    pub raw: Vec<u8>,
    pub class: MessageClass,
    pub checksum_status: ChecksumStatus,
    pub segment_offset: u64,
    pub line_number: u64,
}

/// Where a line ended up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Destination {
    Store(String),
    Quarantine(QuarantineReason),
}

impl Destination {
    pub fn store_name(&self) -> &str {
        match self {
            Destination::Store(name) => name,
            Destination::Quarantine(_) => QUARANTINE_STORE,
        }
    }
}

/// Decide the destination of a classified line under `policy`.
pub fn destination(line: &ClassifiedLine, policy: &RoutePolicy) -> Destination {
    destination_of(line.raw.len(), &line.class, line.checksum_status, policy)
}

fn destination_of(
    len: usize,
    class: &MessageClass,
    checksum: ChecksumStatus,
    policy: &RoutePolicy,
) -> Destination {
    if len > policy.max_line_len {
        return Destination::Quarantine(QuarantineReason::Oversized);
    }
    let Some(name) = class.store_name() else {
        return Destination::Quarantine(QuarantineReason::UnknownClass);
    };
    if checksum == ChecksumStatus::Invalid && policy.quarantine_invalid {
        return Destination::Quarantine(QuarantineReason::InvalidChecksum);
    }
    Destination::Store(name)
}

/// Reference to the segment a report was produced from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub file: String,
    pub session_id: String,
    pub open_time: DateTime<Utc>,
    pub byte_count: u64,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub segment: SegmentRef,
    pub policy: RoutePolicy,
    /// Line count per store; the `quarantine` entry is always present.
    pub counts: BTreeMap<String, u64>,
    /// Output file (relative to the report directory) per store.
    pub output_paths: BTreeMap<String, String>,
    pub total_lines: u64,
    pub quarantined_lines: u64,
    pub invalid_checksum_lines: u64,
    pub oversized_lines: u64,
    /// Line number of a final line that had no terminator, if any.
    pub unterminated_line: Option<u64>,
}

impl ClassificationReport {
    pub fn read(dir: &Path) -> Result<Self, ClassifyError> {
        let path = dir.join(REPORT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| ClassifyError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| ClassifyError::report(&path, e.to_string()))
    }

    /// Partition invariant: per-store counts add up to the total.
    pub fn is_consistent(&self) -> bool {
        self.counts.values().sum::<u64>() == self.total_lines
    }
}

/// Frame and classify an in-memory segment.
pub fn classify_bytes(buf: &[u8], exec: Execution) -> Vec<ClassifiedLine> {
    let frames = frame_buffer(buf);
    let tags = exec.map(&frames, |f: &FramedLine| {
        let raw = f.slice(buf);
        (classify_line(raw), verify_checksum(raw))
    });
    frames
        .iter()
        .zip(tags)
        .enumerate()
        .map(|(i, (f, (class, checksum_status)))| ClassifiedLine {
            raw: f.slice(buf).to_vec(),
            class,
            checksum_status,
            segment_offset: f.offset as u64,
            line_number: i as u64 + 1,
        })
        .collect()
}

/// Route a closed segment file into `out_dir`.
///
/// Writes `<store>.txt` per recognised class, `quarantine.txt`, a routing
/// log (`routing.tsv`) recording which store each line went to in segment
/// order, and `report.json`. Every line is written with a CRLF terminator so
/// re-framing the outputs returns the original line bytes. Outputs are
/// deterministic for a given segment and policy.
pub fn route(
    segment_path: &Path,
    segment: SegmentInfo,
    out_dir: &Path,
    policy: &RoutePolicy,
    exec: Execution,
) -> Result<ClassificationReport, ClassifyError> {
    let buf = fs::read(segment_path).map_err(|e| ClassifyError::io(segment_path, e))?;
    fs::create_dir_all(out_dir).map_err(|e| ClassifyError::io(out_dir, e))?;

    let mut written: Vec<PathBuf> = Vec::new();
    let result = route_into(&buf, segment, out_dir, policy, exec, &mut written);
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

/// Identity of the segment being routed, supplied by the caller.
#[derive(Debug, Clone)]
pub struct SegmentInfo {
    pub file: String,
    pub session_id: String,
    pub open_time: DateTime<Utc>,
}

fn route_into(
    buf: &[u8],
    info: SegmentInfo,
    out_dir: &Path,
    policy: &RoutePolicy,
    exec: Execution,
    written: &mut Vec<PathBuf>,
) -> Result<ClassificationReport, ClassifyError> {
    let frames = frame_buffer(buf);
    let tags = exec.map(&frames, |f: &FramedLine| {
        let raw = f.slice(buf);
        (classify_line(raw), verify_checksum(raw))
    });

    let mut writers: BTreeMap<String, BufWriter<File>> = BTreeMap::new();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    counts.insert(QUARANTINE_STORE.to_owned(), 0);
    let mut invalid = 0u64;
    let mut oversized = 0u64;
    let mut unterminated = None;

    let routing_path = out_dir.join(ROUTING_FILE);
    let mut routing = create(&routing_path, written)?;
    writeln!(
        routing,
        "line_number\tsegment_offset\tstore\tchecksum\tnote"
    )
    .map_err(|e| ClassifyError::io(&routing_path, e))?;

    for (i, (frame, (class, checksum_status))) in frames.iter().zip(tags).enumerate() {
        let line_number = i as u64 + 1;
        let raw = frame.slice(buf);
        let dest = destination_of(raw.len(), &class, checksum_status, policy);
        if checksum_status == ChecksumStatus::Invalid {
            invalid += 1;
        }
        let mut note = match &dest {
            Destination::Quarantine(r) => {
                if *r == QuarantineReason::Oversized {
                    oversized += 1;
                }
                r.as_str().to_owned()
            }
            Destination::Store(_) => String::new(),
        };
        if !frame.terminated {
            unterminated = Some(line_number);
            if !note.is_empty() {
                note.push(';');
            }
            note.push_str("unterminated");
        }

        let store = dest.store_name().to_owned();
        *counts.entry(store.clone()).or_insert(0) += 1;
        let file_path = out_dir.join(format!("{store}.txt"));
        if !writers.contains_key(&store) {
            let w = create(&file_path, written)?;
            writers.insert(store.clone(), w);
        }
        let w = writers.get_mut(&store).expect("writer inserted above");
        w.write_all(raw)
            .and_then(|_| w.write_all(b"\r\n"))
            .map_err(|e| ClassifyError::io(&file_path, e))?;

        writeln!(
            routing,
            "{line_number}\t{}\t{store}\t{}\t{note}",
            frame.offset,
            checksum_label(checksum_status)
        )
        .map_err(|e| ClassifyError::io(&routing_path, e))?;
    }

    for (store, mut w) in writers {
        w.flush()
            .map_err(|e| ClassifyError::io(&out_dir.join(format!("{store}.txt")), e))?;
    }
    routing
        .flush()
        .map_err(|e| ClassifyError::io(&routing_path, e))?;

    let output_paths = counts
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(store, _)| (store.clone(), format!("{store}.txt")))
        .collect();
    let report = ClassificationReport {
        segment: SegmentRef {
            file: info.file,
            session_id: info.session_id,
            open_time: info.open_time,
            byte_count: buf.len() as u64,
            digest: sha256_hex(buf),
        },
        policy: *policy,
        quarantined_lines: counts[QUARANTINE_STORE],
        counts,
        output_paths,
        total_lines: frames.len() as u64,
        invalid_checksum_lines: invalid,
        oversized_lines: oversized,
        unterminated_line: unterminated,
    };

    let report_path = out_dir.join(REPORT_FILE);
    let mut w = create(&report_path, written)?;
    serde_json::to_writer_pretty(&mut w, &report)
        .map_err(|e| ClassifyError::io(&report_path, io::Error::other(e)))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| ClassifyError::io(&report_path, e))?;
    Ok(report)
}

fn create(path: &Path, written: &mut Vec<PathBuf>) -> Result<BufWriter<File>, ClassifyError> {
    let f = File::create(path).map_err(|e| ClassifyError::io(path, e))?;
    written.push(path.to_owned());
    Ok(BufWriter::new(f))
}

fn checksum_label(s: ChecksumStatus) -> &'static str {
    match s {
        ChecksumStatus::Valid => "valid",
        ChecksumStatus::Invalid => "invalid",
        ChecksumStatus::Absent => "absent",
    }
}

fn parse_checksum_label(s: &str) -> Option<ChecksumStatus> {
    match s {
        "valid" => Some(ChecksumStatus::Valid),
        "invalid" => Some(ChecksumStatus::Invalid),
        "absent" => Some(ChecksumStatus::Absent),
        _ => None,
    }
}

/// One entry of the routing log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingEntry {
    pub line_number: u64,
    pub segment_offset: u64,
    pub store: String,
    pub checksum: ChecksumStatus,
}

/// A classified directory read back in segment order.
#[derive(Debug)]
pub struct ClassifiedDir {
    pub dir: PathBuf,
    pub report: ClassificationReport,
    pub routing: Vec<RoutingEntry>,
}

impl ClassifiedDir {
    pub fn open(dir: &Path) -> Result<Self, ClassifyError> {
        let report = ClassificationReport::read(dir)?;
        let path = dir.join(ROUTING_FILE);
        let text = fs::read_to_string(&path).map_err(|e| ClassifyError::io(&path, e))?;
        let mut routing = Vec::with_capacity(report.total_lines as usize);
        for (i, row) in text.lines().enumerate().skip(1) {
            let bad = || ClassifyError::report(&path, format!("malformed routing row {}", i + 1));
            let mut cols = row.split('\t');
            let line_number = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            let segment_offset = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            let store = cols.next().ok_or_else(bad)?.to_owned();
            let checksum = cols.next().and_then(parse_checksum_label).ok_or_else(bad)?;
            routing.push(RoutingEntry {
                line_number,
                segment_offset,
                store,
                checksum,
            });
        }
        if routing.len() as u64 != report.total_lines {
            return Err(ClassifyError::report(
                &path,
                format!(
                    "routing log has {} rows, report says {}",
                    routing.len(),
                    report.total_lines
                ),
            ));
        }
        Ok(Self {
            dir: dir.to_owned(),
            report,
            routing,
        })
    }

    /// Lines of the non-quarantine stores, re-interleaved into segment order.
    pub fn ordered_lines(&self) -> Result<Vec<ClassifiedLine>, ClassifyError> {
        let mut stores: BTreeMap<&str, std::vec::IntoIter<Vec<u8>>> = BTreeMap::new();
        for (store, file) in &self.report.output_paths {
            if store == QUARANTINE_STORE {
                continue;
            }
            let path = self.dir.join(file);
            let buf = fs::read(&path).map_err(|e| ClassifyError::io(&path, e))?;
            let lines: Vec<Vec<u8>> = frame_buffer(&buf)
                .iter()
                .map(|f| f.slice(&buf).to_vec())
                .collect();
            stores.insert(store.as_str(), lines.into_iter());
        }

        let mut out = Vec::new();
        for entry in &self.routing {
            if entry.store == QUARANTINE_STORE {
                continue;
            }
            let class = MessageClass::from_store_name(&entry.store).ok_or_else(|| {
                ClassifyError::report(&self.dir, format!("unknown store {}", entry.store))
            })?;
            let raw = stores
                .get_mut(entry.store.as_str())
                .and_then(Iterator::next)
                .ok_or_else(|| {
                    ClassifyError::report(
                        &self.dir,
                        format!("store {} shorter than routing log", entry.store),
                    )
                })?;
            out.push(ClassifiedLine {
                raw,
                class,
                checksum_status: entry.checksum,
                segment_offset: entry.segment_offset,
                line_number: entry.line_number,
            });
        }
        Ok(out)
    }
}
