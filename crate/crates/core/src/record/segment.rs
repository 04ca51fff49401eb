//! Raw segment files and the buffered writer behind them.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::digest::sha256_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentStatus {
    /// Currently being appended to.
    Active,
    Closed,
    /// Closed, but the digest or the metadata entry could not be written at
    /// rotation time.
    DigestPending,
    /// Sealed after a crash from whatever reached the disk.
    Recovered,
}

/// One rotation window's capture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSegment {
    /// File name relative to the session directory.
    pub file: String,
    pub session_id: String,
    pub open_time: DateTime<Utc>,
    pub close_time: Option<DateTime<Utc>>,
    pub byte_count: u64,
    pub digest: Option<String>,
    pub status: SegmentStatus,
}

impl RawSegment {
    pub fn path(&self, session_dir: &Path) -> PathBuf {
        session_dir.join(&self.file)
    }

    /// File name without the `.log` extension.
    pub fn stem(&self) -> &str {
        self.file.strip_suffix(".log").unwrap_or(&self.file)
    }

    pub fn is_closed(&self) -> bool {
        self.status != SegmentStatus::Active
    }

    /// Recompute length and digest from disk and compare with the stored
    /// values.
    pub fn verify(&self, session_dir: &Path) -> io::Result<bool> {
        let path = self.path(session_dir);
        let len = std::fs::metadata(&path)?.len();
        let digest = sha256_file(&path)?;
        Ok(len == self.byte_count && self.digest.as_deref() == Some(digest.as_str()))
    }

    /// Seal a segment from its on-disk contents.
    pub fn seal_from_disk(
        &mut self,
        session_dir: &Path,
        close_time: DateTime<Utc>,
        status: SegmentStatus,
    ) -> io::Result<()> {
        let path = self.path(session_dir);
        self.byte_count = std::fs::metadata(&path)?.len();
        self.digest = Some(sha256_file(&path)?);
        self.close_time = Some(close_time.max(self.open_time));
        self.status = status;
        Ok(())
    }
}

/// `raw_<basic ISO 8601>.log`
pub fn segment_file_name(open_time: DateTime<Utc>) -> String {
    format!("raw_{}.log", open_time.format("%Y%m%dT%H%M%SZ"))
}

/// Append-only writer with its own buffer.
///
/// Bytes are held in memory until [`flush`](Self::flush) hands them to the
/// OS. Dropping the writer does not flush: unflushed bytes are lost, exactly
/// as they would be if the process were killed.
pub struct SegmentWriter {
    path: PathBuf,
    file: File,
    pending: Vec<u8>,
    written: u64,
}

impl SegmentWriter {
    pub fn create(path: PathBuf) -> io::Result<Self> {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)?;
        Ok(Self {
            path,
            file,
            pending: Vec::new(),
            written: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, bytes: &[u8]) {
        self.pending.extend_from_slice(bytes);
    }

    pub fn pending_len(&self) -> u64 {
        self.pending.len() as u64
    }

    /// Bytes appended so far, flushed or not.
    pub fn len(&self) -> u64 {
        self.written + self.pending.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flush(&mut self) -> io::Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        self.file.write_all(&self.pending)?;
        self.written += self.pending.len() as u64;
        self.pending.clear();
        Ok(())
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.flush()?;
        self.file.sync_data()
    }
}
