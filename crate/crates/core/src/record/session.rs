//! Session metadata file.

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::segment::RawSegment;
use crate::orchestrate::RotationPolicy;

pub const SESSION_FILE: &str = "session.json";

/// Interval during which the source was disconnected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkGap {
    pub start: DateTime<Utc>,
    pub end: Option<DateTime<Utc>>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetadata {
    pub session_id: String,
    pub source: String,
    pub rotation: RotationPolicy,
    #[serde(with = "humantime_serde")]
    pub flush_interval: Duration,
    pub started: DateTime<Utc>,
    /// Closed segments in order, followed by the active one if any.
    pub segments: Vec<RawSegment>,
    pub gaps: Vec<LinkGap>,
}

impl SessionMetadata {
    pub fn read(session_dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(session_dir.join(SESSION_FILE))?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn write(&self, session_dir: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        text.push('\n');
        write_atomic(&session_dir.join(SESSION_FILE), text.as_bytes())
    }
}

/// Write via a temporary sibling and rename, so readers never see a torn
/// file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)
}
