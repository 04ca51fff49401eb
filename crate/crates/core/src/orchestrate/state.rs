//! Persisted per-session pipeline state.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::classify::{RoutePolicy, DEFAULT_MAX_LINE_LEN};
use crate::convert::{ExportFormat, DEFAULT_GAP_THRESHOLD};
use crate::record::{write_atomic, RawSegment};

pub const STATE_FILE: &str = "pipeline_state.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Recorded,
    Classified,
    Converted,
}

/// Processing settings, kept with the state so recovery reproduces the
/// same outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessOptions {
    pub formats: Vec<ExportFormat>,
    pub quarantine_invalid: bool,
    pub max_line_len: usize,
    #[serde(with = "humantime_serde")]
    pub gap_threshold: Duration,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        Self {
            formats: vec![ExportFormat::Columns],
            quarantine_invalid: true,
            max_line_len: DEFAULT_MAX_LINE_LEN,
            gap_threshold: DEFAULT_GAP_THRESHOLD,
        }
    }
}

impl ProcessOptions {
    pub fn route_policy(&self) -> RoutePolicy {
        RoutePolicy {
            quarantine_invalid: self.quarantine_invalid,
            max_line_len: self.max_line_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub segment: RawSegment,
    pub stage: Stage,
    /// Why the last processing attempt failed, if it did.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineState {
    pub session_id: String,
    pub processing: ProcessOptions,
    /// Segment being written when the state was saved.
    pub active_segment: Option<RawSegment>,
    pub segments: Vec<SegmentEntry>,
}

impl PipelineState {
    pub fn new(session_id: String, processing: ProcessOptions) -> Self {
        Self {
            session_id,
            processing,
            active_segment: None,
            segments: Vec::new(),
        }
    }

    pub fn entry(&self, file: &str) -> Option<&SegmentEntry> {
        self.segments.iter().find(|e| e.segment.file == file)
    }

    /// 1-based ordinal of a segment.
    pub fn index_of(&self, file: &str) -> Option<usize> {
        self.segments
            .iter()
            .position(|e| e.segment.file == file)
            .map(|i| i + 1)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &SegmentEntry> {
        self.segments.iter().filter(|e| e.failure.is_some())
    }

    pub fn pending(&self) -> impl Iterator<Item = &SegmentEntry> {
        self.segments.iter().filter(|e| e.stage < Stage::Converted)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{} is corrupt ({reason}); recoverable raw segments: {}", path.display(), list(recoverable))]
    Corrupt {
        path: PathBuf,
        reason: String,
        recoverable: Vec<String>,
    },
    #[error("segment {file}: stage cannot move from {from:?} to {to:?}")]
    Regression {
        file: String,
        from: Stage,
        to: Stage,
    },
    #[error("segment {0} is not in the state file")]
    UnknownSegment(String),
}

fn list(v: &[String]) -> String {
    if v.is_empty() {
        "none".into()
    } else {
        v.join(", ")
    }
}

/// The single owner of a session's state file.
#[derive(Debug)]
pub struct StateStore {
    path: PathBuf,
    state: PipelineState,
}

impl StateStore {
    pub fn create(session_dir: &Path, state: PipelineState) -> Result<Self, StateError> {
        let store = Self {
            path: session_dir.join(STATE_FILE),
            state,
        };
        store.persist()?;
        Ok(store)
    }

    /// Load an existing state file. A file that does not parse is reported
    /// along with the raw segments found next to it.
    pub fn open(session_dir: &Path) -> Result<Self, StateError> {
        let path = session_dir.join(STATE_FILE);
        let text = fs::read_to_string(&path).map_err(|source| StateError::Io {
            path: path.clone(),
            source,
        })?;
        match serde_json::from_str(&text) {
            Ok(state) => Ok(Self { path, state }),
            Err(e) => Err(StateError::Corrupt {
                path,
                reason: e.to_string(),
                recoverable: raw_segments_in(session_dir),
            }),
        }
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn persist(&self) -> Result<(), StateError> {
        let mut text = serde_json::to_string_pretty(&self.state).expect("state serializes");
        text.push('\n');
        write_atomic(&self.path, text.as_bytes()).map_err(|source| StateError::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn set_active(&mut self, seg: Option<RawSegment>) -> Result<(), StateError> {
        self.state.active_segment = seg;
        self.persist()
    }

    /// Record a newly closed segment; returns its 1-based index.
    pub fn add_recorded(
        &mut self,
        seg: RawSegment,
        next_active: Option<RawSegment>,
    ) -> Result<usize, StateError> {
        if let Some(i) = self.state.index_of(&seg.file) {
            return Ok(i);
        }
        self.state.segments.push(SegmentEntry {
            segment: seg,
            stage: Stage::Recorded,
            failure: None,
        });
        self.state.active_segment = next_active;
        self.persist()?;
        Ok(self.state.segments.len())
    }

    pub fn advance(&mut self, file: &str, to: Stage) -> Result<(), StateError> {
        let e = self
            .state
            .segments
            .iter_mut()
            .find(|e| e.segment.file == file)
            .ok_or_else(|| StateError::UnknownSegment(file.to_owned()))?;
        if to <= e.stage {
            return Err(StateError::Regression {
                file: file.to_owned(),
                from: e.stage,
                to,
            });
        }
        e.stage = to;
        e.failure = None;
        self.persist()
    }

    pub fn flag(&mut self, file: &str, reason: String) -> Result<(), StateError> {
        let e = self
            .state
            .segments
            .iter_mut()
            .find(|e| e.segment.file == file)
            .ok_or_else(|| StateError::UnknownSegment(file.to_owned()))?;
        e.failure = Some(reason);
        self.persist()
    }
}

/// `raw_*.log` files in a session directory, sorted.
pub fn raw_segments_in(session_dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(session_dir)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.starts_with("raw_") && n.ends_with(".log"))
        .collect();
    v.sort();
    v
}
