//! Resuming a session after a crash.

use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Mutex;

use chrono::{DateTime, NaiveDateTime, Utc};

use super::hooks::Hooks;
use super::process::{run_stages, StageContext};
use super::state::{raw_segments_in, PipelineState, Stage, StateError, StateStore};
use crate::record::{RawSegment, SegmentStatus, SessionMetadata};
use crate::Execution;

#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub state: PipelineState,
    /// Segments that were open at the crash and have been sealed from disk.
    pub sealed: Vec<String>,
    /// Segments reprocessed, with the stage they resumed from.
    pub reprocessed: Vec<(String, Stage)>,
    /// Segments that failed again.
    pub flagged: Vec<String>,
}

impl RecoveryReport {
    pub fn exit_code(&self) -> i32 {
        if self.flagged.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Seal whatever was being captured, then finish every segment that did
/// not reach `converted`, starting from its last completed stage.
///
/// Stage outputs are staged and committed by rename, so a rerun produces
/// the same bytes as an uninterrupted run. The session must not be live.
pub fn recover(session_dir: &Path, exec: Execution) -> Result<RecoveryReport, StateError> {
    let mut store = StateStore::open(session_dir)?;
    let sealed = seal_orphans(session_dir, &mut store)?;
    let state = store.state().clone();
    let opts = state.processing.clone();
    let pending: Vec<(RawSegment, Stage, usize)> = state
        .segments
        .iter()
        .enumerate()
        .filter(|(_, e)| e.stage < Stage::Converted)
        .map(|(i, e)| (e.segment.clone(), e.stage, i + 1))
        .collect();

    let store = Mutex::new(store);
    let abort = AtomicBool::new(false);
    let hooks = Hooks::default();
    let results = exec.for_each_collect(pending, |(seg, from, index)| {
        let ctx = StageContext {
            session_dir,
            opts: &opts,
            exec,
            hooks: &hooks,
            captured_bytes: 0,
        };
        tracing::info!(segment = %seg.file, from = ?from, "reprocessing");
        let r = run_stages(&ctx, &seg, index, from, &store, &abort);
        (seg.file, from, r)
    });

    let mut store = store.into_inner().expect("state lock");
    let mut reprocessed = Vec::new();
    let mut flagged = Vec::new();
    for (file, from, r) in results {
        reprocessed.push((file.clone(), from));
        if let Err(e) = r {
            tracing::error!(segment = %file, error = %e, "reprocessing failed");
            store.flag(&file, e.to_string())?;
            flagged.push(file);
        }
    }
    Ok(RecoveryReport {
        state: store.state().clone(),
        sealed,
        reprocessed,
        flagged,
    })
}

/// Close the active segment and any raw file the state never heard of.
fn seal_orphans(session_dir: &Path, store: &mut StateStore) -> Result<Vec<String>, StateError> {
    let mut meta = SessionMetadata::read(session_dir).ok();
    let mut orphans: Vec<RawSegment> = store.state().active_segment.iter().cloned().collect();
    for file in raw_segments_in(session_dir) {
        if store.state().entry(&file).is_none() && !orphans.iter().any(|s| s.file == file) {
            let known = meta
                .as_ref()
                .and_then(|m| m.segments.iter().find(|s| s.file == file).cloned());
            match known.or_else(|| guess_segment(&file, &store.state().session_id)) {
                Some(seg) => orphans.push(seg),
                None => tracing::warn!(file, "cannot tell when this segment opened, skipped"),
            }
        }
    }
    orphans.sort_by(|a, b| a.open_time.cmp(&b.open_time).then(a.file.cmp(&b.file)));

    let mut sealed = Vec::new();
    for mut seg in orphans {
        if store.state().entry(&seg.file).is_some() {
            continue;
        }
        let path = seg.path(session_dir);
        if !path.exists() {
            continue;
        }
        let closed_at = std::fs::metadata(&path)
            .and_then(|m| m.modified())
            .map(DateTime::<Utc>::from)
            .unwrap_or_else(|_| Utc::now());
        seg.seal_from_disk(session_dir, closed_at, SegmentStatus::Recovered)
            .map_err(|source| StateError::Io {
                path: path.clone(),
                source,
            })?;
        tracing::info!(segment = %seg.file, bytes = seg.byte_count, "sealed after crash");
        if let Some(m) = meta.as_mut() {
            match m.segments.iter_mut().find(|s| s.file == seg.file) {
                Some(s) => *s = seg.clone(),
                None => m.segments.push(seg.clone()),
            }
        }
        sealed.push(seg.file.clone());
        store.add_recorded(seg, None)?;
    }
    if store.state().active_segment.is_some() {
        store.set_active(None)?;
    }
    if let Some(m) = meta {
        if let Err(e) = m.write(session_dir) {
            tracing::warn!(error = %e, "could not update session metadata");
        }
    }
    Ok(sealed)
}

fn guess_segment(file: &str, session_id: &str) -> Option<RawSegment> {
    let stamp = file.strip_prefix("raw_")?.get(..16)?;
    let open = NaiveDateTime::parse_from_str(stamp, "%Y%m%dT%H%M%SZ")
        .ok()?
        .and_utc();
    Some(RawSegment {
        file: file.to_owned(),
        session_id: session_id.to_owned(),
        open_time: open,
        close_time: None,
        byte_count: 0,
        digest: None,
        status: SegmentStatus::Active,
    })
}
