//! Per-segment classify and convert stages with staged commits.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use super::hooks::{CrashPoint, CrashSite, Hooks};
use super::state::{ProcessOptions, Stage, StateError, StateStore};
use crate::classify::{route, ClassificationReport, ClassifyError, SegmentInfo};
use crate::convert::{
    export_parsed, parse_classified, ConvertError, ConvertOptions, SessionManifest,
};
use crate::parse::ParserRegistry;
use crate::record::RawSegment;
use crate::Execution;

pub const SEGMENTS_DIR: &str = "segments";
pub const CLASSIFIED_DIR: &str = "classified";
pub const CONVERTED_DIR: &str = "converted";

#[derive(Debug, thiserror::Error)]
pub enum ProcessError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Convert(#[from] ConvertError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("crash injected at {0}")]
    Crashed(CrashPoint),
    #[error("stopped")]
    Aborted,
}

/// `<session>/segments/<raw file stem>`
pub fn work_dir(session_dir: &Path, seg: &RawSegment) -> PathBuf {
    session_dir.join(SEGMENTS_DIR).join(seg.stem())
}

/// What a stage needs to know about where it runs.
pub struct StageContext<'a> {
    pub session_dir: &'a Path,
    pub opts: &'a ProcessOptions,
    pub exec: Execution,
    pub hooks: &'a Hooks,
    pub captured_bytes: u64,
}

impl StageContext<'_> {
    fn crash(&self, point: CrashPoint, index: usize) -> Result<(), ProcessError> {
        let site = CrashSite {
            point,
            segment_index: index,
            captured_bytes: self.captured_bytes,
        };
        if self.hooks.crashes(site) {
            return Err(ProcessError::Crashed(point));
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ProcessError + '_ {
    move |source| ProcessError::Io {
        path: path.to_owned(),
        source,
    }
}

fn staging(work: &Path, name: &str) -> Result<PathBuf, ProcessError> {
    fs::create_dir_all(work).map_err(io_err(work))?;
    let tmp = work.join(format!("{name}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
    }
    Ok(tmp)
}

fn commit(tmp: &Path, dest: &Path) -> Result<(), ProcessError> {
    if dest.exists() {
        fs::remove_dir_all(dest).map_err(io_err(dest))?;
    }
    fs::rename(tmp, dest).map_err(io_err(dest))
}

/// Route a closed segment into `<work>/classified`.
pub fn classify_segment(
    ctx: &StageContext<'_>,
    seg: &RawSegment,
    index: usize,
) -> Result<ClassificationReport, ProcessError> {
    let work = work_dir(ctx.session_dir, seg);
    let tmp = staging(&work, CLASSIFIED_DIR)?;
    let info = SegmentInfo {
        file: seg.file.clone(),
        session_id: seg.session_id.clone(),
        open_time: seg.open_time,
    };
    let report = route(
        &seg.path(ctx.session_dir),
        info,
        &tmp,
        &ctx.opts.route_policy(),
        ctx.exec,
    )?;
    ctx.crash(CrashPoint::MidClassify, index)?;
    commit(&tmp, &work.join(CLASSIFIED_DIR))?;
    Ok(report)
}

/// Parse `<work>/classified` and export into `<work>/converted`.
pub fn convert_segment(
    ctx: &StageContext<'_>,
    seg: &RawSegment,
    index: usize,
) -> Result<SessionManifest, ProcessError> {
    if let Some(msg) = ctx.hooks.convert_failure(index) {
        return Err(ConvertError::Injected(msg).into());
    }
    let work = work_dir(ctx.session_dir, seg);
    let parsed = parse_classified(
        &work.join(CLASSIFIED_DIR),
        &ParserRegistry::default(),
        ctx.exec,
    )?;
    ctx.crash(CrashPoint::MidParse, index)?;
    let tmp = staging(&work, CONVERTED_DIR)?;
    let opts = ConvertOptions {
        formats: ctx.opts.formats.clone(),
        gap_threshold: ctx.opts.gap_threshold,
        exec: ctx.exec,
    };
    let manifest = export_parsed(parsed, &tmp, &opts)?;
    ctx.crash(CrashPoint::MidConvert, index)?;
    commit(&tmp, &work.join(CONVERTED_DIR))?;
    Ok(manifest)
}

/// Advance a segment from `from` to converted, persisting each step.
pub fn run_stages(
    ctx: &StageContext<'_>,
    seg: &RawSegment,
    index: usize,
    from: Stage,
    store: &Mutex<StateStore>,
    abort: &AtomicBool,
) -> Result<(), ProcessError> {
    let mut stage = from;
    while stage < Stage::Converted {
        if abort.load(Ordering::Relaxed) {
            return Err(ProcessError::Aborted);
        }
        stage = match stage {
            Stage::Recorded => {
                let r = classify_segment(ctx, seg, index)?;
                tracing::info!(segment = %seg.file, lines = r.total_lines, quarantined = r.quarantined_lines, "classified");
                Stage::Classified
            }
            Stage::Classified => {
                let m = convert_segment(ctx, seg, index)?;
                tracing::info!(
                    segment = %seg.file,
                    gps = m.record_counts.gps_fix,
                    loran = m.record_counts.loran_total(),
                    errors = m.record_counts.parse_errors,
                    "converted"
                );
                Stage::Converted
            }
            Stage::Converted => unreachable!(),
        };
        store
            .lock()
            .expect("state lock")
            .advance(&seg.file, stage)?;
    }
    Ok(())
}
