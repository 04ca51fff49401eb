//! The long-running capture loop and its processing workers.

use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use crossbeam_channel::{Receiver, Sender};

use super::clock::Clock;
use super::config::PipelineConfig;
use super::hooks::{CrashPoint, CrashSite, Hooks};
use super::process::{run_stages, ProcessError, StageContext};
use super::state::{PipelineState, ProcessOptions, Stage, StateError, StateStore};
use crate::record::{
    ByteSource, LinkGap, RawSegment, ReadOutcome, RecordError, Recorder, RecorderOptions,
};
use crate::Execution;

const READ_BUF: usize = 64 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("crash injected at {point}; state kept in {}", session_dir.display())]
    Crashed {
        point: CrashPoint,
        session_dir: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentOutcome {
    pub file: String,
    pub stage: Stage,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub session_id: String,
    pub session_dir: PathBuf,
    pub segments: Vec<SegmentOutcome>,
    pub bytes_captured: u64,
}

impl RunReport {
    fn from_state(state: &PipelineState, session_dir: PathBuf, bytes_captured: u64) -> Self {
        Self {
            session_id: state.session_id.clone(),
            session_dir,
            segments: state
                .segments
                .iter()
                .map(|e| SegmentOutcome {
                    file: e.segment.file.clone(),
                    stage: e.stage,
                    failure: e.failure.clone(),
                })
                .collect(),
            bytes_captured,
        }
    }

    pub fn flagged(&self) -> usize {
        self.segments.iter().filter(|s| s.failure.is_some()).count()
    }

    /// 0 when every segment went through, 2 when some were flagged.
    pub fn exit_code(&self) -> i32 {
        if self.flagged() > 0 {
            2
        } else {
            0
        }
    }
}

struct Job {
    segment: RawSegment,
    index: usize,
}

/// Shared between the capture loop and the workers.
struct Shared {
    store: Mutex<StateStore>,
    abort: AtomicBool,
    crash: Mutex<Option<CrashPoint>>,
    captured: Arc<AtomicU64>,
    hooks: Hooks,
    opts: ProcessOptions,
    exec: Execution,
    session_dir: PathBuf,
}

enum Halt {
    Crash(CrashPoint),
    Fatal(PipelineError),
}

impl From<RecordError> for Halt {
    fn from(e: RecordError) -> Self {
        Halt::Fatal(e.into())
    }
}

impl From<StateError> for Halt {
    fn from(e: StateError) -> Self {
        Halt::Fatal(e.into())
    }
}

/// Builder for one unattended run.
pub struct Pipeline {
    config: PipelineConfig,
    clock: Arc<dyn Clock>,
    hooks: Hooks,
    source: Option<Box<dyn ByteSource>>,
    captured: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    process: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            clock: config.clock.build(),
            config,
            hooks: Hooks::default(),
            source: None,
            captured: Arc::new(AtomicU64::new(0)),
            stop: Arc::new(AtomicBool::new(false)),
            process: true,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_hooks(mut self, hooks: Hooks) -> Self {
        self.hooks = hooks;
        self
    }

    /// Read from this source instead of connecting to the configured one.
    pub fn with_source(mut self, source: Box<dyn ByteSource>) -> Self {
        self.source = Some(source);
        self
    }

    /// Record only; closed segments stay at the `recorded` stage.
    pub fn capture_only(mut self) -> Self {
        self.process = false;
        self
    }

    /// Running total of captured bytes.
    pub fn capture_counter(&self) -> Arc<AtomicU64> {
        self.captured.clone()
    }

    /// Setting this ends the run as if the source had ended.
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    pub fn run(mut self) -> Result<RunReport, PipelineError> {
        let cfg = self.config.clone();
        cfg.validate().map_err(PipelineError::Config)?;
        let source = match self.source.take() {
            Some(s) => s,
            None => cfg
                .retry
                .run("connect", || cfg.source.connect(cfg.poll_interval))
                .map_err(|source| RecordError::Unreachable {
                    endpoint: cfg.source.to_string(),
                    source,
                })?,
        };

        let recorder = Recorder::open(
            &cfg.out_dir,
            RecorderOptions {
                source: cfg.source.to_string(),
                rotation: cfg.rotation,
                flush_interval: cfg.flush_interval,
                sync_on_flush: cfg.sync_on_flush,
                write_retries: 3,
            },
            self.clock.now(),
        )?;
        let session_dir = recorder.session_dir().to_owned();
        let mut state = PipelineState::new(recorder.session_id().to_owned(), cfg.process_options());
        state.active_segment = Some(recorder.active_segment().clone());
        let store = StateStore::create(&session_dir, state)?;

        let shared = Arc::new(Shared {
            store: Mutex::new(store),
            abort: AtomicBool::new(false),
            crash: Mutex::new(None),
            captured: self.captured.clone(),
            hooks: self.hooks.clone(),
            opts: cfg.process_options(),
            exec: cfg.execution(),
            session_dir: session_dir.clone(),
        });

        let (tx, rx) = crossbeam_channel::unbounded::<Job>();
        let workers: Vec<_> = if self.process {
            (0..cfg.workers)
                .map(|i| {
                    let (rx, shared) = (rx.clone(), shared.clone());
                    thread::Builder::new()
                        .name(format!("segment-worker-{i}"))
                        .spawn(move || worker(rx, &shared))
                        .expect("spawn worker")
                })
                .collect()
        } else {
            Vec::new()
        };
        drop(rx);

        let mut recorder = Some(recorder);
        let halt = self.capture(&cfg, &mut recorder, source, &shared, &tx);
        drop(tx);

        let result = match halt {
            Ok(()) => Ok(()),
            Err(h) => {
                // a kill: no flush, workers stop at their next check
                shared.abort.store(true, Ordering::Relaxed);
                if let Some(r) = recorder.take() {
                    r.abandon();
                }
                Err(h)
            }
        };
        for w in workers {
            let _ = w.join();
        }
        // a worker may have crashed after capture already ended
        let result = match (result, *shared.crash.lock().expect("crash lock")) {
            (Ok(()), Some(point)) => Err(Halt::Crash(point)),
            (r, _) => r,
        };

        match result {
            Ok(()) => {
                let store = shared.store.lock().expect("state lock");
                let report = RunReport::from_state(
                    store.state(),
                    session_dir,
                    self.captured.load(Ordering::Relaxed),
                );
                tracing::info!(
                    session = %report.session_id,
                    segments = report.segments.len(),
                    flagged = report.flagged(),
                    "run finished"
                );
                Ok(report)
            }
            Err(Halt::Crash(point)) => Err(PipelineError::Crashed { point, session_dir }),
            Err(Halt::Fatal(e)) => Err(e),
        }
    }

    fn capture(
        &self,
        cfg: &PipelineConfig,
        recorder: &mut Option<Recorder>,
        mut source: Box<dyn ByteSource>,
        shared: &Shared,
        tx: &Sender<Job>,
    ) -> Result<(), Halt> {
        let rec = recorder.as_mut().expect("recorder open");
        let mut buf = vec![0u8; READ_BUF];
        loop {
            if shared.abort.load(Ordering::Relaxed) {
                let point = shared
                    .crash
                    .lock()
                    .expect("crash lock")
                    .unwrap_or(CrashPoint::MidCapture);
                return Err(Halt::Crash(point));
            }
            if self.stop.load(Ordering::Relaxed) {
                break;
            }
            let read = match source.read_chunk(&mut buf) {
                Ok(r) => r,
                Err(e) => {
                    tracing::warn!(source = %source.describe(), error = %e, "source error, treating as disconnect");
                    ReadOutcome::Eof
                }
            };
            match read {
                ReadOutcome::Data(n) => {
                    let now = self.clock.now();
                    self.rotate(rec, now, shared, tx)?;
                    let site = CrashSite {
                        point: CrashPoint::MidCapture,
                        segment_index: shared
                            .store
                            .lock()
                            .expect("state lock")
                            .state()
                            .segments
                            .len()
                            + 1,
                        captured_bytes: shared.captured.load(Ordering::Relaxed),
                    };
                    if self.hooks.crashes(site) {
                        return Err(Halt::Crash(CrashPoint::MidCapture));
                    }
                    rec.capture(&buf[..n], now)?;
                    shared.captured.fetch_add(n as u64, Ordering::Relaxed);
                }
                ReadOutcome::Idle => {
                    let now = self.clock.now();
                    self.rotate(rec, now, shared, tx)?;
                    rec.flush_if_due(now)?;
                }
                ReadOutcome::Eof => {
                    let now = self.clock.now();
                    rec.flush(now)?;
                    if !self.reconnect(cfg, rec, source.as_mut(), shared) {
                        break;
                    }
                }
            }
        }

        let now = self.clock.now();
        self.rotate(rec, now, shared, tx)?;
        let last = recorder.take().expect("recorder open").close(now)?;
        self.closed(last, None, shared, tx)
    }

    fn rotate(
        &self,
        rec: &mut Recorder,
        now: chrono::DateTime<chrono::Utc>,
        shared: &Shared,
        tx: &Sender<Job>,
    ) -> Result<(), Halt> {
        for seg in rec.rotate_if_due(now)? {
            self.closed(seg, Some(rec.active_segment().clone()), shared, tx)?;
        }
        Ok(())
    }

    fn closed(
        &self,
        seg: RawSegment,
        next: Option<RawSegment>,
        shared: &Shared,
        tx: &Sender<Job>,
    ) -> Result<(), Halt> {
        let index = shared
            .store
            .lock()
            .expect("state lock")
            .add_recorded(seg.clone(), next)?;
        let site = CrashSite {
            point: CrashPoint::PostRotation,
            segment_index: index,
            captured_bytes: shared.captured.load(Ordering::Relaxed),
        };
        if self.hooks.crashes(site) {
            return Err(Halt::Crash(CrashPoint::PostRotation));
        }
        if self.process {
            let _ = tx.send(Job {
                segment: seg,
                index,
            });
        }
        Ok(())
    }

    /// Try to bring the source back; records the outage either way.
    fn reconnect(
        &self,
        cfg: &PipelineConfig,
        rec: &mut Recorder,
        source: &mut dyn ByteSource,
        shared: &Shared,
    ) -> bool {
        let start = self.clock.now();
        let mut attempt = 0;
        let mut back = false;
        let mut reason = "source ended".to_owned();
        while attempt < cfg.retry.max_retries {
            if self.stop.load(Ordering::Relaxed) || shared.abort.load(Ordering::Relaxed) {
                break;
            }
            attempt += 1;
            match source.reconnect() {
                Ok(()) => {
                    back = true;
                    break;
                }
                Err(e) if e.kind() == io::ErrorKind::Unsupported => break,
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "reconnect failed");
                    reason = format!("source ended; reconnect failed: {e}");
                    thread::sleep(cfg.retry.backoff(attempt));
                }
            }
        }
        rec.record_gap(LinkGap {
            start,
            end: back.then(|| self.clock.now()),
            reason: if back { "disconnected".into() } else { reason },
        });
        if back {
            tracing::info!(attempt, "source reconnected");
        } else {
            tracing::info!(source = %source.describe(), "source finished");
        }
        back
    }
}

fn worker(rx: Receiver<Job>, shared: &Shared) {
    for job in rx.iter() {
        if shared.abort.load(Ordering::Relaxed) {
            break;
        }
        let ctx = StageContext {
            session_dir: &shared.session_dir,
            opts: &shared.opts,
            exec: shared.exec,
            hooks: &shared.hooks,
            captured_bytes: shared.captured.load(Ordering::Relaxed),
        };
        match run_stages(
            &ctx,
            &job.segment,
            job.index,
            Stage::Recorded,
            &shared.store,
            &shared.abort,
        ) {
            Ok(()) => {}
            Err(ProcessError::Crashed(point)) => {
                *shared.crash.lock().expect("crash lock") = Some(point);
                shared.abort.store(true, Ordering::Relaxed);
                break;
            }
            Err(ProcessError::Aborted) => break,
            Err(e) => {
                tracing::error!(segment = %job.segment.file, error = %e, "segment processing failed, flagged");
                if let Err(e) = shared
                    .store
                    .lock()
                    .expect("state lock")
                    .flag(&job.segment.file, e.to_string())
                {
                    tracing::error!(error = %e, "could not flag segment");
                }
            }
        }
    }
}

/// Run with the configured source and clock.
pub fn run_pipeline(config: PipelineConfig) -> Result<RunReport, PipelineError> {
    Pipeline::new(config).run()
}
