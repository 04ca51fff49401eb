//! Unattended pipeline: capture, rotation-triggered processing, recovery.

mod clock;
mod config;
mod hooks;
mod pipeline;
mod process;
mod recover;
mod schedule;
mod session;
mod state;

pub use clock::{AcceleratedClock, Clock, ManualClock, SystemClock};
pub use config::{ClockConfig, PipelineConfig};
pub use hooks::{CrashPoint, CrashSite, Hooks};
pub use pipeline::{run_pipeline, Pipeline, PipelineError, RunReport, SegmentOutcome};
pub use process::{
    classify_segment, convert_segment, run_stages, work_dir, ProcessError, StageContext,
    CLASSIFIED_DIR, CONVERTED_DIR, SEGMENTS_DIR,
};
pub use recover::{recover, RecoveryReport};
pub use schedule::{next_boundary, RotationPolicy};
pub use session::{
    converted_dirs, session_timeline, snr_series_file, write_stats, StatsReport, FIX_SERIES_FILE,
    SUMMARY_FILE,
};
pub use state::{
    raw_segments_in, PipelineState, ProcessOptions, SegmentEntry, Stage, StateError, StateStore,
    STATE_FILE,
};
