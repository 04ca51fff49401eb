//! Fault-injection points for exercising crash recovery and isolation.

use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// Before a received chunk is captured.
    MidCapture,
    /// After a segment is closed and recorded in the state file, before it
    /// is handed to a worker.
    PostRotation,
    /// After classification output is written, before it is committed.
    MidClassify,
    /// After parsing, before anything is exported.
    MidParse,
    /// After the timeline files are written, before they are committed.
    MidConvert,
}

impl fmt::Display for CrashPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrashPoint::MidCapture => "mid-capture",
            CrashPoint::PostRotation => "post-rotation",
            CrashPoint::MidClassify => "mid-classify",
            CrashPoint::MidParse => "mid-parse",
            CrashPoint::MidConvert => "mid-convert",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrashSite {
    pub point: CrashPoint,
    /// 1-based segment ordinal within the session.
    pub segment_index: usize,
    /// Bytes received by the session so far.
    pub captured_bytes: u64,
}

type CrashFn = dyn Fn(&CrashSite) -> bool + Send + Sync;
type FailFn = dyn Fn(usize) -> Option<String> + Send + Sync;

/// Optional callbacks consulted by the pipeline. The default does nothing.
#[derive(Clone, Default)]
pub struct Hooks {
    crash: Option<Arc<CrashFn>>,
    convert_failure: Option<Arc<FailFn>>,
}

impl Hooks {
    /// Simulate a kill wherever `f` returns true.
    pub fn crash_when(mut self, f: impl Fn(&CrashSite) -> bool + Send + Sync + 'static) -> Self {
        self.crash = Some(Arc::new(f));
        self
    }

    /// Make conversion of a segment (by 1-based index) fail with the
    /// returned message. The callback runs on the worker thread.
    pub fn fail_convert_when(
        mut self,
        f: impl Fn(usize) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.convert_failure = Some(Arc::new(f));
        self
    }

    pub(crate) fn crashes(&self, site: CrashSite) -> bool {
        self.crash.as_ref().is_some_and(|f| f(&site))
    }

    pub(crate) fn convert_failure(&self, index: usize) -> Option<String> {
        self.convert_failure.as_ref().and_then(|f| f(index))
    }
}

impl fmt::Debug for Hooks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hooks")
            .field("crash", &self.crash.is_some())
            .field("convert_failure", &self.convert_failure.is_some())
            .finish()
    }
}
