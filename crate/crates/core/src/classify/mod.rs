//! Line framing, header classification, checksum validation and routing of
//! closed raw segments into per-class stores.

mod checksum;
mod framing;
mod header;
mod route;

use std::io;
use std::path::{Path, PathBuf};

pub use checksum::{strip_checksum, verify_checksum, with_checksum, xor_fold, ChecksumStatus};
pub use framing::{extract_lines, frame_buffer, FramedLine, LineFramer};
pub use header::{classify_line, MessageClass};
pub use route::{
    classify_bytes, destination, route, ClassificationReport, ClassifiedDir, ClassifiedLine,
    Destination, QuarantineReason, RoutePolicy, RoutingEntry, SegmentInfo, SegmentRef,
    DEFAULT_MAX_LINE_LEN, QUARANTINE_STORE, REPORT_FILE, ROUTING_FILE,
};

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {reason}", path.display())]
    Report { path: PathBuf, reason: String },
}

impl ClassifyError {
    pub(crate) fn report(path: &Path, reason: impl Into<String>) -> Self {
        ClassifyError::Report {
            path: path.to_owned(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        ClassifyError::Io {
            path: path.to_owned(),
            source,
        }
    }
}
