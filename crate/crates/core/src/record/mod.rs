//! Lossless raw capture into rotating segment files.
//!
//! The recorder never looks at content: chunks are appended verbatim,
//! rotation only ever happens between chunks.

mod segment;
mod session;
mod source;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};

pub use segment::{segment_file_name, RawSegment, SegmentStatus, SegmentWriter};
pub use session::{write_atomic, LinkGap, SessionMetadata, SESSION_FILE};
pub use source::{
    ByteSource, DeviceSource, MemorySource, ReadOutcome, ReplaySource, RetryPolicy, SourceEndpoint,
    SourceKind, TcpSource, NOMINAL_LINK_RATE,
};

use crate::orchestrate::{next_boundary, RotationPolicy};

/// Pending bytes that force a flush regardless of the interval.
pub const FLUSH_THRESHOLD: u64 = 64 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("output directory {}: {source}", path.display())]
    OutDir { path: PathBuf, source: io::Error },
    #[error("source {endpoint} unreachable: {source}")]
    Unreachable { endpoint: String, source: io::Error },
    #[error("write to {} failed: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("source {endpoint} failed: {source}")]
    Source { endpoint: String, source: io::Error },
}

#[derive(Debug, Clone)]
pub struct RecorderOptions {
    /// Descriptor stored in the session metadata.
    pub source: String,
    pub rotation: RotationPolicy,
    pub flush_interval: Duration,
    /// fsync on every flush, not only at rotation.
    pub sync_on_flush: bool,
    /// Extra attempts for a failing write before capture halts.
    pub write_retries: u32,
}

impl Default for RecorderOptions {
    fn default() -> Self {
        Self {
            source: String::new(),
            rotation: RotationPolicy::UtcMidnight,
            flush_interval: Duration::from_secs(1),
            sync_on_flush: false,
            write_retries: 3,
        }
    }
}

/// Snapshot of a live session.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureState {
    pub session_id: String,
    pub active_segment: RawSegment,
    pub bytes_since_flush: u64,
    pub last_flush_time: DateTime<Utc>,
}

/// Single writer for one capture session.
pub struct Recorder {
    dir: PathBuf,
    meta: SessionMetadata,
    active: RawSegment,
    writer: SegmentWriter,
    last_flush: DateTime<Utc>,
    next_boundary: DateTime<Utc>,
    opts: RecorderOptions,
}

impl Recorder {
    /// Create a session directory under `out_dir` and open its first
    /// segment at `now`.
    pub fn open(
        out_dir: &Path,
        opts: RecorderOptions,
        now: DateTime<Utc>,
    ) -> Result<Self, RecordError> {
        let out_err = |source| RecordError::OutDir {
            path: out_dir.to_owned(),
            source,
        };
        fs::create_dir_all(out_dir).map_err(out_err)?;
        let (session_id, dir) = create_session_dir(out_dir, now).map_err(out_err)?;

        let meta = SessionMetadata {
            session_id: session_id.clone(),
            source: opts.source.clone(),
            rotation: opts.rotation,
            flush_interval: opts.flush_interval,
            started: now,
            segments: Vec::new(),
            gaps: Vec::new(),
        };
        let (active, writer) = open_segment(&dir, &session_id, now).map_err(out_err)?;
        let mut rec = Recorder {
            next_boundary: next_boundary(now, opts.rotation, now),
            dir,
            meta,
            active,
            writer,
            last_flush: now,
            opts,
        };
        rec.write_metadata().map_err(out_err)?;
        tracing::info!(session = %rec.meta.session_id, dir = %rec.dir.display(), "session opened");
        Ok(rec)
    }

    pub fn session_id(&self) -> &str {
        &self.meta.session_id
    }

    pub fn session_dir(&self) -> &Path {
        &self.dir
    }

    pub fn metadata(&self) -> &SessionMetadata {
        &self.meta
    }

    pub fn next_boundary(&self) -> DateTime<Utc> {
        self.next_boundary
    }

    pub fn active_segment(&self) -> &RawSegment {
        &self.active
    }

    pub fn state(&self) -> CaptureState {
        CaptureState {
            session_id: self.meta.session_id.clone(),
            active_segment: self.active.clone(),
            bytes_since_flush: self.writer.pending_len(),
            last_flush_time: self.last_flush,
        }
    }

    /// Append a chunk verbatim, flushing when the interval has elapsed.
    pub fn capture(&mut self, chunk: &[u8], now: DateTime<Utc>) -> Result<(), RecordError> {
        self.writer.append(chunk);
        self.active.byte_count += chunk.len() as u64;
        self.flush_if_due(now)
    }

    pub fn flush_if_due(&mut self, now: DateTime<Utc>) -> Result<(), RecordError> {
        let interval = TimeDelta::from_std(self.opts.flush_interval).unwrap_or(TimeDelta::MAX);
        let pending = self.writer.pending_len();
        if pending > 0 && (now - self.last_flush >= interval || pending >= FLUSH_THRESHOLD) {
            self.flush(now)?;
        }
        Ok(())
    }

    /// Hand buffered bytes to the OS now.
    pub fn flush(&mut self, now: DateTime<Utc>) -> Result<(), RecordError> {
        let sync = self.opts.sync_on_flush;
        self.with_write_retries(|w| if sync { w.sync() } else { w.flush() })?;
        self.last_flush = now;
        Ok(())
    }

    fn with_write_retries(
        &mut self,
        mut op: impl FnMut(&mut SegmentWriter) -> io::Result<()>,
    ) -> Result<(), RecordError> {
        let mut attempt = 0;
        loop {
            match op(&mut self.writer) {
                Ok(()) => return Ok(()),
                Err(e) if attempt < self.opts.write_retries => {
                    attempt += 1;
                    tracing::warn!(file = %self.writer.path().display(), attempt, error = %e, "write failed, retrying");
                    thread::sleep(Duration::from_millis(10 * u64::from(attempt)));
                }
                Err(source) => {
                    return Err(RecordError::Write {
                        path: self.writer.path().to_owned(),
                        source,
                    })
                }
            }
        }
    }

    pub fn rotation_due(&self, now: DateTime<Utc>) -> bool {
        now >= self.next_boundary
    }

    /// Close the active segment and open the next one.
    ///
    /// When a boundary is due the segments meet exactly at it; otherwise the
    /// rotation is manual and happens at `now`.
    pub fn rotate(&mut self, now: DateTime<Utc>) -> Result<RawSegment, RecordError> {
        let at = if self.rotation_due(now) {
            self.next_boundary
        } else {
            now
        };
        let closed = self.close_active(at)?;
        let (active, writer) =
            open_segment(&self.dir, &self.meta.session_id, at).map_err(|source| {
                RecordError::Write {
                    path: self.dir.clone(),
                    source,
                }
            })?;
        self.active = active;
        self.writer = writer;
        self.last_flush = at;
        self.next_boundary = next_boundary(at, self.opts.rotation, self.meta.started);

        let mut closed = closed;
        if let Err(e) = self.write_metadata() {
            tracing::error!(segment = %closed.file, error = %e, "metadata write failed, segment left digest-pending");
            closed.status = SegmentStatus::DigestPending;
            if let Some(s) = self
                .meta
                .segments
                .iter_mut()
                .find(|s| s.file == closed.file)
            {
                s.status = SegmentStatus::DigestPending;
            }
        }
        tracing::info!(segment = %closed.file, bytes = closed.byte_count, next = %self.active.file, "rotated");
        Ok(closed)
    }

    /// Rotate across every boundary up to `now`, returning the closed
    /// segments. Periods with no data yield empty segments.
    pub fn rotate_if_due(&mut self, now: DateTime<Utc>) -> Result<Vec<RawSegment>, RecordError> {
        let mut closed = Vec::new();
        while self.rotation_due(now) {
            closed.push(self.rotate(now)?);
        }
        Ok(closed)
    }

    /// Note a source outage in the session metadata.
    pub fn record_gap(&mut self, gap: LinkGap) {
        self.meta.gaps.push(gap);
        if let Err(e) = self.write_metadata() {
            tracing::warn!(error = %e, "could not record link gap");
        }
    }

    /// Close the session, sealing the active segment at `now`.
    pub fn close(mut self, now: DateTime<Utc>) -> Result<RawSegment, RecordError> {
        let at = now.max(self.active.open_time);
        let closed = self.close_active(at)?;
        self.write_metadata().map_err(|source| RecordError::Write {
            path: self.dir.join(SESSION_FILE),
            source,
        })?;
        tracing::info!(session = %self.meta.session_id, "session closed");
        Ok(closed)
    }

    /// Drop the session without flushing, as a kill would.
    pub fn abandon(self) {}

    fn close_active(&mut self, at: DateTime<Utc>) -> Result<RawSegment, RecordError> {
        self.with_write_retries(|w| w.sync())?;
        let mut seg = self.active.clone();
        seg.close_time = Some(at.max(seg.open_time));
        let path = seg.path(&self.dir);
        match crate::digest::sha256_file(&path) {
            Ok(d) => {
                seg.digest = Some(d);
                seg.status = SegmentStatus::Closed;
            }
            Err(e) => {
                tracing::error!(segment = %seg.file, error = %e, "digest failed, segment left digest-pending");
                seg.status = SegmentStatus::DigestPending;
            }
        }
        match self.meta.segments.last_mut() {
            Some(last) if last.file == seg.file => *last = seg.clone(),
            _ => self.meta.segments.push(seg.clone()),
        }
        Ok(seg)
    }

    fn write_metadata(&mut self) -> io::Result<()> {
        let mut meta = self.meta.clone();
        if !matches!(meta.segments.last(), Some(s) if s.file == self.active.file) {
            meta.segments.push(self.active.clone());
        }
        meta.write(&self.dir)
    }
}

fn create_session_dir(out_dir: &Path, now: DateTime<Utc>) -> io::Result<(String, PathBuf)> {
    let base = now.format("%Y%m%dT%H%M%SZ").to_string();
    for n in 0.. {
        let id = if n == 0 {
            base.clone()
        } else {
            format!("{base}-{n}")
        };
        let dir = out_dir.join(&id);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

fn open_segment(
    dir: &Path,
    session_id: &str,
    open_time: DateTime<Utc>,
) -> io::Result<(RawSegment, SegmentWriter)> {
    let base = segment_file_name(open_time);
    for n in 0.. {
        let file = if n == 0 {
            base.clone()
        } else {
            format!("{}-{n}.log", base.trim_end_matches(".log"))
        };
        match SegmentWriter::create(dir.join(&file)) {
            Ok(writer) => {
                let seg = RawSegment {
                    file,
                    session_id: session_id.to_owned(),
                    open_time,
                    close_time: None,
                    byte_count: 0,
                    digest: None,
                    status: SegmentStatus::Active,
                };
                return Ok((seg, writer));
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

/// Connect to `endpoint` under `retry`, then open a session.
pub fn open_session(
    endpoint: &SourceEndpoint,
    out_dir: &Path,
    opts: RecorderOptions,
    retry: &RetryPolicy,
    poll: Duration,
    now: DateTime<Utc>,
) -> Result<(Recorder, Box<dyn ByteSource>), RecordError> {
    let source = retry
        .run("connect", || endpoint.connect(poll))
        .map_err(|source| RecordError::Unreachable {
            endpoint: endpoint.to_string(),
            source,
        })?;
    let recorder = Recorder::open(out_dir, opts, now)?;
    Ok((recorder, source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::sha256_hex;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use rand::{Rng, RngCore, SeedableRng};

    fn utc(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, mo, d, h, mi, s).unwrap()
    }

    fn opts(rotation: RotationPolicy) -> RecorderOptions {
        RecorderOptions {
            source: "memory".into(),
            rotation,
            ..Default::default()
        }
    }

    /// Closed segments plus the active one, concatenated from disk.
    fn session_bytes(rec: &mut Recorder, now: DateTime<Utc>) -> Vec<u8> {
        rec.flush(now).unwrap();
        let mut files: Vec<String> = rec.meta.segments.iter().map(|s| s.file.clone()).collect();
        if files.last() != Some(&rec.active.file) {
            files.push(rec.active.file.clone());
        }
        files
            .iter()
            .flat_map(|f| fs::read(rec.dir.join(f)).unwrap())
            .collect()
    }

    #[test]
    fn fresh_session_has_one_empty_segment() {
        let tmp = tempfile::tempdir().unwrap();
        let t0 = utc(2020, 4, 17, 9, 30, 0);
        let rec = Recorder::open(tmp.path(), opts(RotationPolicy::UtcMidnight), t0).unwrap();
        let st = rec.state();
        assert_eq!(st.active_segment.byte_count, 0);
        assert_eq!(st.session_id, "20200417T093000Z");
        assert_eq!(st.active_segment.file, "raw_20200417T093000Z.log");
        let meta = SessionMetadata::read(rec.session_dir()).unwrap();
        assert_eq!(meta.segments.len(), 1);
        assert_eq!(meta.rotation, RotationPolicy::UtcMidnight);
        assert_eq!(meta.started, t0);

        let again = Recorder::open(tmp.path(), opts(RotationPolicy::UtcMidnight), t0).unwrap();
        assert_eq!(again.session_id(), "20200417T093000Z-1");
    }

    #[test]
    fn chunks_concatenate_verbatim() {
        let tmp = tempfile::tempdir().unwrap();
        let t0 = utc(2020, 4, 17, 0, 0, 0);
        let mut rec = Recorder::open(tmp.path(), opts(RotationPolicy::UtcMidnight), t0).unwrap();
        for c in [&b"ab"[..], b"cd", b"ef"] {
            rec.capture(c, t0).unwrap();
        }
        assert_eq!(rec.state().active_segment.byte_count, 6);
        rec.capture(&[0xFF, 0xFE], t0).unwrap();
        assert_eq!(rec.state().active_segment.byte_count, 8);
        let seg = rec.close(t0 + TimeDelta::seconds(1)).unwrap();
        let dir = tmp.path().join(&seg.session_id);
        assert_eq!(fs::read(seg.path(&dir)).unwrap(), b"abcdef\xFF\xFE");
        assert!(seg.verify(&dir).unwrap());
    }

    #[test]
    fn megabyte_digest_matches_source() {
        let tmp = tempfile::tempdir().unwrap();
        let t0 = utc(2020, 4, 17, 0, 0, 0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut data = vec![0u8; 1 << 20];
        rng.fill_bytes(&mut data);

        let mut rec = Recorder::open(tmp.path(), opts(RotationPolicy::UtcMidnight), t0).unwrap();
        let mut pos = 0;
        let mut t = t0;
        while pos < data.len() {
            let n = rng.random_range(1..=9000).min(data.len() - pos);
            rec.capture(&data[pos..pos + n], t).unwrap();
            pos += n;
            t += TimeDelta::milliseconds(37);
        }
        let seg = rec.close(t).unwrap();
        assert_eq!(seg.byte_count, data.len() as u64);
        assert_eq!(seg.digest.as_deref(), Some(sha256_hex(&data).as_str()));
    }

    #[test]
    fn rotation_splits_between_chunks() {
        let tmp = tempfile::tempdir().unwrap();
        let t0 = utc(2020, 4, 17, 23, 59, 50);
        let mut rec = Recorder::open(tmp.path(), opts(RotationPolicy::UtcMidnight), t0).unwrap();
        let mut input = Vec::new();
        let mut closed = Vec::new();
        for i in 0..20 {
            let now = t0 + TimeDelta::seconds(i);
            closed.extend(rec.rotate_if_due(now).unwrap());
            rec.capture(b"a\n", now).unwrap();
            input.extend_from_slice(b"a\n");
        }
        assert_eq!(closed.len(), 1);
        let first = &closed[0];
        assert_eq!(first.close_time, Some(utc(2020, 4, 18, 0, 0, 0)));
        assert_eq!(first.byte_count, 20);
        assert_eq!(rec.active_segment().open_time, utc(2020, 4, 18, 0, 0, 0));
        assert_eq!(rec.active_segment().file, "raw_20200418T000000Z.log");
        let now = t0 + TimeDelta::seconds(20);
        assert_eq!(session_bytes(&mut rec, now), input);
        assert!(first.verify(rec.session_dir()).unwrap());
    }

    #[test]
    fn empty_rotation_gives_empty_digest() {
        let tmp = tempfile::tempdir().unwrap();
        let t0 = utc(2020, 4, 17, 9, 30, 0);
        let day = RotationPolicy::fixed(Duration::from_secs(86_400)).unwrap();
        let mut rec = Recorder::open(tmp.path(), opts(day), t0).unwrap();
        assert_eq!(rec.next_boundary(), utc(2020, 4, 18, 9, 30, 0));
        let seg = rec.rotate(t0).unwrap();
        assert_eq!(seg.byte_count, 0);
        assert_eq!(seg.digest.as_deref(), Some(sha256_hex(b"").as_str()));
        assert_eq!(seg.status, SegmentStatus::Closed);
        assert_eq!(rec.next_boundary(), utc(2020, 4, 18, 9, 30, 0));
    }

    #[test]
    fn skipped_periods_produce_empty_segments() {
        let tmp = tempfile::tempdir().unwrap();
        let t0 = utc(2020, 4, 17, 12, 0, 0);
        let mut rec = Recorder::open(tmp.path(), opts(RotationPolicy::UtcMidnight), t0).unwrap();
        rec.capture(b"x", t0).unwrap();
        let closed = rec.rotate_if_due(utc(2020, 4, 19, 1, 0, 0)).unwrap();
        assert_eq!(closed.len(), 2);
        assert_eq!(closed[0].byte_count, 1);
        assert_eq!(closed[1].byte_count, 0);
        assert_eq!(closed[1].open_time, utc(2020, 4, 18, 0, 0, 0));
        assert_eq!(closed[1].close_time, Some(utc(2020, 4, 19, 0, 0, 0)));
        let meta = SessionMetadata::read(rec.session_dir()).unwrap();
        assert_eq!(meta.segments.len(), 3);
        assert_eq!(meta.segments[2].status, SegmentStatus::Active);
    }

    #[test]
    fn unflushed_bytes_are_lost_on_abandon() {
        let tmp = tempfile::tempdir().unwrap();
        let t0 = utc(2020, 4, 17, 0, 0, 0);
        let mut rec = Recorder::open(tmp.path(), opts(RotationPolicy::UtcMidnight), t0).unwrap();
        rec.capture(b"old", t0).unwrap();
        rec.capture(b"+1s", t0 + TimeDelta::seconds(1)).unwrap();
        rec.capture(b"new", t0 + TimeDelta::milliseconds(1500))
            .unwrap();
        assert_eq!(rec.state().bytes_since_flush, 3);
        let path = rec.active_segment().path(rec.session_dir());
        rec.abandon();
        assert_eq!(fs::read(path).unwrap(), b"old+1s");
    }

    #[test]
    fn unwritable_out_dir_is_fatal() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("plain");
        fs::write(&file, b"").unwrap();
        let err = Recorder::open(&file, opts(RotationPolicy::UtcMidnight), Utc::now());
        assert!(matches!(err, Err(RecordError::OutDir { .. })));
    }

    #[test]
    fn replaying_a_segment_reproduces_it() {
        let tmp = tempfile::tempdir().unwrap();
        let input = tmp.path().join("captured.log");
        let data: Vec<u8> = (0..50_000u32).map(|i| (i % 251) as u8).collect();
        fs::write(&input, &data).unwrap();
        let ep = SourceEndpoint::replay(input.to_str().unwrap(), 0.0).unwrap();
        let t0 = utc(2020, 4, 17, 0, 0, 0);
        let (mut rec, mut src) = open_session(
            &ep,
            &tmp.path().join("data"),
            opts(RotationPolicy::UtcMidnight),
            &RetryPolicy::none(),
            Duration::from_millis(10),
            t0,
        )
        .unwrap();
        let mut buf = vec![0u8; 4096];
        while let ReadOutcome::Data(n) = src.read_chunk(&mut buf).unwrap() {
            rec.capture(&buf[..n], t0).unwrap();
        }
        let seg = rec.close(t0).unwrap();
        assert_eq!(seg.digest.as_deref(), Some(sha256_hex(&data).as_str()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn capture_is_lossless_across_rotations(
            data in proptest::collection::vec(any::<u8>(), 0..8192),
            cuts in proptest::collection::vec(1usize..700, 1..64),
            step_s in 60i64..7200,
            interval_s in 600u64..20_000,
            midnight in any::<bool>(),
        ) {
            let tmp = tempfile::tempdir().unwrap();
            let t0 = utc(2020, 4, 17, 22, 0, 0);
            let policy = if midnight {
                RotationPolicy::UtcMidnight
            } else {
                RotationPolicy::FixedInterval(Duration::from_secs(interval_s))
            };
            let mut rec = Recorder::open(tmp.path(), opts(policy), t0).unwrap();
            let mut pos = 0;
            let mut t = t0;
            let mut k = 0;
            while pos < data.len() {
                let n = cuts[k % cuts.len()].min(data.len() - pos);
                t += TimeDelta::seconds(step_s);
                rec.rotate_if_due(t).unwrap();
                rec.capture(&data[pos..pos + n], t).unwrap();
                pos += n;
                k += 1;
            }
            let got = session_bytes(&mut rec, t);
            prop_assert_eq!(got, data);
            for s in rec.meta.segments.iter().filter(|s| s.is_closed()) {
                prop_assert!(s.verify(rec.session_dir()).unwrap());
                prop_assert!(s.close_time.unwrap() >= s.open_time);
            }
        }

        #[test]
        fn chunking_does_not_change_contents(
            data in proptest::collection::vec(any::<u8>(), 1..4096),
            a in 1usize..300,
            b in 1usize..300,
        ) {
            let tmp = tempfile::tempdir().unwrap();
            let t0 = utc(2020, 4, 17, 0, 0, 0);
            let mut digests = Vec::new();
            for size in [a, b] {
                let mut rec = Recorder::open(tmp.path(), opts(RotationPolicy::UtcMidnight), t0).unwrap();
                for c in data.chunks(size) {
                    rec.capture(c, t0).unwrap();
                }
                digests.push(rec.close(t0).unwrap().digest);
            }
            prop_assert_eq!(&digests[0], &digests[1]);
        }
    }
}
