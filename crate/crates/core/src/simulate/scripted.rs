//! In-process endpoint driven by scenario time.

use std::collections::VecDeque;
use std::io;

use chrono::{DateTime, Utc};

use crate::orchestrate::ManualClock;
use crate::record::{ByteSource, ReadOutcome};

/// Delivers timed chunks and moves a [`ManualClock`] to each chunk's time
/// just before handing it out, so a whole scenario runs as fast as the
/// consumer can read while every scheduling decision sees scenario time.
pub struct ScriptedSource {
    chunks: VecDeque<(DateTime<Utc>, Vec<u8>)>,
    clock: ManualClock,
    end: Option<DateTime<Utc>>,
}

impl ScriptedSource {
    pub fn new(chunks: Vec<(DateTime<Utc>, Vec<u8>)>, clock: ManualClock) -> Self {
        Self {
            chunks: chunks.into(),
            clock,
            end: None,
        }
    }

    /// Move the clock here once the chunks run out.
    pub fn ending_at(mut self, end: DateTime<Utc>) -> Self {
        self.end = Some(end);
        self
    }
}

impl ByteSource for ScriptedSource {
    fn read_chunk(&mut self, buf: &mut [u8]) -> io::Result<ReadOutcome> {
        let Some((at, bytes)) = self.chunks.front_mut() else {
            if let Some(end) = self.end {
                self.clock.set(end);
            }
            return Ok(ReadOutcome::Eof);
        };
        self.clock.set(*at);
        let n = bytes.len().min(buf.len());
        buf[..n].copy_from_slice(&bytes[..n]);
        bytes.drain(..n);
        if bytes.is_empty() {
            self.chunks.pop_front();
        }
        Ok(ReadOutcome::Data(n))
    }

    fn describe(&self) -> String {
        "scripted".into()
    }
}
