//! Byte-level line framing with carry-over between reads.

/// Split `bytes` (appended to `carry`) into LF-terminated lines.
///
/// A single CR immediately preceding the LF is stripped; every other byte,
/// including a lone CR, is kept. Bytes after the final LF are returned as the
/// new residual so the next call can continue the partial line.
pub fn extract_lines(bytes: &[u8], carry: Vec<u8>) -> (Vec<Vec<u8>>, Vec<u8>) {
    let mut framer = LineFramer::with_carry(carry);
    let lines = framer.push(bytes);
    (lines, framer.into_residual())
}

/// Stateful form of [`extract_lines`].
#[derive(Debug, Default, Clone)]
pub struct LineFramer {
    carry: Vec<u8>,
}

impl LineFramer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_carry(carry: Vec<u8>) -> Self {
        Self { carry }
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Vec<u8>> {
        let mut lines = Vec::new();
        let mut rest = bytes;
        while let Some(pos) = memchr_lf(rest) {
            let mut line = std::mem::take(&mut self.carry);
            line.extend_from_slice(&rest[..pos]);
            strip_cr(&mut line);
            lines.push(line);
            rest = &rest[pos + 1..];
        }
        self.carry.extend_from_slice(rest);
        lines
    }

    pub fn residual(&self) -> &[u8] {
        &self.carry
    }

    pub fn into_residual(self) -> Vec<u8> {
        self.carry
    }
}

/// A line located inside a larger buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramedLine {
    /// Byte offset of the first byte of the line.
    pub offset: usize,
    /// Length of the line content, terminator excluded.
    pub len: usize,
    /// False for a trailing line with no LF.
    pub terminated: bool,
}

impl FramedLine {
    pub fn slice<'a>(&self, buf: &'a [u8]) -> &'a [u8] {
        &buf[self.offset..self.offset + self.len]
    }
}

/// Frame a complete in-memory buffer, returning positions instead of copies.
/// A non-empty tail without LF is returned as an unterminated line.
pub fn frame_buffer(buf: &[u8]) -> Vec<FramedLine> {
    let mut out = Vec::new();
    let mut start = 0;
    while let Some(rel) = memchr_lf(&buf[start..]) {
        let end = start + rel;
        let len = if end > start && buf[end - 1] == b'\r' {
            end - start - 1
        } else {
            end - start
        };
        out.push(FramedLine {
            offset: start,
            len,
            terminated: true,
        });
        start = end + 1;
    }
    if start < buf.len() {
        let end = buf.len();
        out.push(FramedLine {
            offset: start,
            len: end - start,
            terminated: false,
        });
    }
    out
}

fn memchr_lf(bytes: &[u8]) -> Option<usize> {
    bytes.iter().position(|&b| b == b'\n')
}

fn strip_cr(line: &mut Vec<u8>) {
    if line.last() == Some(&b'\r') {
        line.pop();
    }
}
