//! Paced TCP server for a generated stream.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::generate::GeneratedStream;

const MAX_BATCH: usize = 64 * 1024;
const SLACK: Duration = Duration::from_millis(1);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    RealTime,
    /// Scenario time runs this many times faster than wall time.
    Accelerated(f64),
    Unpaced,
}

impl Pacing {
    fn factor(self) -> Option<f64> {
        match self {
            Pacing::RealTime => Some(1.0),
            Pacing::Accelerated(f) => Some(f),
            Pacing::Unpaced => None,
        }
    }
}

impl fmt::Display for Pacing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pacing::RealTime => f.write_str("real-time"),
            Pacing::Accelerated(x) => write!(f, "accelerated:{x}"),
            Pacing::Unpaced => f.write_str("unpaced"),
        }
    }
}

impl FromStr for Pacing {
    type Err = String;

    /// `real-time`, `unpaced`, `accelerated:<factor>` or `<factor>x`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let factor = match s {
            "real-time" | "realtime" => return Ok(Pacing::RealTime),
            "unpaced" => return Ok(Pacing::Unpaced),
            _ => s
                .strip_prefix("accelerated:")
                .or_else(|| s.strip_suffix('x'))
                .ok_or_else(|| {
                    format!("pacing {s:?}: expected real-time, unpaced or accelerated:<factor>")
                })?,
        };
        let f: f64 = factor
            .parse()
            .map_err(|_| format!("pacing {s:?}: bad factor"))?;
        if !(f.is_finite() && f > 0.0) {
            return Err(format!("pacing {s:?}: factor must be positive"));
        }
        Ok(Pacing::Accelerated(f))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeReport {
    pub bytes_sent: u64,
    pub connections: u32,
}

/// A running server. It exits once the whole stream has been delivered.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    position: Arc<AtomicUsize>,
    handle: JoinHandle<io::Result<ServeReport>>,
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Lines delivered so far.
    pub fn position(&self) -> usize {
        self.position.load(Ordering::Relaxed)
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::Relaxed);
    }

    pub fn join(self) -> io::Result<ServeReport> {
        self.handle
            .join()
            .map_err(|_| io::Error::other("server thread panicked"))?
    }
}

/// Serve `stream` on `listener` with the given pacing.
///
/// Delivery resumes where it stopped when a client disconnects and another
/// connects. A client that half-closes its side is noticed before the next
/// write, so nothing is skipped or repeated; after an abrupt reset, bytes in
/// flight at the time may be lost.
pub fn serve(
    listener: TcpListener,
    stream: Arc<GeneratedStream>,
    pacing: Pacing,
) -> io::Result<Server> {
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let position = Arc::new(AtomicUsize::new(0));
    let (stop2, pos2) = (stop.clone(), position.clone());
    let handle = thread::Builder::new()
        .name("simulate-serve".into())
        .spawn(move || run(listener, &stream, pacing, &stop2, &pos2))?;
    Ok(Server {
        addr,
        stop,
        position,
        handle,
    })
}

fn run(
    listener: TcpListener,
    stream: &GeneratedStream,
    pacing: Pacing,
    stop: &AtomicBool,
    position: &AtomicUsize,
) -> io::Result<ServeReport> {
    let mut report = ServeReport::default();
    let total = stream.lines.len();
    loop {
        if stop.load(Ordering::Relaxed) {
            return Ok(report);
        }
        let (sock, peer) = match listener.accept() {
            Ok(c) => c,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => return Err(e),
        };
        sock.set_nonblocking(false)?;
        sock.set_nodelay(true)?;
        report.connections += 1;
        let from = position.load(Ordering::Relaxed);
        tracing::info!(%peer, line = from, "client connected");
        let sent = deliver(&sock, stream, pacing, stop, position)?;
        report.bytes_sent += sent;
        let at = position.load(Ordering::Relaxed);
        if at >= total {
            finish(sock);
            tracing::info!(%peer, bytes = report.bytes_sent, "stream complete");
            return Ok(report);
        }
        tracing::warn!(%peer, line = at, "client disconnected, position kept");
        let _ = sock.shutdown(Shutdown::Both);
    }
}

/// Send from the current position until done or the client goes away.
fn deliver(
    mut sock: &TcpStream,
    stream: &GeneratedStream,
    pacing: Pacing,
    stop: &AtomicBool,
    position: &AtomicUsize,
) -> io::Result<u64> {
    let lines = &stream.lines;
    let mut idx = position.load(Ordering::Relaxed);
    if idx >= lines.len() {
        return Ok(0);
    }
    let wall0 = Instant::now();
    let scn0 = lines[idx].at;
    let due = |i: usize| -> Duration {
        match pacing.factor() {
            None => Duration::ZERO,
            Some(f) => {
                let dt = (lines[i].at - scn0).num_microseconds().unwrap_or(i64::MAX) as f64 / 1e6;
                Duration::from_secs_f64((dt / f).max(0.0))
            }
        }
    };
    let mut sent = 0u64;
    while idx < lines.len() {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let elapsed = wall0.elapsed();
        let next = due(idx);
        if next > elapsed + SLACK {
            thread::sleep((next - elapsed).min(Duration::from_millis(50)));
            continue;
        }
        let mut j = idx;
        let start = lines[idx].start;
        while j < lines.len() && due(j) <= elapsed + SLACK && lines[j].end - start <= MAX_BATCH {
            j += 1;
        }
        j = j.max(idx + 1);
        if peer_closed(sock)? {
            break;
        }
        let end = lines[j - 1].end;
        match sock.write_all(&stream.bytes[start..end]) {
            Ok(()) => {
                sent += (end - start) as u64;
                idx = j;
                position.store(idx, Ordering::Relaxed);
            }
            Err(e) => {
                tracing::warn!(error = %e, "write to client failed");
                break;
            }
        }
    }
    Ok(sent)
}

/// Whether the client has shut down its sending side.
fn peer_closed(sock: &TcpStream) -> io::Result<bool> {
    sock.set_nonblocking(true)?;
    let mut b = [0u8; 1];
    let r = sock.peek(&mut b);
    sock.set_nonblocking(false)?;
    match r {
        Ok(0) => Ok(true),
        Ok(_) => Ok(false),
        Err(e) if e.kind() == io::ErrorKind::WouldBlock => Ok(false),
        Err(_) => Ok(true),
    }
}

/// Half-close and wait briefly for the client to hang up, so the last
/// bytes are not cut off by a reset.
fn finish(mut sock: TcpStream) {
    let _ = sock.flush();
    let _ = sock.shutdown(Shutdown::Write);
    let _ = sock.set_read_timeout(Some(Duration::from_secs(5)));
    let mut buf = [0u8; 256];
    while let Ok(n) = sock.read(&mut buf) {
        if n == 0 {
            break;
        }
    }
}
