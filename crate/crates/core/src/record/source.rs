//! Byte-stream sources the recorder reads from.

use std::fmt;
use std::fs::File;
use std::io::{self, Read};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError};
use serde::{Deserialize, Serialize};

/// Bytes per second of a nominal 115200-baud 8N1 link; replay speed 1.0.
pub const NOMINAL_LINK_RATE: f64 = 11_520.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// A serial-style character device read as a plain file.
    Serial,
    Tcp,
    Replay,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Serial => "serial",
            SourceKind::Tcp => "tcp",
            SourceKind::Replay => "replay",
        }
    }
}

/// Where raw receiver output comes from, written `kind:address`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEndpoint {
    kind: SourceKind,
    address: String,
    replay_speed: Option<f64>,
}

impl SourceEndpoint {
    pub fn new(kind: SourceKind, address: impl Into<String>) -> Result<Self, String> {
        let address = address.into();
        if address.is_empty() {
            return Err(format!("{} source needs an address", kind.as_str()));
        }
        if kind == SourceKind::Tcp {
            validate_host_port(&address)?;
        }
        let replay_speed = (kind == SourceKind::Replay).then_some(0.0);
        Ok(Self {
            kind,
            address,
            replay_speed,
        })
    }

    pub fn tcp(addr: impl Into<String>) -> Result<Self, String> {
        Self::new(SourceKind::Tcp, addr)
    }

    pub fn replay(path: impl Into<String>, speed: f64) -> Result<Self, String> {
        Self::new(SourceKind::Replay, path)?.with_replay_speed(speed)
    }

    /// Set the replay pacing multiplier; 0 replays as fast as possible.
    pub fn with_replay_speed(mut self, speed: f64) -> Result<Self, String> {
        if self.kind != SourceKind::Replay {
            return Err("replay speed only applies to replay sources".into());
        }
        if !speed.is_finite() || speed < 0.0 {
            return Err(format!("replay speed must be >= 0, got {speed}"));
        }
        self.replay_speed = Some(speed);
        Ok(self)
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    pub fn replay_speed(&self) -> Option<f64> {
        self.replay_speed
    }

    /// Open the endpoint once, without retrying.
    pub fn connect(&self, poll: Duration) -> io::Result<Box<dyn ByteSource>> {
        Ok(match self.kind {
            SourceKind::Tcp => Box::new(TcpSource::connect(&self.address, poll)?),
            SourceKind::Serial => Box::new(DeviceSource::open(PathBuf::from(&self.address), poll)?),
            SourceKind::Replay => Box::new(ReplaySource::open(
                PathBuf::from(&self.address),
                self.replay_speed.unwrap_or(0.0),
            )?),
        })
    }
}

fn validate_host_port(addr: &str) -> Result<(), String> {
    let (host, port) = addr
        .rsplit_once(':')
        .ok_or_else(|| format!("tcp address {addr:?} must be host:port"))?;
    if host.is_empty() {
        return Err(format!("tcp address {addr:?} has no host"));
    }
    port.parse::<u16>()
        .map_err(|_| format!("tcp address {addr:?} has an invalid port"))?;
    Ok(())
}

impl fmt::Display for SourceEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.address)
    }
}

impl FromStr for SourceEndpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, addr) = s
            .split_once(':')
            .ok_or_else(|| format!("source {s:?} must look like kind:address"))?;
        let kind = match kind {
            "serial" => SourceKind::Serial,
            "tcp" => SourceKind::Tcp,
            "replay" | "file" => SourceKind::Replay,
            other => return Err(format!("unknown source kind {other:?}")),
        };
        SourceEndpoint::new(kind, addr)
    }
}

impl Serialize for SourceEndpoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SourceEndpoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Result of one read attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadOutcome {
    Data(usize),
    /// Nothing arrived within the poll interval.
    Idle,
    /// The source ended or dropped.
    Eof,
}

pub trait ByteSource: Send {
    fn read_chunk(&mut self, buf: &mut [u8]) -> io::Result<ReadOutcome>;

    /// Re-establish the link after `Eof`. Sources that cannot come back
    /// (file replay) return an error.
    fn reconnect(&mut self) -> io::Result<()> {
        Err(io::Error::new(
            io::ErrorKind::Unsupported,
            "source cannot reconnect",
        ))
    }

    fn describe(&self) -> String;
}

/// TCP client connection.
pub struct TcpSource {
    addr: String,
    poll: Duration,
    stream: Option<TcpStream>,
}

impl TcpSource {
    pub fn connect(addr: &str, poll: Duration) -> io::Result<Self> {
        let stream = open_tcp(addr, poll)?;
        Ok(Self {
            addr: addr.to_owned(),
            poll,
            stream: Some(stream),
        })
    }
}

fn open_tcp(addr: &str, poll: Duration) -> io::Result<TcpStream> {
    let mut last = None;
    for sa in addr.to_socket_addrs()? {
        match TcpStream::connect_timeout(&sa, Duration::from_secs(5)) {
            Ok(s) => {
                s.set_read_timeout(Some(poll.max(Duration::from_millis(1))))?;
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no address resolved")))
}

impl ByteSource for TcpSource {
    fn read_chunk(&mut self, buf: &mut [u8]) -> io::Result<ReadOutcome> {
        let Some(stream) = self.stream.as_mut() else {
            return Ok(ReadOutcome::Eof);
        };
        match stream.read(buf) {
            Ok(0) => {
                self.stream = None;
                Ok(ReadOutcome::Eof)
            }
            Ok(n) => Ok(ReadOutcome::Data(n)),
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                Ok(ReadOutcome::Idle)
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => Ok(ReadOutcome::Idle),
            Err(e) if is_disconnect(&e) => {
                self.stream = None;
                Ok(ReadOutcome::Eof)
            }
            Err(e) => Err(e),
        }
    }

    fn reconnect(&mut self) -> io::Result<()> {
        self.stream = Some(open_tcp(&self.addr, self.poll)?);
        Ok(())
    }

    fn describe(&self) -> String {
        format!("tcp:{}", self.addr)
    }
}

fn is_disconnect(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::BrokenPipe
            | io::ErrorKind::UnexpectedEof
    )
}

/// Character device read on a helper thread, so the capture loop can keep
/// polling the clock while the device is quiet.
pub struct DeviceSource {
    path: PathBuf,
    poll: Duration,
    rx: Receiver<io::Result<Vec<u8>>>,
    pending: Vec<u8>,
}

impl DeviceSource {
    pub fn open(path: PathBuf, poll: Duration) -> io::Result<Self> {
        let rx = spawn_reader(&path)?;
        Ok(Self {
            path,
            poll,
            rx,
            pending: Vec::new(),
        })
    }
}

fn spawn_reader(path: &PathBuf) -> io::Result<Receiver<io::Result<Vec<u8>>>> {
    let mut file = File::open(path)?;
    let (tx, rx) = crossbeam_channel::bounded(64);
    thread::Builder::new()
        .name("device-reader".into())
        .spawn(move || {
            let mut buf = vec![0u8; 4096];
            loop {
                match file.read(&mut buf) {
                    Ok(0) => break,
                    Ok(n) => {
                        if tx.send(Ok(buf[..n].to_vec())).is_err() {
                            break;
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        })?;
    Ok(rx)
}

impl ByteSource for DeviceSource {
    fn read_chunk(&mut self, buf: &mut [u8]) -> io::Result<ReadOutcome> {
        if self.pending.is_empty() {
            match self.rx.recv_timeout(self.poll) {
                Ok(Ok(bytes)) => self.pending = bytes,
                Ok(Err(e)) => return Err(e),
                Err(RecvTimeoutError::Timeout) => return Ok(ReadOutcome::Idle),
                Err(RecvTimeoutError::Disconnected) => return Ok(ReadOutcome::Eof),
            }
        }
        let n = self.pending.len().min(buf.len());
        buf[..n].copy_from_slice(&self.pending[..n]);
        self.pending.drain(..n);
        Ok(ReadOutcome::Data(n))
    }

    fn reconnect(&mut self) -> io::Result<()> {
        self.rx = spawn_reader(&self.path)?;
        self.pending.clear();
        Ok(())
    }

    fn describe(&self) -> String {
        format!("serial:{}", self.path.display())
    }
}

/// Replays a previously captured file.
///
/// Speed 1.0 delivers bytes at [`NOMINAL_LINK_RATE`]; higher values scale
/// that rate, and 0 disables pacing.
pub struct ReplaySource {
    path: PathBuf,
    file: File,
    speed: f64,
    started: Instant,
    delivered: u64,
}

impl ReplaySource {
    pub fn open(path: PathBuf, speed: f64) -> io::Result<Self> {
        let file = File::open(&path)?;
        Ok(Self {
            path,
            file,
            speed,
            started: Instant::now(),
            delivered: 0,
        })
    }
}

impl ByteSource for ReplaySource {
    fn read_chunk(&mut self, buf: &mut [u8]) -> io::Result<ReadOutcome> {
        let mut want = buf.len();
        if self.speed > 0.0 {
            let rate = NOMINAL_LINK_RATE * self.speed;
            let allowed = (self.started.elapsed().as_secs_f64() * rate) as u64;
            if allowed <= self.delivered {
                let wait =
                    (self.delivered + 1) as f64 / rate - self.started.elapsed().as_secs_f64();
                thread::sleep(Duration::from_secs_f64(wait.clamp(0.0, 0.05)));
                return Ok(ReadOutcome::Idle);
            }
            want = want.min((allowed - self.delivered) as usize);
        }
        match self.file.read(&mut buf[..want])? {
            0 => Ok(ReadOutcome::Eof),
            n => {
                self.delivered += n as u64;
                Ok(ReadOutcome::Data(n))
            }
        }
    }

    fn describe(&self) -> String {
        format!("replay:{}", self.path.display())
    }
}

/// Reconnect/backoff settings shared by startup and mid-session drops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "humantime_serde")]
    pub initial_backoff: Duration,
    #[serde(with = "humantime_serde")]
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 8,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }

    /// Run `op` until it succeeds or the retries are spent.
    pub fn run<T>(&self, what: &str, mut op: impl FnMut() -> io::Result<T>) -> io::Result<T> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt < self.max_retries => {
                    attempt += 1;
                    let wait = self.backoff(attempt);
                    tracing::warn!(what, attempt, error = %e, wait_ms = wait.as_millis() as u64, "retrying");
                    thread::sleep(wait);
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Fixed in-memory chunks, mostly for tests and tools.
pub struct MemorySource {
    chunks: std::collections::VecDeque<Vec<u8>>,
}

impl MemorySource {
    pub fn new(chunks: impl IntoIterator<Item = Vec<u8>>) -> Self {
        Self {
            chunks: chunks.into_iter().collect(),
        }
    }
}

impl ByteSource for MemorySource {
    fn read_chunk(&mut self, buf: &mut [u8]) -> io::Result<ReadOutcome> {
        let Some(front) = self.chunks.front_mut() else {
            return Ok(ReadOutcome::Eof);
        };
        let n = front.len().min(buf.len());
        buf[..n].copy_from_slice(&front[..n]);
        front.drain(..n);
        if front.is_empty() {
            self.chunks.pop_front();
        }
        Ok(ReadOutcome::Data(n))
    }

    fn describe(&self) -> String {
        "memory".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::net::TcpListener;

    #[test]
    fn endpoint_parsing() {
        let e: SourceEndpoint = "tcp:localhost:4001".parse().unwrap();
        assert_eq!(e.kind(), SourceKind::Tcp);
        assert_eq!(e.address(), "localhost:4001");
        assert_eq!(e.replay_speed(), None);
        assert_eq!(e.to_string(), "tcp:localhost:4001");

        let r: SourceEndpoint = "replay:/tmp/x.log".parse().unwrap();
        assert_eq!(r.replay_speed(), Some(0.0));
        let s: SourceEndpoint = "serial:/dev/ttyUSB0".parse().unwrap();
        assert_eq!(s.kind(), SourceKind::Serial);

        assert!("tcp:".parse::<SourceEndpoint>().is_err());
        assert!("tcp:localhost".parse::<SourceEndpoint>().is_err());
        assert!("tcp:localhost:99999".parse::<SourceEndpoint>().is_err());
        assert!("usb:/dev/x".parse::<SourceEndpoint>().is_err());
        assert!("nokind".parse::<SourceEndpoint>().is_err());
        assert!(e.clone().with_replay_speed(2.0).is_err());
        assert!(r.with_replay_speed(-1.0).is_err());
    }

    #[test]
    fn backoff_is_capped_exponential() {
        let p = RetryPolicy {
            max_retries: 10,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_millis(1000),
        };
        let waits: Vec<u128> = (1..=6).map(|a| p.backoff(a).as_millis()).collect();
        assert_eq!(waits, [100, 200, 400, 800, 1000, 1000]);
    }

    #[test]
    fn closed_port_fails_after_retries() {
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let ep = SourceEndpoint::tcp(format!("127.0.0.1:{port}")).unwrap();
        let policy = RetryPolicy {
            max_retries: 2,
            initial_backoff: Duration::from_millis(1),
            max_backoff: Duration::from_millis(2),
        };
        let mut tries = 0;
        let r = policy.run("connect", || {
            tries += 1;
            ep.connect(Duration::from_millis(10))
        });
        assert!(r.is_err());
        assert_eq!(tries, 3);
    }

    #[test]
    fn tcp_source_reads_until_eof() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap();
        let server = thread::spawn(move || {
            let (mut s, _) = l.accept().unwrap();
            s.write_all(b"$GPZDA\r\n\xff").unwrap();
        });
        let mut src = TcpSource::connect(&addr.to_string(), Duration::from_millis(20)).unwrap();
        let mut got = Vec::new();
        let mut buf = [0u8; 3];
        loop {
            match src.read_chunk(&mut buf).unwrap() {
                ReadOutcome::Data(n) => got.extend_from_slice(&buf[..n]),
                ReadOutcome::Idle => continue,
                ReadOutcome::Eof => break,
            }
        }
        server.join().unwrap();
        assert_eq!(got, b"$GPZDA\r\n\xff");
    }

    #[test]
    fn replay_and_device_deliver_file_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.log");
        let data: Vec<u8> = (0..10_000u32).map(|i| (i * 7) as u8).collect();
        std::fs::write(&path, &data).unwrap();

        let sources: Vec<Box<dyn ByteSource>> = vec![
            Box::new(ReplaySource::open(path.clone(), 0.0).unwrap()),
            Box::new(DeviceSource::open(path.clone(), Duration::from_millis(50)).unwrap()),
        ];
        for mut src in sources {
            let mut got = Vec::new();
            let mut buf = [0u8; 777];
            loop {
                match src.read_chunk(&mut buf).unwrap() {
                    ReadOutcome::Data(n) => got.extend_from_slice(&buf[..n]),
                    ReadOutcome::Idle => continue,
                    ReadOutcome::Eof => break,
                }
            }
            assert_eq!(got, data, "{}", src.describe());
        }
    }

    #[test]
    fn paced_replay_is_throttled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.log");
        std::fs::write(&path, vec![b'x'; 2304]).unwrap();
        // 100x nominal: 1.152 MB/s, so 2304 bytes take about 2 ms
        let mut src = ReplaySource::open(path, 100.0).unwrap();
        let t0 = Instant::now();
        let mut total = 0;
        let mut buf = [0u8; 4096];
        loop {
            match src.read_chunk(&mut buf).unwrap() {
                ReadOutcome::Data(n) => total += n,
                ReadOutcome::Idle => {}
                ReadOutcome::Eof => break,
            }
        }
        assert_eq!(total, 2304);
        assert!(t0.elapsed() >= Duration::from_millis(1));
    }
}
