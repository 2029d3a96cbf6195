//! UDP transport for backseat traffic.
//!
//! Telemetry leaves the OBC through a [`Broadcaster`], which paces each
//! sentence type to the configured rate and applies a sender-side
//! [`FaultProfile`] (dropout windows, random loss, fixed latency). Commands and
//! telemetry are received through a [`Listener`]. One sentence per datagram.
//!
//! [`LoopbackLink`] runs the same fault and pacing models against an explicit
//! simulated clock so in-process missions stay deterministic.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TELEMETRY_PORT: u16 = 10010;
pub const DEFAULT_COMMAND_PORT: u16 = 10011;
pub const TELEM_ADDR_ENV: &str = "OTTERLINK_TELEM_ADDR";
pub const CMD_ADDR_ENV: &str = "OTTERLINK_CMD_ADDR";

pub const MIN_RATE_HZ: f64 = 1.0;
pub const MAX_RATE_HZ: f64 = 20.0;

const MAX_DATAGRAM: usize = 2048;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("transport io: {0}")]
    Io(#[from] io::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("handle used after close")]
    Closed,
}

pub type Result<T> = std::result::Result<T, TransportError>;

/// Seconds on a process-wide monotonic clock. Send and receive stamps from
/// different handles are directly comparable.
pub fn mono_now() -> f64 {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed().as_secs_f64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Endpoint {
    addr: SocketAddr,
}

impl Endpoint {
    pub fn new(addr: SocketAddr) -> Result<Self> {
        if addr.port() == 0 {
            return Err(TransportError::Config(format!(
                "port must be in 1..=65535, got 0 ({addr})"
            )));
        }
        Ok(Self { addr })
    }

    pub fn parse(s: &str) -> Result<Self> {
        let addr = s
            .to_socket_addrs()
            .map_err(|e| TransportError::Config(format!("bad endpoint {s:?}: {e}")))?
            .next()
            .ok_or_else(|| TransportError::Config(format!("endpoint {s:?} did not resolve")))?;
        Self::new(addr)
    }

    pub fn loopback(port: u16) -> Result<Self> {
        Self::new(SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), port))
    }

    /// `OTTERLINK_TELEM_ADDR`, falling back to `127.0.0.1:10010`.
    pub fn telemetry_default() -> Result<Self> {
        Self::from_env_or(TELEM_ADDR_ENV, DEFAULT_TELEMETRY_PORT)
    }

    /// `OTTERLINK_CMD_ADDR`, falling back to `127.0.0.1:10011`.
    pub fn command_default() -> Result<Self> {
        Self::from_env_or(CMD_ADDR_ENV, DEFAULT_COMMAND_PORT)
    }

    fn from_env_or(var: &str, port: u16) -> Result<Self> {
        match std::env::var(var) {
            Ok(s) if !s.trim().is_empty() => Self::parse(s.trim()),
            _ => Self::loopback(port),
        }
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.addr.fmt(f)
    }
}

/// Telemetry rate per sentence type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConfig {
    telemetry_hz: f64,
}

impl RateConfig {
    pub fn new(telemetry_hz: f64) -> Result<Self> {
        if !(MIN_RATE_HZ..=MAX_RATE_HZ).contains(&telemetry_hz) {
            return Err(TransportError::Config(format!(
                "telemetry rate {telemetry_hz} Hz outside [{MIN_RATE_HZ}, {MAX_RATE_HZ}] Hz"
            )));
        }
        Ok(Self { telemetry_hz })
    }

    pub fn hz(&self) -> f64 {
        self.telemetry_hz
    }

    pub fn interval(&self) -> f64 {
        1.0 / self.telemetry_hz
    }
}

/// Sender-side field fault model. Window starts are seconds since the
/// owning handle was opened.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultProfile {
    /// `(start, duration)` pairs in seconds.
    pub dropout_windows: Vec<(f64, f64)>,
    pub loss_prob: f64,
    pub latency: f64,
    pub seed: u64,
}

impl FaultProfile {
    pub fn validate(&self) -> Result<()> {
        for &(start, dur) in &self.dropout_windows {
            if !start.is_finite() || !dur.is_finite() || dur < 0.0 {
                return Err(TransportError::Config(format!(
                    "invalid dropout window ({start}, {dur})"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(TransportError::Config(format!(
                "loss_prob {} outside [0, 1]",
                self.loss_prob
            )));
        }
        if !self.latency.is_finite() || self.latency < 0.0 {
            return Err(TransportError::Config(format!("latency {} < 0", self.latency)));
        }
        Ok(())
    }

    pub fn in_dropout(&self, t: f64) -> bool {
        self.dropout_windows
            .iter()
            .any(|&(start, dur)| t >= start && t < start + dur)
    }
}

/// Deterministic realization of a [`FaultProfile`].
#[derive(Debug, Clone)]
pub struct FaultModel {
    profile: FaultProfile,
    rng: ChaCha8Rng,
}

impl FaultModel {
    pub fn new(profile: FaultProfile) -> Result<Self> {
        profile.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(profile.seed);
        Ok(Self { profile, rng })
    }

    pub fn passthrough() -> Self {
        Self {
            profile: FaultProfile::default(),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn profile(&self) -> &FaultProfile {
        &self.profile
    }

    /// Decides the fate of a datagram offered at `t`: `None` if it is lost,
    /// otherwise its earliest release time.
    pub fn admit(&mut self, t: f64) -> Option<f64> {
        if self.profile.in_dropout(t) {
            return None;
        }
        if self.profile.loss_prob > 0.0 && self.rng.random::<f64>() < self.profile.loss_prob {
            return None;
        }
        Some(t + self.profile.latency)
    }
}

/// Per-flow minimum spacing between releases.
#[derive(Debug, Clone)]
pub struct Pacer {
    interval: f64,
    last: HashMap<String, f64>,
}

impl Pacer {
    pub fn new(rate: RateConfig) -> Self {
        Self {
            interval: rate.interval(),
            last: HashMap::new(),
        }
    }

    pub fn schedule(&mut self, flow: &str, earliest: f64) -> f64 {
        let release = match self.last.get(flow) {
            Some(&prev) => earliest.max(prev + self.interval),
            None => earliest,
        };
        self.last.insert(flow.to_string(), release);
        release
    }
}

/// The sentence name of a wire line (`POTPOS` for `$POTPOS,...`).
pub fn flow_key(line: &str) -> &str {
    let body = line.strip_prefix('$').unwrap_or(line);
    let end = body.find([',', '*', '\r', '\n']).unwrap_or(body.len());
    &body[..end]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendAck {
    Queued,
    /// Discarded by the fault model.
    Dropped,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BroadcastStats {
    pub queued: u64,
    pub dropped: u64,
    pub sent: u64,
}

#[derive(Debug)]
struct Pending {
    release: f64,
    seq: u64,
    line: String,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // Min-heap on (release, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .release
            .total_cmp(&self.release)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct BroadcastState {
    heap: BinaryHeap<Pending>,
    seq: u64,
    closed: bool,
    fault: FaultModel,
    pacer: Pacer,
    stats: BroadcastStats,
}

struct BroadcastShared {
    state: Mutex<BroadcastState>,
    wake: Condvar,
}

/// Paced, fault-shaped UDP sender.
pub struct Broadcaster {
    shared: Arc<BroadcastShared>,
    worker: Mutex<Option<JoinHandle<()>>>,
    epoch: f64,
    dest: Endpoint,
    local: SocketAddr,
}

pub fn open_broadcaster(dest: Endpoint, rate: RateConfig) -> Result<Broadcaster> {
    let bind_ip = if dest.addr().ip().is_loopback() {
        IpAddr::V4(Ipv4Addr::LOCALHOST)
    } else {
        IpAddr::V4(Ipv4Addr::UNSPECIFIED)
    };
    Broadcaster::open(SocketAddr::new(bind_ip, 0), dest, rate)
}

impl Broadcaster {
    pub fn open(bind: SocketAddr, dest: Endpoint, rate: RateConfig) -> Result<Self> {
        let socket = UdpSocket::bind(bind).map_err(|source| TransportError::Bind { addr: bind, source })?;
        if let IpAddr::V4(ip) = dest.addr().ip() {
            if ip.is_broadcast() || ip.octets()[3] == 255 {
                socket.set_broadcast(true)?;
            }
        }
        let local = socket.local_addr()?;
        let shared = Arc::new(BroadcastShared {
            state: Mutex::new(BroadcastState {
                heap: BinaryHeap::new(),
                seq: 0,
                closed: false,
                fault: FaultModel::passthrough(),
                pacer: Pacer::new(rate),
                stats: BroadcastStats::default(),
            }),
            wake: Condvar::new(),
        });
        let epoch = mono_now();
        let worker_shared = Arc::clone(&shared);
        let target = dest.addr();
        let worker = std::thread::Builder::new()
            .name("otterlink-broadcast".into())
            .spawn(move || broadcast_worker(worker_shared, socket, target, epoch))?;
        Ok(Self {
            shared,
            worker: Mutex::new(Some(worker)),
            epoch,
            dest,
            local,
        })
    }

    /// Seconds since the handle was opened; the time base of dropout windows.
    pub fn elapsed(&self) -> f64 {
        mono_now() - self.epoch
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    pub fn dest(&self) -> Endpoint {
        self.dest
    }

    pub fn send(&self, line: &str) -> Result<SendAck> {
        let mut st = self.shared.state.lock().expect("broadcast state poisoned");
        if st.closed {
            return Err(TransportError::Closed);
        }
        let t = mono_now() - self.epoch;
        let Some(earliest) = st.fault.admit(t) else {
            st.stats.dropped += 1;
            return Ok(SendAck::Dropped);
        };
        let release = st.pacer.schedule(flow_key(line), earliest);
        let seq = st.seq;
        st.seq += 1;
        st.heap.push(Pending {
            release,
            seq,
            line: line.to_string(),
        });
        st.stats.queued += 1;
        drop(st);
        self.shared.wake.notify_one();
        Ok(SendAck::Queued)
    }

    /// Replaces the fault profile. Traffic already queued keeps its schedule.
    pub fn inject_fault(&self, profile: FaultProfile) -> Result<()> {
        let model = FaultModel::new(profile)?;
        let mut st = self.shared.state.lock().expect("broadcast state poisoned");
        if st.closed {
            return Err(TransportError::Closed);
        }
        st.fault = model;
        Ok(())
    }

    pub fn stats(&self) -> BroadcastStats {
        self.shared.state.lock().expect("broadcast state poisoned").stats.clone()
    }

    /// Number of admitted lines not yet on the wire.
    pub fn backlog(&self) -> usize {
        self.shared.state.lock().expect("broadcast state poisoned").heap.len()
    }

    /// Stops the worker. Lines still queued are discarded.
    pub fn close(&self) {
        {
            let mut st = self.shared.state.lock().expect("broadcast state poisoned");
            st.closed = true;
            st.heap.clear();
        }
        self.shared.wake.notify_all();
        if let Some(handle) = self.worker.lock().expect("worker slot poisoned").take() {
            let _ = handle.join();
        }
    }
}

impl Drop for Broadcaster {
    fn drop(&mut self) {
        self.close();
    }
}

fn broadcast_worker(shared: Arc<BroadcastShared>, socket: UdpSocket, target: SocketAddr, epoch: f64) {
    let mut st = shared.state.lock().expect("broadcast state poisoned");
    loop {
        if st.closed {
            return;
        }
        let now = mono_now() - epoch;
        match st.heap.peek().map(|p| p.release) {
            Some(release) if release <= now => {
                let pending = st.heap.pop().expect("peeked");
                drop(st);
                let ok = socket.send_to(pending.line.as_bytes(), target).is_ok();
                st = shared.state.lock().expect("broadcast state poisoned");
                if ok {
                    st.stats.sent += 1;
                } else {
                    log::warn!("datagram send to {target} failed");
                }
            }
            Some(release) => {
                let wait = Duration::from_secs_f64((release - now).max(0.0));
                st = shared.wake.wait_timeout(st, wait).expect("broadcast state poisoned").0;
            }
            None => {
                st = shared.wake.wait(st).expect("broadcast state poisoned");
            }
        }
    }
}

/// A received datagram.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub line: String,
    /// [`mono_now`] at receipt.
    pub stamp: f64,
    pub from: Option<SocketAddr>,
}

pub struct Listener {
    socket: UdpSocket,
    local: SocketAddr,
    closed: AtomicBool,
    received: AtomicU64,
}

pub fn open_listener(endpoint: Endpoint) -> Result<Listener> {
    Listener::bind(endpoint.addr())
}

impl Listener {
    /// Binds without address reuse, so a second bind of the same port fails.
    pub fn bind(addr: SocketAddr) -> Result<Self> {
        let socket = UdpSocket::bind(addr).map_err(|source| TransportError::Bind { addr, source })?;
        let local = socket.local_addr()?;
        Ok(Self {
            socket,
            local,
            closed: AtomicBool::new(false),
            received: AtomicU64::new(0),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    pub fn received_count(&self) -> u64 {
        self.received.load(AtomicOrdering::Relaxed)
    }

    /// Collects every datagram that arrives before `timeout` elapses, in
    /// receive order. A zero timeout drains what is already buffered.
    pub fn poll(&self, timeout: Duration) -> Result<Vec<Received>> {
        if self.closed.load(AtomicOrdering::Acquire) {
            return Err(TransportError::Closed);
        }
        let mut out = Vec::new();
        let mut buf = [0u8; MAX_DATAGRAM];
        if timeout.is_zero() {
            self.socket.set_nonblocking(true)?;
            let res = self.drain_into(&mut buf, &mut out);
            self.socket.set_nonblocking(false)?;
            res?;
            return Ok(out);
        }
        let deadline = Instant::now() + timeout;
        loop {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            self.socket.set_read_timeout(Some((deadline - now).max(Duration::from_micros(100))))?;
            match self.socket.recv_from(&mut buf) {
                Ok((n, from)) => out.push(self.received(&buf[..n], Some(from))),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    continue
                }
                Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(out)
    }

    fn drain_into(&self, buf: &mut [u8], out: &mut Vec<Received>) -> Result<()> {
        loop {
            match self.socket.recv_from(buf) {
                Ok((n, from)) => out.push(self.received(&buf[..n], Some(from))),
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => return Ok(()),
                Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn received(&self, bytes: &[u8], from: Option<SocketAddr>) -> Received {
        self.received.fetch_add(1, AtomicOrdering::Relaxed);
        Received {
            line: String::from_utf8_lossy(bytes).into_owned(),
            stamp: mono_now(),
            from,
        }
    }

    pub fn close(&self) {
        self.closed.store(true, AtomicOrdering::Release);
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(AtomicOrdering::Acquire)
    }
}

/// Unpaced sender: each call puts exactly one datagram on the wire.
pub struct DirectSender {
    socket: UdpSocket,
    dest: Endpoint,
}

impl DirectSender {
    pub fn open(dest: Endpoint) -> Result<Self> {
        let bind = if dest.addr().ip().is_loopback() {
            SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), 0)
        } else {
            SocketAddr::new(IpAddr::V4(Ipv4Addr::UNSPECIFIED), 0)
        };
        let socket = UdpSocket::bind(bind).map_err(|source| TransportError::Bind { addr: bind, source })?;
        Ok(Self { socket, dest })
    }

    pub fn send(&self, line: &str) -> Result<()> {
        self.socket.send_to(line.as_bytes(), self.dest.addr())?;
        Ok(())
    }

    pub fn dest(&self) -> Endpoint {
        self.dest
    }
}

/// In-process link driven by an explicit clock. Applies the same fault model
/// and optional pacing as [`Broadcaster`].
#[derive(Debug)]
pub struct LoopbackLink {
    fault: FaultModel,
    pacer: Option<Pacer>,
    heap: BinaryHeap<Pending>,
    seq: u64,
    stats: BroadcastStats,
}

impl LoopbackLink {
    pub fn new(rate: Option<RateConfig>) -> Self {
        Self {
            fault: FaultModel::passthrough(),
            pacer: rate.map(Pacer::new),
            heap: BinaryHeap::new(),
            seq: 0,
            stats: BroadcastStats::default(),
        }
    }

    pub fn inject_fault(&mut self, profile: FaultProfile) -> Result<()> {
        self.fault = FaultModel::new(profile)?;
        Ok(())
    }

    pub fn send(&mut self, t: f64, line: &str) -> SendAck {
        let Some(earliest) = self.fault.admit(t) else {
            self.stats.dropped += 1;
            return SendAck::Dropped;
        };
        let release = match self.pacer.as_mut() {
            Some(p) => p.schedule(flow_key(line), earliest),
            None => earliest,
        };
        self.heap.push(Pending {
            release,
            seq: self.seq,
            line: line.to_string(),
        });
        self.seq += 1;
        self.stats.queued += 1;
        SendAck::Queued
    }

    /// Everything released at or before `now`, stamped with its release time.
    pub fn poll(&mut self, now: f64) -> Vec<Received> {
        let mut out = Vec::new();
        while self.heap.peek().is_some_and(|p| p.release <= now + 1e-9) {
            let p = self.heap.pop().expect("peeked");
            self.stats.sent += 1;
            out.push(Received {
                line: p.line,
                stamp: p.release,
                from: None,
            });
        }
        out
    }

    pub fn stats(&self) -> &BroadcastStats {
        &self.stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_bounds() {
        assert!(RateConfig::new(0.5).is_err());
        assert!(RateConfig::new(1.0).is_ok());
        assert!(RateConfig::new(20.0).is_ok());
        assert!(RateConfig::new(20.5).is_err());
        assert!(RateConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn endpoint_rejects_port_zero() {
        assert!(matches!(Endpoint::loopback(0), Err(TransportError::Config(_))));
        assert!(Endpoint::parse("127.0.0.1:0").is_err());
        assert_eq!(Endpoint::parse("127.0.0.1:10010").unwrap().port(), 10010);
    }

    #[test]
    fn profile_validation() {
        let bad = FaultProfile { loss_prob: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FaultProfile { dropout_windows: vec![(1.0, -1.0)], ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FaultProfile { latency: -0.1, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(FaultProfile::default().validate().is_ok());
    }

    #[test]
    fn dropout_window_discards() {
        let mut m = FaultModel::new(FaultProfile {
            dropout_windows: vec![(1.0, 3.0)],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(m.admit(0.5), Some(0.5));
        assert_eq!(m.admit(1.0), None);
        assert_eq!(m.admit(3.99), None);
        assert_eq!(m.admit(4.0), Some(4.0));
    }

    #[test]
    fn seeded_loss_is_binomial_and_deterministic() {
        let profile = FaultProfile { loss_prob: 0.2, seed: 42, ..Default::default() };
        let run = || {
            let mut m = FaultModel::new(profile.clone()).unwrap();
            (0..1000).map(|i| m.admit(i as f64 * 0.01).is_some()).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        let delivered = a.iter().filter(|d| **d).count();
        assert!((760..=840).contains(&delivered), "{delivered}");
    }

    #[test]
    fn pacer_spaces_each_flow() {
        let mut p = Pacer::new(RateConfig::new(10.0).unwrap());
        assert_eq!(p.schedule("POTPOS", 0.0), 0.0);
        assert!((p.schedule("POTPOS", 0.0) - 0.1).abs() < 1e-12);
        assert_eq!(p.schedule("POTATT", 0.0), 0.0);
        assert_eq!(p.schedule("POTPOS", 5.0), 5.0);
    }

    #[test]
    fn flow_keys() {
        assert_eq!(flow_key("$POTPOS,1,2*00\r\n"), "POTPOS");
        assert_eq!(flow_key("$POTXYZ*00"), "POTXYZ");
        assert_eq!(flow_key("X"), "X");
    }

    #[test]
    fn loopback_link_latency_and_fifo() {
        let mut link = LoopbackLink::new(None);
        link.inject_fault(FaultProfile { latency: 0.05, ..Default::default() }).unwrap();
        link.send(0.0, "$A*00");
        link.send(0.0, "$B*00");
        assert!(link.poll(0.04).is_empty());
        let got = link.poll(0.05);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].line, "$A*00");
        assert_eq!(got[1].line, "$B*00");
        assert!(got[0].stamp >= 0.05);
    }

    #[test]
    fn listener_timeout_and_close() {
        let l = Listener::bind("127.0.0.1:0".parse().unwrap()).unwrap();
        let t0 = Instant::now();
        assert!(l.poll(Duration::from_millis(10)).unwrap().is_empty());
        assert!(t0.elapsed() >= Duration::from_millis(10));
        l.close();
        assert!(matches!(l.poll(Duration::from_millis(1)), Err(TransportError::Closed)));
    }

    #[test]
    fn second_bind_fails() {
        let a = Listener::bind("127.0.0.1:0".parse().unwrap()).unwrap();
        let again = Listener::bind(a.local_addr());
        assert!(matches!(again, Err(TransportError::Bind { .. })));
    }
}
