//! Mission runners behind the CLI.
//!
//! [`run_embedded`] steps the simulated OBC, both links and the controller on
//! one simulated clock, so a mission is a pure function of its spec.
//! [`run_socket`] drives a controller against a live OBC over UDP, and
//! [`SimServer`] is the OBC side of that pairing.

use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::client::{
    BackseatClient, CommandPublisher, Dispatcher, TopicName, TopicPayload, TopicSample, DEFAULT_SLOP,
};
use crate::config::RunConfig;
use crate::logbag::{utc_now, Direction, LogError, LogRecord, LogWriter};
use crate::metrics::{event_record, solve_record, MetricsAccumulator, MissionMeta, MissionMetrics};
use crate::nmpc::{BaselineController, Controller, LosConfig, NmpcConfig, NmpcController, NmpcError, PathSpec};
use crate::sim::{local_to_latlon, EnvDisturbance, Obc, ObcConfig, SimError, VesselParams, SIM_DT};
use crate::transport::{
    mono_now, Broadcaster, Endpoint, FaultProfile, Listener, LoopbackLink, RateConfig, TransportError,
};

const SYNC_TOPICS: [TopicName; 3] = [TopicName::OtterGps, TopicName::OtterImu, TopicName::OtterCogsog];
/// OBC ticks per controller tick.
const TICKS_PER_CONTROL: u64 = 5;

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric fault: {0}")]
    Numeric(String),
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Log(#[from] LogError),
}

impl From<SimError> for MissionError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NumericFault(m) => MissionError::Numeric(m),
            other => MissionError::Config(other.to_string()),
        }
    }
}

impl From<NmpcError> for MissionError {
    fn from(e: NmpcError) -> Self {
        match e {
            NmpcError::NumericFault(m) => MissionError::Numeric(m),
            NmpcError::Config(m) => MissionError::Config(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Nmpc,
    Baseline,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Nmpc => "nmpc",
            ControllerKind::Baseline => "baseline",
        }
    }
}

impl FromStr for ControllerKind {
    type Err = MissionError;
    fn from_str(s: &str) -> Result<Self, MissionError> {
        match s {
            "nmpc" => Ok(ControllerKind::Nmpc),
            "baseline" => Ok(ControllerKind::Baseline),
            _ => Err(MissionError::Config(format!("unknown controller {s:?}"))),
        }
    }
}

/// Everything a mission depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionSpec {
    pub controller: ControllerKind,
    pub seed: u64,
    pub path: PathSpec,
    pub laps: f64,
    /// Mission timeout, s.
    pub timeout: f64,
    pub origin: (f64, f64),
    pub params: VesselParams,
    pub env: EnvDisturbance,
    pub rate: RateConfig,
    pub telemetry_faults: FaultProfile,
    pub nmpc: NmpcConfig,
    pub los: LosConfig,
    /// End as soon as the completion criterion is met.
    pub stop_on_completion: bool,
}

impl MissionSpec {
    pub fn from_config(cfg: &RunConfig, controller: ControllerKind, path: PathSpec) -> Result<Self, MissionError> {
        cfg.validate().map_err(|e| MissionError::Config(e.to_string()))?;
        let speed = cfg.bench.speed;
        Ok(Self {
            controller,
            seed: cfg.seed,
            path,
            laps: cfg.bench.laps,
            timeout: cfg.duration,
            origin: cfg.bench.origin,
            params: cfg.vessel.params(),
            env: cfg.vessel.env(),
            rate: cfg.rate()?,
            telemetry_faults: cfg.telemetry_faults(),
            nmpc: NmpcConfig { ref_speed: speed, ..cfg.nmpc_config() },
            los: LosConfig { speed, ..cfg.los_config() },
            stop_on_completion: true,
        })
    }

    /// Vessel at rest on the path start, pointing along the path.
    pub fn obc_config(&self) -> Result<ObcConfig, MissionError> {
        let path = self.path.build()?;
        Ok(ObcConfig {
            params: self.params,
            telemetry_hz: self.rate.hz(),
            origin: self.origin,
            start_position: path.start(),
            start_heading_deg: path.start_heading().to_degrees(),
            env: self.env,
            ..ObcConfig::default()
        })
    }

    pub fn meta(&self) -> MissionMeta {
        MissionMeta {
            controller: self.controller.as_str().into(),
            seed: self.seed,
            path: self.path.clone(),
            origin: self.origin,
            laps: self.laps,
        }
    }

    fn controller(&self, deterministic: bool) -> Result<Controller, MissionError> {
        let path = self.path.build()?;
        Ok(match self.controller {
            ControllerKind::Nmpc => {
                let mut cfg = self.nmpc;
                cfg.model = self.params;
                if deterministic {
                    cfg.time_budget = None;
                }
                Controller::Nmpc(Box::new(NmpcController::new(cfg, path, self.origin)?))
            }
            ControllerKind::Baseline => {
                Controller::Baseline(Box::new(BaselineController::new(self.los, path, self.origin)?))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionReport {
    pub metrics: MissionMetrics,
    /// Wall-clock NMPC solve times, s.
    pub solve_times: Vec<f64>,
    pub decode_errors: u64,
    pub log_warnings: u64,
    /// Mission clock at the end, s.
    pub elapsed: f64,
    pub timed_out: bool,
    pub interrupted: bool,
}

/// Fans records out to the log and the metrics accumulator.
struct Recorder<'a, W: Write> {
    log: Option<&'a mut LogWriter<W>>,
    metrics: MetricsAccumulator,
}

impl<W: Write> Recorder<'_, W> {
    fn put(&mut self, rec: LogRecord) -> Result<(), MissionError> {
        if let Some(log) = self.log.as_deref_mut() {
            log.record(&rec)?;
        }
        self.metrics.consume(&rec);
        Ok(())
    }

    fn warnings(&self) -> u64 {
        self.log.as_ref().map_or(0, |l| l.warnings())
    }
}

/// Handles one controller tick: events, solve stats and the command.
fn apply_tick<W: Write>(
    rec: &mut Recorder<'_, W>,
    out: crate::nmpc::TickOutput,
    t: f64,
    utc: f64,
    mut send: impl FnMut(&str) -> Result<(), TransportError>,
) -> Result<(), MissionError> {
    for e in out.events {
        rec.put(event_record(t, utc, serde_json::to_value(&e).expect("events serialize")))?;
    }
    if let Some(s) = out.solve {
        rec.put(solve_record(t, utc, &s))?;
    }
    if let Some(payload) = out.command {
        let topic = payload.topic();
        let mut publisher = CommandPublisher::new(|line: &str| send(line));
        match publisher.publish_command(topic, &payload) {
            Ok(_) => rec.put(LogRecord::new(t, utc, Direction::Tx, topic.as_str(), payload.to_json()))?,
            Err(e) => log::warn!("command not sent: {e}"),
        }
    }
    Ok(())
}

fn rx_records<W: Write>(rec: &mut Recorder<'_, W>, samples: &[TopicSample], utc: f64) -> Result<(), MissionError> {
    for s in samples {
        rec.put(LogRecord::from_sample(s, utc, Direction::Rx))?;
    }
    Ok(())
}

/// Days from 1970-01-01 to a proleptic Gregorian date.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Unix time of the simulated clock's zero.
fn sim_epoch(cfg: &ObcConfig) -> f64 {
    let d = cfg.utc_date as i64;
    days_from_civil(d / 10_000, d / 100 % 100, d % 100) as f64 * 86_400.0 + cfg.utc_start
}

/// In-process mission on a simulated clock. The NMPC wall-clock budget is
/// disabled, so results depend only on the spec.
pub fn run_embedded<W: Write>(
    spec: &MissionSpec,
    log: Option<&mut LogWriter<W>>,
    cancel: &AtomicBool,
) -> Result<MissionReport, MissionError> {
    let obc_cfg = spec.obc_config()?;
    let epoch = sim_epoch(&obc_cfg);
    let mut obc = Obc::new(obc_cfg)?;
    let mut telemetry = LoopbackLink::new(Some(spec.rate));
    telemetry.inject_fault(spec.telemetry_faults.clone())?;
    let mut commands = LoopbackLink::new(None);
    let mut dispatcher = Dispatcher::new();
    let synced = dispatcher
        .synchronize(&SYNC_TOPICS, DEFAULT_SLOP)
        .map_err(|e| MissionError::Config(e.to_string()))?;
    let mut controller = spec.controller(true)?;
    let mut rec = Recorder { log, metrics: MetricsAccumulator::new() };
    rec.put(spec.meta().record(0.0, epoch))?;

    let steps = (spec.timeout / SIM_DT).round() as u64;
    let mut t = 0.0;
    let mut interrupted = false;
    for i in 1..=steps {
        if cancel.load(Ordering::Relaxed) {
            interrupted = true;
            break;
        }
        t = i as f64 * SIM_DT;
        for r in commands.poll(t) {
            if let Err(e) = obc.handle_line(&r.line) {
                log::warn!("OBC rejected {:?}: {e}", r.line);
            }
        }
        for line in obc.tick(t)? {
            telemetry.send(t, &line);
        }
        for r in telemetry.poll(t) {
            let samples = dispatcher.ingest(&r.line, r.stamp);
            rx_records(&mut rec, &samples, epoch + r.stamp)?;
        }
        while let Ok(s) = synced.try_recv() {
            controller.on_sample(&s);
        }
        if i % TICKS_PER_CONTROL == 0 {
            let out = controller.step(t);
            apply_tick(&mut rec, out, t, epoch + t, |line| {
                commands.send(t, line);
                Ok(())
            })?;
        }
        if spec.stop_on_completion && rec.metrics.completed() {
            break;
        }
    }
    if let Some(log) = rec.log.as_deref_mut() {
        log.flush();
    }
    let metrics = rec.metrics.finish();
    Ok(MissionReport {
        timed_out: !metrics.completed && !interrupted,
        metrics,
        solve_times: rec.metrics.solve_times().to_vec(),
        decode_errors: dispatcher.decode_errors(),
        log_warnings: rec.warnings(),
        elapsed: t,
        interrupted,
    })
}

/// Controller against a live OBC. Fails with [`MissionError::Unreachable`]
/// if no telemetry arrives within `connect_timeout`.
pub fn run_socket<W: Write>(
    spec: &MissionSpec,
    telemetry: Endpoint,
    command: Endpoint,
    connect_timeout: Duration,
    log: Option<&mut LogWriter<W>>,
    cancel: &AtomicBool,
) -> Result<MissionReport, MissionError> {
    let client = BackseatClient::connect(telemetry, command).map_err(|e| match e {
        crate::client::ClientError::Transport(t) => MissionError::Transport(t),
        other => MissionError::Config(other.to_string()),
    })?;
    let synced = client
        .synchronize(&SYNC_TOPICS, DEFAULT_SLOP)
        .map_err(|e| MissionError::Config(e.to_string()))?;
    let mut controller = spec.controller(false)?;
    let sender = crate::transport::DirectSender::open(command)?;
    let mut rec = Recorder { log, metrics: MetricsAccumulator::new() };
    let t0 = mono_now();
    rec.put(spec.meta().record(t0, utc_now()))?;

    let period = Duration::from_secs_f64(crate::nmpc::CONTROL_PERIOD);
    let start = Instant::now();
    let mut heard = false;
    let mut next_tick = start + period;
    let mut interrupted = false;
    loop {
        if cancel.load(Ordering::Relaxed) {
            interrupted = true;
            break;
        }
        let elapsed = start.elapsed();
        if elapsed.as_secs_f64() >= spec.timeout {
            break;
        }
        if !heard && elapsed >= connect_timeout {
            return Err(MissionError::Unreachable(format!(
                "no telemetry on {telemetry} within {connect_timeout:?}"
            )));
        }
        let wait = next_tick.saturating_duration_since(Instant::now());
        for (_, samples) in client.spin_once(wait.max(Duration::from_millis(1))).map_err(|e| match e {
            crate::client::ClientError::Transport(t) => MissionError::Transport(t),
            other => MissionError::Config(other.to_string()),
        })? {
            heard |= !samples.is_empty();
            rx_records(&mut rec, &samples, utc_now())?;
        }
        while let Ok(s) = synced.try_recv() {
            controller.on_sample(&s);
        }
        if Instant::now() >= next_tick {
            next_tick += period;
            let now = mono_now();
            let out = controller.step(now);
            apply_tick(&mut rec, out, now, utc_now(), |line| sender.send(line))?;
        }
        if spec.stop_on_completion && rec.metrics.completed() {
            break;
        }
    }
    if let Some(log) = rec.log.as_deref_mut() {
        log.flush();
    }
    let metrics = rec.metrics.finish();
    Ok(MissionReport {
        timed_out: !metrics.completed && !interrupted,
        metrics,
        solve_times: rec.metrics.solve_times().to_vec(),
        decode_errors: client.decode_errors(),
        log_warnings: rec.warnings(),
        elapsed: mono_now() - t0,
        interrupted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimSummary {
    pub elapsed: f64,
    pub lines_sent: u64,
    pub commands: u64,
    pub rejected: u64,
}

/// Bound sockets of a simulated OBC.
pub struct SimServer {
    obc: Obc,
    broadcaster: Broadcaster,
    commands: Listener,
}

impl SimServer {
    /// Binds the command port and opens the telemetry broadcaster.
    pub fn bind(
        cfg: ObcConfig,
        telemetry: Endpoint,
        command: Endpoint,
        faults: FaultProfile,
    ) -> Result<Self, MissionError> {
        let rate = RateConfig::new(cfg.telemetry_hz)?;
        let obc = Obc::new(cfg)?;
        let commands = Listener::bind(command.addr())?;
        let broadcaster = crate::transport::open_broadcaster(telemetry, rate)?;
        broadcaster.inject_fault(faults)?;
        Ok(Self { obc, broadcaster, commands })
    }

    pub fn command_addr(&self) -> std::net::SocketAddr {
        self.commands.local_addr()
    }

    pub fn telemetry_dest(&self) -> Endpoint {
        self.broadcaster.dest()
    }

    /// Runs in real time until `duration` (0 = no limit) or cancellation.
    pub fn run(mut self, duration: f64, cancel: &AtomicBool) -> Result<SimSummary, MissionError> {
        let start = Instant::now();
        let mut summary = SimSummary::default();
        let tick = Duration::from_secs_f64(SIM_DT);
        let mut next = start;
        loop {
            if cancel.load(Ordering::Relaxed) {
                break;
            }
            let now = start.elapsed().as_secs_f64();
            if duration > 0.0 && now >= duration {
                break;
            }
            for r in self.commands.poll(Duration::ZERO)? {
                summary.commands += 1;
                if let Err(e) = self.obc.handle_line(&r.line) {
                    summary.rejected += 1;
                    log::warn!("rejected command {:?}: {e}", r.line);
                }
            }
            for line in self.obc.tick(now)? {
                self.broadcaster.send(&line)?;
                summary.lines_sent += 1;
            }
            next += tick;
            std::thread::sleep(next.saturating_duration_since(Instant::now()));
        }
        summary.elapsed = start.elapsed().as_secs_f64();
        self.broadcaster.close();
        Ok(summary)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub nmpc: MissionReport,
    pub baseline: MissionReport,
}

impl BenchReport {
    /// Both controllers finished the target laps and NMPC tracked tighter.
    pub fn ordering_pass(&self) -> bool {
        self.nmpc.metrics.completed
            && self.baseline.metrics.completed
            && self.nmpc.metrics.rms_cross_track < self.baseline.metrics.rms_cross_track
    }
}

/// Runs both controllers embedded on the configured figure-eight. Logs go
/// to `logs` when given, as `(nmpc, baseline)`.
pub fn run_bench<W: Write>(
    cfg: &RunConfig,
    logs: Option<(&mut LogWriter<W>, &mut LogWriter<W>)>,
    cancel: &AtomicBool,
) -> Result<BenchReport, MissionError> {
    let path = cfg.figure_eight();
    let nmpc_spec = MissionSpec::from_config(cfg, ControllerKind::Nmpc, path.clone())?;
    let base_spec = MissionSpec::from_config(cfg, ControllerKind::Baseline, path)?;
    let (a, b) = match logs {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    Ok(BenchReport {
        nmpc: run_embedded(&nmpc_spec, a, cancel)?,
        baseline: run_embedded(&base_spec, b, cancel)?,
    })
}

/// Recomputes mission metrics from a recorded log.
pub fn metrics_from_log<R: std::io::BufRead>(source: R) -> Result<(MissionMetrics, u64), LogError> {
    let mut acc = MetricsAccumulator::new();
    let summary = crate::logbag::replay(source, 0.0, |r| acc.consume(r))?;
    Ok((acc.finish(), summary.corrupt))
}

/// Station-keeping command payload for a local target.
pub fn station_keep_payload(target: (f64, f64), origin: (f64, f64), speed: f64) -> TopicPayload {
    let (lat, lon) = local_to_latlon(target.0, target.1, origin);
    TopicPayload::StationKeeping(crate::nmea::StationKeepCommand { lat, lon, speed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn civil_days() {
        assert_eq!(days_from_civil(1970, 1, 1), 0);
        assert_eq!(days_from_civil(2000, 3, 1), 11_017);
        // 2023-08-15 is Unix 1692057600.
        assert_eq!(days_from_civil(2023, 8, 15) * 86_400, 1_692_057_600);
    }

    #[test]
    fn controller_names() {
        assert_eq!("nmpc".parse::<ControllerKind>().unwrap(), ControllerKind::Nmpc);
        assert!("pid".parse::<ControllerKind>().is_err());
    }
}
