//! `otterlink` command-line harness.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use otterlink::client::topic_samples;
use otterlink::config::{load_waypoints, RunConfig};
use otterlink::logbag::{export_csv, replay_file, LogWriter, FILE_EXTENSION};
use otterlink::metrics::{timing_summary, write_metrics_csv, MetricsAccumulator, MissionMetrics};
use otterlink::mission::{
    run_bench, run_embedded, run_socket, ControllerKind, MissionError, MissionReport, MissionSpec, SimServer,
};
use otterlink::nmea::OtterMessage;
use otterlink::nmpc::PathSpec;
use otterlink::transport::{Listener, TransportError};

static CANCEL: AtomicBool = AtomicBool::new(false);

#[derive(Parser)]
#[command(name = "otterlink", version, about = "Backseat-driver harness for the Otter USV")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log verbosity (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve a simulated OBC over UDP.
    Sim(SimArgs),
    /// Run one mission and report metrics.
    Run(RunArgs),
    /// Compare NMPC and the baseline on the figure-eight.
    #[command(name = "bench-fig8")]
    BenchFig8(BenchArgs),
    /// Replay a log, recompute metrics or export a topic as CSV.
    Replay(ReplayArgs),
    /// Print decoded telemetry from an endpoint.
    Listen(ListenArgs),
}

#[derive(Args)]
struct SimArgs {
    /// Telemetry rate, Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Run time, s (0 = until interrupted).
    #[arg(long)]
    duration: Option<f64>,
    /// Constant current (north, east), m/s.
    #[arg(long, num_args = 2, value_names = ["N", "E"])]
    current: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Nmpc,
    Baseline,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Nmpc => ControllerKind::Nmpc,
            ControllerArg::Baseline => ControllerKind::Baseline,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "nmpc")]
    controller: ControllerArg,
    /// `figure-eight` or a file of `north,east` waypoints.
    #[arg(long, default_value = "figure-eight")]
    path: String,
    /// Treat a waypoint file as a closed loop.
    #[arg(long)]
    closed: bool,
    /// Run the simulator in-process on a simulated clock.
    #[arg(long)]
    embedded: bool,
    /// Mission timeout, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Log file (default `run-<controller>.olog`).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Append the metrics row to this CSV file.
    #[arg(long)]
    metrics_csv: Option<PathBuf>,
    /// Seconds to wait for the first telemetry in socket mode.
    #[arg(long, default_value_t = 5.0)]
    connect_timeout: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// Lemniscate amplitudes to run, m.
    #[arg(long, value_delimiter = ',')]
    amplitude: Vec<f64>,
    /// Comparison table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for per-run logs.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
    /// Export this topic instead of recomputing metrics.
    #[arg(long)]
    csv: Option<String>,
    /// CSV destination (default stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Playback speed factor; 0 is as fast as possible.
    #[arg(long, default_value_t = 0.0)]
    speed: f64,
}

#[derive(Args)]
struct ListenArgs {
    /// Telemetry endpoint to bind (default from config).
    #[arg(long)]
    endpoint: Option<String>,
    /// Stop after this many sentences.
    #[arg(long)]
    count: Option<u64>,
    /// Stop after this many seconds.
    #[arg(long)]
    duration: Option<f64>,
}

enum Failure {
    Usage(String),
    Connectivity(String),
    Numeric(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Connectivity(_) => 3,
            Failure::Numeric(_) => 4,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Connectivity(m) | Failure::Numeric(m) | Failure::Runtime(m) => m,
        }
    }
}

fn mission_failure(e: MissionError) -> Failure {
    match e {
        MissionError::Config(m) => Failure::Usage(m),
        MissionError::Numeric(m) => Failure::Numeric(m),
        MissionError::Unreachable(m) => Failure::Connectivity(m),
        MissionError::Transport(t) => Failure::Connectivity(t.to_string()),
        MissionError::Log(l) => Failure::Runtime(l.to_string()),
    }
}

fn io_failure(what: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", what.display()))
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = ctrlc::set_handler(|| CANCEL.store(true, Ordering::Relaxed)) {
        log::warn!("cannot install Ctrl-C handler: {e}");
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("otterlink: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.cmd {
        Cmd::Sim(a) => cmd_sim(cfg, a),
        Cmd::Run(a) => cmd_run(cfg, a),
        Cmd::BenchFig8(a) => cmd_bench(cfg, a),
        Cmd::Replay(a) => cmd_replay(a),
        Cmd::Listen(a) => cmd_listen(cfg, a),
    }
}

fn revalidate(cfg: &RunConfig) -> CliResult {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))
}

fn cmd_sim(mut cfg: RunConfig, a: SimArgs) -> CliResult {
    if let Some(r) = a.rate {
        cfg.transport.rate_hz = r;
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    if let Some(c) = a.current {
        cfg.vessel.current_north = c[0];
        cfg.vessel.current_east = c[1];
    }
    revalidate(&cfg)?;
    let (telemetry, command) = cfg.endpoints().map_err(|e| Failure::Usage(e.to_string()))?;
    let spec = MissionSpec::from_config(&cfg, ControllerKind::Nmpc, cfg.figure_eight()).map_err(mission_failure)?;
    let obc = spec.obc_config().map_err(mission_failure)?;
    let server = SimServer::bind(obc, telemetry, command, cfg.telemetry_faults()).map_err(|e| match e {
        MissionError::Transport(t @ TransportError::Bind { .. }) => Failure::Usage(format!("port conflict: {t}")),
        other => mission_failure(other),
    })?;
    println!(
        "sim: telemetry -> {} at {} Hz, commands on {}",
        server.telemetry_dest(),
        cfg.transport.rate_hz,
        server.command_addr()
    );
    let s = server.run(cfg.duration, &CANCEL).map_err(mission_failure)?;
    println!(
        "sim: {:.1} s, {} sentences sent, {} commands ({} rejected)",
        s.elapsed, s.lines_sent, s.commands, s.rejected
    );
    Ok(())
}

fn resolve_path(cfg: &RunConfig, arg: &str, closed: bool) -> Result<PathSpec, Failure> {
    if arg == "figure-eight" {
        return Ok(cfg.figure_eight());
    }
    load_waypoints(Path::new(arg), closed).map_err(|e| Failure::Usage(e.to_string()))
}

fn open_log(path: &Path) -> Result<LogWriter<io::BufWriter<File>>, Failure> {
    LogWriter::create(path).map_err(|e| io_failure(path, e))
}

fn print_report(r: &MissionReport) {
    let m = &r.metrics;
    println!("controller        {}", m.controller);
    println!("rms_cross_track   {:.4} m", m.rms_cross_track);
    println!("max_cross_track   {:.4} m", m.max_cross_track);
    println!("laps              {:.3}", m.laps);
    match m.completion_time {
        Some(t) => println!("completion_time   {t:.2} s"),
        None => println!("completion_time   -"),
    }
    match timing_summary(&r.solve_times) {
        Some((mean, p99)) => println!("solve_time        mean {:.1} ms, p99 {:.1} ms", mean * 1e3, p99 * 1e3),
        None => println!("solve_time        -"),
    }
    println!("dropout_events    {}", m.dropout_events);
    println!("solver_failures   {}", m.solver_failures);
    if r.timed_out {
        println!("status            TIMEOUT (partial metrics)");
    } else if r.interrupted {
        println!("status            INTERRUPTED (partial metrics)");
    } else {
        println!("status            completed");
    }
    if r.decode_errors > 0 || r.log_warnings > 0 {
        println!("warnings          {} decode errors, {} log warnings", r.decode_errors, r.log_warnings);
    }
}

fn append_metrics_csv(path: &Path, m: &MissionMetrics) -> CliResult {
    let exists = path.exists() && std::fs::metadata(path).map(|md| md.len() > 0).unwrap_or(false);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_failure(path, e))?;
    if exists {
        let mut w = csv::Writer::from_writer(file);
        w.write_record(m.csv_row()).and_then(|_| w.flush().map_err(Into::into))
    } else {
        write_metrics_csv(file, std::slice::from_ref(m))
    }
    .map_err(|e| io_failure(path, e))
}

fn cmd_run(mut cfg: RunConfig, a: RunArgs) -> CliResult {
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    revalidate(&cfg)?;
    let kind = ControllerKind::from(a.controller);
    let path = resolve_path(&cfg, &a.path, a.closed)?;
    let spec = MissionSpec::from_config(&cfg, kind, path).map_err(mission_failure)?;
    let log_path = a
        .log
        .unwrap_or_else(|| PathBuf::from(format!("run-{}.{FILE_EXTENSION}", kind.as_str())));
    let mut log = open_log(&log_path)?;
    let report = if a.embedded {
        run_embedded(&spec, Some(&mut log), &CANCEL)
    } else {
        if !(a.connect_timeout.is_finite() && a.connect_timeout > 0.0) {
            return Err(Failure::Usage("--connect-timeout must be > 0".into()));
        }
        let (telemetry, command) = cfg.endpoints().map_err(|e| Failure::Usage(e.to_string()))?;
        run_socket(
            &spec,
            telemetry,
            command,
            Duration::from_secs_f64(a.connect_timeout),
            Some(&mut log),
            &CANCEL,
        )
    }
    .map_err(mission_failure)?;
    log.flush();
    print_report(&report);
    println!("log               {}", log_path.display());
    if let Some(p) = a.metrics_csv {
        append_metrics_csv(&p, &report.metrics)?;
    }
    Ok(())
}

const BENCH_HEADER: [&str; 10] = [
    "amplitude",
    "controller",
    "rms_cross_track",
    "max_cross_track",
    "laps",
    "completed",
    "completion_time",
    "mean_solve_ms",
    "p99_solve_ms",
    "ordering_pass",
];

fn cmd_bench(cfg: RunConfig, a: BenchArgs) -> CliResult {
    revalidate(&cfg)?;
    let amplitudes = if a.amplitude.is_empty() { vec![cfg.bench.amplitude] } else { a.amplitude };
    if let Some(dir) = &a.log_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut all_pass = true;
    println!(
        "{:>9}  {:<10} {:>10} {:>10} {:>6} {:>12} {:>14}",
        "amplitude", "controller", "rms_cte_m", "max_cte_m", "laps", "completion_s", "mean_solve_ms"
    );
    for amp in amplitudes {
        let mut c = cfg.clone();
        c.bench.amplitude = amp;
        // Long lemniscates need more time than the default timeout.
        let length = c.figure_eight().build().map_err(|e| Failure::Usage(e.to_string()))?.length();
        c.duration = c.duration.max(2.0 * c.bench.laps * length / c.bench.speed);
        revalidate(&c)?;
        let report = match &a.log_dir {
            Some(dir) => {
                let mut ln = open_log(&dir.join(format!("bench-a{amp}-nmpc.{FILE_EXTENSION}")))?;
                let mut lb = open_log(&dir.join(format!("bench-a{amp}-baseline.{FILE_EXTENSION}")))?;
                run_bench(&c, Some((&mut ln, &mut lb)), &CANCEL)
            }
            None => run_bench::<io::Sink>(&c, None, &CANCEL),
        }
        .map_err(mission_failure)?;
        let pass = report.ordering_pass();
        all_pass &= pass;
        for r in [&report.nmpc, &report.baseline] {
            let m = &r.metrics;
            let timing = timing_summary(&r.solve_times);
            println!(
                "{:>9}  {:<10} {:>10.4} {:>10.4} {:>6.3} {:>12} {:>14}",
                amp,
                m.controller,
                m.rms_cross_track,
                m.max_cross_track,
                m.laps,
                m.completion_time.map_or("-".into(), |t| format!("{t:.2}")),
                timing.map_or("-".into(), |(mean, _)| format!("{:.1}", mean * 1e3)),
            );
            rows.push(vec![
                format!("{amp:?}"),
                m.controller.clone(),
                format!("{:?}", m.rms_cross_track),
                format!("{:?}", m.max_cross_track),
                format!("{:?}", m.laps),
                m.completed.to_string(),
                m.completion_time.map(|t| format!("{t:?}")).unwrap_or_default(),
                timing.map(|(mean, _)| format!("{:.3}", mean * 1e3)).unwrap_or_default(),
                timing.map(|(_, p99)| format!("{:.3}", p99 * 1e3)).unwrap_or_default(),
                pass.to_string(),
            ]);
        }
        println!(
            "ordering A={amp}: {} (NMPC {:.4} m {} baseline {:.4} m)",
            if pass { "PASS" } else { "FAIL" },
            report.nmpc.metrics.rms_cross_track,
            if report.nmpc.metrics.rms_cross_track < report.baseline.metrics.rms_cross_track { "<" } else { ">=" },
            report.baseline.metrics.rms_cross_track,
        );
    }
    if let Some(p) = &a.csv {
        let write = || -> Result<(), csv::Error> {
            let mut w = csv::Writer::from_path(p)?;
            w.write_record(BENCH_HEADER)?;
            for r in &rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| io_failure(p, e))?;
    }
    println!("NMPC < baseline: {}", if all_pass { "PASS" } else { "FAIL" });
    Ok(())
}

fn is_broken_pipe(e: &otterlink::logbag::LogError) -> bool {
    use otterlink::logbag::LogError;
    let kind = match e {
        LogError::Io(io) => Some(io.kind()),
        LogError::Csv(c) => match c.kind() {
            csv::ErrorKind::Io(io) => Some(io.kind()),
            _ => None,
        },
        _ => None,
    };
    kind == Some(io::ErrorKind::BrokenPipe)
}

fn cmd_replay(a: ReplayArgs) -> CliResult {
    if !a.log.is_file() {
        return Err(Failure::Usage(format!("{}: no such log file", a.log.display())));
    }
    if let Some(topic) = a.csv {
        let src = BufReader::new(File::open(&a.log).map_err(|e| io_failure(&a.log, e))?);
        let res = match &a.out {
            Some(p) => export_csv(src, &topic, File::create(p).map_err(|e| io_failure(p, e))?),
            None => export_csv(src, &topic, io::stdout().lock()),
        };
        // A closed pipe (`| head`) is a normal way to stop reading.
        if res.as_ref().is_err_and(is_broken_pipe) {
            return Ok(());
        }
        let rows = res.map_err(|e| match e {
            otterlink::logbag::LogError::Usage(m) => Failure::Usage(m),
            other => Failure::Runtime(other.to_string()),
        })?;
        eprintln!("{rows} rows of {topic}");
        return Ok(());
    }
    let mut acc = MetricsAccumulator::new();
    let summary = replay_file(&a.log, a.speed, |r| {
        if !CANCEL.load(Ordering::Relaxed) {
            acc.consume(r);
        }
    })
    .map_err(|e| match e {
        otterlink::logbag::LogError::Usage(m) => Failure::Usage(m),
        other => Failure::Runtime(other.to_string()),
    })?;
    if summary.corrupt > 0 {
        eprintln!("warning: skipped {} corrupt lines", summary.corrupt);
    }
    let m = acc.finish();
    println!("records           {}", summary.delivered);
    let report = MissionReport {
        timed_out: false,
        solve_times: acc.solve_times().to_vec(),
        decode_errors: 0,
        log_warnings: 0,
        elapsed: summary.wall_time,
        interrupted: false,
        metrics: m.clone(),
    };
    print_report(&report);
    let mut out = io::stdout().lock();
    write_metrics_csv(&mut out, std::slice::from_ref(&m)).map_err(|e| Failure::Runtime(e.to_string()))?;
    out.flush().ok();
    Ok(())
}

fn cmd_listen(cfg: RunConfig, a: ListenArgs) -> CliResult {
    let endpoint = match a.endpoint {
        Some(s) => otterlink::transport::Endpoint::parse(&s).map_err(|e| Failure::Usage(e.to_string()))?,
        None => cfg.endpoints().map_err(|e| Failure::Usage(e.to_string()))?.0,
    };
    let listener = Listener::bind(endpoint.addr()).map_err(|e| Failure::Connectivity(e.to_string()))?;
    eprintln!("listening on {}", listener.local_addr());
    let start = Instant::now();
    let mut seen = 0u64;
    let mut out = io::stdout().lock();
    while !CANCEL.load(Ordering::Relaxed) {
        if a.duration.is_some_and(|d| start.elapsed().as_secs_f64() >= d) {
            break;
        }
        for r in listener
            .poll(Duration::from_millis(100))
            .map_err(|e| Failure::Connectivity(e.to_string()))?
        {
            let tag = match OtterMessage::decode(&r.line) {
                Ok(msg) => {
                    let topics: Vec<&str> = topic_samples(&msg, r.stamp).iter().map(|s| s.topic.as_str()).collect();
                    topics.join(",")
                }
                Err(e) => format!("invalid: {e}"),
            };
            if writeln!(out, "{:.3} [{tag}] {}", r.stamp, r.line.trim_end()).is_err() {
                return Ok(());
            }
            seen += 1;
            if a.count.is_some_and(|c| seen >= c) {
                return Ok(());
            }
        }
    }
    Ok(())
}
