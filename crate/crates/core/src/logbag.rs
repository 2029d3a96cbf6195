//! Append-only JSON Lines log (`.olog`), replay and CSV export.
//!
//! Each line is one [`LogRecord`] carrying `"v":1`. Monotonic stamps must not
//! decrease within a file.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::client::{TopicName, TopicPayload, TopicSample};

pub const SCHEMA_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = "olog";
const FLUSH_EVERY: Duration = Duration::from_secs(1);

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log io error: {0}")]
    Io(#[from] io::Error),
    #[error("t_mono went backwards: {got} after {prev}")]
    Ordering { prev: f64, got: f64 },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rx,
    Tx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub v: u32,
    pub t_mono: f64,
    pub t_utc: f64,
    pub direction: Direction,
    /// A topic name, or a raw channel such as `meta`, `event` or `nmpc`.
    pub topic: String,
    pub payload: Value,
}

impl LogRecord {
    pub fn new(t_mono: f64, t_utc: f64, direction: Direction, topic: impl Into<String>, payload: Value) -> Self {
        Self {
            v: SCHEMA_VERSION,
            t_mono,
            t_utc,
            direction,
            topic: topic.into(),
            payload,
        }
    }

    pub fn from_sample(sample: &TopicSample, t_utc: f64, direction: Direction) -> Self {
        Self::new(sample.stamp, t_utc, direction, sample.topic.as_str(), sample.payload.to_json())
    }

    pub fn topic_name(&self) -> Option<TopicName> {
        self.topic.parse().ok()
    }

    /// Decoded payload for topic records.
    pub fn topic_payload(&self) -> Option<TopicPayload> {
        TopicPayload::from_json(self.topic_name()?, self.payload.clone()).ok()
    }
}

/// Wall-clock seconds since the Unix epoch.
pub fn utc_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Record sink. IO failures disable the sink instead of failing the run.
pub struct LogWriter<W: Write> {
    out: W,
    last_t: Option<f64>,
    last_flush: Instant,
    written: u64,
    warnings: u64,
    disabled: bool,
}

impl LogWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, LogError> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            last_t: None,
            last_flush: Instant::now(),
            written: 0,
            warnings: 0,
            disabled: false,
        }
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn warnings(&self) -> u64 {
        self.warnings
    }

    pub fn is_disabled(&self) -> bool {
        self.disabled
    }

    fn fail(&mut self, e: io::Error) {
        self.disabled = true;
        self.warnings += 1;
        log::warn!("logging disabled after write failure: {e}");
    }

    /// Appends one line. Returns `Ok(false)` when the sink is disabled.
    pub fn record(&mut self, rec: &LogRecord) -> Result<bool, LogError> {
        if let Some(prev) = self.last_t {
            if rec.t_mono < prev {
                return Err(LogError::Ordering { prev, got: rec.t_mono });
            }
        }
        self.last_t = Some(rec.t_mono);
        if self.disabled {
            return Ok(false);
        }
        let mut line = serde_json::to_string(rec).expect("log records serialize");
        line.push('\n');
        if let Err(e) = self.out.write_all(line.as_bytes()) {
            self.fail(e);
            return Ok(false);
        }
        self.written += 1;
        if self.last_flush.elapsed() >= FLUSH_EVERY {
            self.flush();
        }
        Ok(true)
    }

    pub fn flush(&mut self) {
        self.last_flush = Instant::now();
        if self.disabled {
            return;
        }
        if let Err(e) = self.out.flush() {
            self.fail(e);
        }
    }

    pub fn into_inner(mut self) -> W {
        self.flush();
        self.out
    }
}

fn parse_line(line: &str) -> Option<LogRecord> {
    let rec: LogRecord = serde_json::from_str(line).ok()?;
    (rec.v == SCHEMA_VERSION && rec.t_mono.is_finite()).then_some(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReplaySummary {
    pub delivered: u64,
    pub corrupt: u64,
    pub wall_time: f64,
}

/// Delivers records in file order. With `speed_factor > 0` the gaps between
/// `t_mono` stamps are reproduced scaled by `1 / speed_factor`; `0` replays
/// as fast as possible. Corrupt and blank lines are skipped and counted.
pub fn replay<R: BufRead>(
    source: R,
    speed_factor: f64,
    mut consumer: impl FnMut(&LogRecord),
) -> Result<ReplaySummary, LogError> {
    if !(speed_factor.is_finite() && speed_factor >= 0.0) {
        return Err(LogError::Usage(format!("speed factor must be >= 0, got {speed_factor}")));
    }
    let start = Instant::now();
    let mut t0 = None;
    let mut summary = ReplaySummary::default();
    for line in source.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(rec) = parse_line(&line) else {
            summary.corrupt += 1;
            log::warn!("skipping corrupt log line");
            continue;
        };
        if speed_factor > 0.0 {
            let first = *t0.get_or_insert(rec.t_mono);
            let due = ((rec.t_mono - first) / speed_factor).max(0.0);
            let elapsed = start.elapsed().as_secs_f64();
            if due > elapsed {
                std::thread::sleep(Duration::from_secs_f64(due - elapsed));
            }
        }
        consumer(&rec);
        summary.delivered += 1;
    }
    summary.wall_time = start.elapsed().as_secs_f64();
    Ok(summary)
}

pub fn replay_file(path: &Path, speed_factor: f64, consumer: impl FnMut(&LogRecord)) -> Result<ReplaySummary, LogError> {
    replay(BufReader::new(File::open(path)?), speed_factor, consumer)
}

/// Reads every valid record, returning them with the corrupt-line count.
pub fn read_records<R: BufRead>(source: R) -> Result<(Vec<LogRecord>, u64), LogError> {
    let mut out = Vec::new();
    let s = replay(source, 0.0, |r| out.push(r.clone()))?;
    Ok((out, s.corrupt))
}

fn csv_cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(v) => v.to_string(),
    }
}

/// Writes one row per record of `topic`: the `t` column (`t_mono`) followed
/// by the topic's fields. Returns the row count.
pub fn export_csv<R: BufRead, W: Write>(source: R, topic: &str, out: W) -> Result<u64, LogError> {
    let name: TopicName = topic
        .parse()
        .map_err(|_| LogError::Usage(format!("unknown topic {topic:?}")))?;
    let fields = name.fields();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t"];
    header.extend_from_slice(fields);
    w.write_record(&header)?;
    let mut rows = 0;
    let mut err = None;
    replay(source, 0.0, |rec| {
        if err.is_some() || rec.topic != name.as_str() {
            return;
        }
        let mut row = vec![rec.t_mono.to_string()];
        row.extend(fields.iter().map(|f| csv_cell(rec.payload.get(*f))));
        match w.write_record(&row) {
            Ok(()) => rows += 1,
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e.into());
    }
    w.flush()?;
    Ok(rows)
}
