//! Mission metrics computed from the record stream, so a replayed log yields
//! the same numbers as the live run.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::client::{TopicName, TopicPayload};
use crate::logbag::{Direction, LogRecord};
use crate::nmpc::{Path, PathSpec, ProgressTracker};
use crate::sim::latlon_to_local;

pub const META_TOPIC: &str = "meta";
pub const EVENT_TOPIC: &str = "event";
pub const SOLVE_TOPIC: &str = "nmpc";

/// First record of every mission log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionMeta {
    pub controller: String,
    pub seed: u64,
    pub path: PathSpec,
    pub origin: (f64, f64),
    /// Laps counted as mission completion on closed paths.
    pub laps: f64,
}

impl MissionMeta {
    pub fn record(&self, t_mono: f64, t_utc: f64) -> LogRecord {
        LogRecord::new(
            t_mono,
            t_utc,
            Direction::Tx,
            META_TOPIC,
            serde_json::to_value(self).expect("meta serializes"),
        )
    }
}

pub fn event_record(t_mono: f64, t_utc: f64, payload: serde_json::Value) -> LogRecord {
    LogRecord::new(t_mono, t_utc, Direction::Tx, EVENT_TOPIC, payload)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionMetrics {
    pub controller: String,
    pub samples: u64,
    pub rms_cross_track: f64,
    pub max_cross_track: f64,
    pub laps: f64,
    pub completed: bool,
    /// From the first fix to completion, s.
    pub completion_time: Option<f64>,
    pub dropout_events: u64,
    pub solver_failures: u64,
    pub commands_sent: u64,
}

impl MissionMetrics {
    pub const CSV_HEADER: [&'static str; 10] = [
        "controller",
        "samples",
        "rms_cross_track",
        "max_cross_track",
        "laps",
        "completed",
        "completion_time",
        "dropout_events",
        "solver_failures",
        "commands_sent",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.controller.clone(),
            self.samples.to_string(),
            format!("{:?}", self.rms_cross_track),
            format!("{:?}", self.max_cross_track),
            format!("{:?}", self.laps),
            self.completed.to_string(),
            self.completion_time.map(|t| format!("{t:?}")).unwrap_or_default(),
            self.dropout_events.to_string(),
            self.solver_failures.to_string(),
            self.commands_sent.to_string(),
        ]
    }
}

/// Writes a header plus one row per mission.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[MissionMetrics]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MissionMetrics::CSV_HEADER)?;
    for m in rows {
        w.write_record(m.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming accumulator over [`LogRecord`]s.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    meta: Option<MissionMeta>,
    path: Option<Path>,
    tracker: ProgressTracker,
    start: Option<f64>,
    sum_sq: f64,
    max_abs: f64,
    samples: u64,
    completion: Option<f64>,
    dropouts: u64,
    failures: u64,
    commands: u64,
    solve_times: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn consume(&mut self, rec: &LogRecord) {
        match rec.topic.as_str() {
            META_TOPIC => {
                if let Ok(meta) = serde_json::from_value::<MissionMeta>(rec.payload.clone()) {
                    self.path = meta.path.build().ok();
                    self.meta = Some(meta);
                }
            }
            EVENT_TOPIC => match rec.payload.get("event").and_then(|e| e.as_str()) {
                Some("dropout") => self.dropouts += 1,
                Some("solver_failure") => self.failures += 1,
                _ => {}
            },
            SOLVE_TOPIC => {
                if let Some(t) = rec.payload.get("solve_time").and_then(|v| v.as_f64()) {
                    self.solve_times.push(t);
                }
            }
            _ => match (rec.direction, rec.topic_name()) {
                (Direction::Rx, Some(TopicName::OtterGps)) => self.on_fix(rec),
                (Direction::Tx, Some(t)) if t.is_command() => self.commands += 1,
                _ => {}
            },
        }
    }

    fn on_fix(&mut self, rec: &LogRecord) {
        let (Some(meta), Some(path)) = (&self.meta, &self.path) else {
            return;
        };
        if self.completion.is_some() {
            return;
        }
        let Some(TopicPayload::Gps(fix)) = rec.topic_payload() else {
            return;
        };
        let pos = latlon_to_local(fix.lat, fix.lon, meta.origin);
        let pr = self.tracker.update(path, pos);
        let start = *self.start.get_or_insert(rec.t_mono);
        let e = pr.cross_track;
        self.samples += 1;
        self.sum_sq += e * e;
        self.max_abs = self.max_abs.max(e.abs());
        let done = if path.is_closed() {
            self.tracker.laps(path) >= meta.laps
        } else {
            (pos.0 - path.end().0).hypot(pos.1 - path.end().1) <= 2.0
        };
        if done {
            self.completion = Some(rec.t_mono - start);
        }
    }

    pub fn completed(&self) -> bool {
        self.completion.is_some()
    }

    /// Wall-clock solve times seen in `nmpc` records, s.
    pub fn solve_times(&self) -> &[f64] {
        &self.solve_times
    }

    pub fn finish(&self) -> MissionMetrics {
        let laps = self.path.as_ref().map_or(0.0, |p| self.tracker.laps(p));
        MissionMetrics {
            controller: self.meta.as_ref().map_or_else(String::new, |m| m.controller.clone()),
            samples: self.samples,
            rms_cross_track: if self.samples > 0 { (self.sum_sq / self.samples as f64).sqrt() } else { 0.0 },
            max_cross_track: self.max_abs,
            laps,
            completed: self.completion.is_some(),
            completion_time: self.completion,
            dropout_events: self.dropouts,
            solver_failures: self.failures,
            commands_sent: self.commands,
        }
    }
}

/// Mean and 99th percentile (nearest rank) of a set of timings.
pub fn timing_summary(times: &[f64]) -> Option<(f64, f64)> {
    if times.is_empty() {
        return None;
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some((mean, sorted[rank - 1]))
}

pub fn solve_record(t_mono: f64, t_utc: f64, stats: &crate::nmpc::SolveStats) -> LogRecord {
    LogRecord::new(
        t_mono,
        t_utc,
        Direction::Tx,
        SOLVE_TOPIC,
        json!({
            "cost": stats.cost,
            "iters": stats.iters,
            "solve_time": stats.solve_time,
            "converged": stats.converged,
        }),
    )
}
