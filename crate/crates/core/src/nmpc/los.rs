//! Line-of-sight guidance feeding the built-in course/speed autopilot.

use serde::{Deserialize, Serialize};

use crate::sim::bearing_deg;

use super::path::{Path, ProgressTracker};
use super::NmpcError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LosConfig {
    pub lookahead: f64,
    pub accept_radius: f64,
    pub speed: f64,
}

impl Default for LosConfig {
    fn default() -> Self {
        Self {
            lookahead: 5.0,
            accept_radius: 2.0,
            speed: 1.0,
        }
    }
}

impl LosConfig {
    pub fn validate(&self) -> Result<(), NmpcError> {
        if !(self.lookahead.is_finite() && self.lookahead > 0.0) {
            return Err(NmpcError::Config(format!("lookahead must be > 0, got {}", self.lookahead)));
        }
        if !(self.accept_radius.is_finite() && self.accept_radius > 0.0) {
            return Err(NmpcError::Config(format!(
                "accept_radius must be > 0, got {}",
                self.accept_radius
            )));
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(NmpcError::Config(format!("speed must be >= 0, got {}", self.speed)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosOutput {
    /// Degrees in [0, 360).
    pub course: f64,
    pub speed: f64,
    /// Index of the next waypoint to reach.
    pub waypoint: usize,
    /// Final waypoint of an open path reached.
    pub finished: bool,
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn steer(pos: (f64, f64), path: &Path, s: f64, los: &LosConfig, waypoint: usize) -> LosOutput {
    let end = path.end();
    if !path.is_closed() && s + los.lookahead >= path.length() {
        let finished = dist(pos, end) <= los.accept_radius;
        return LosOutput {
            course: bearing_deg(pos, end),
            speed: if finished { 0.0 } else { los.speed },
            waypoint: path.points().len() - 1,
            finished,
        };
    }
    LosOutput {
        course: bearing_deg(pos, path.point_at(s + los.lookahead)),
        speed: los.speed,
        waypoint,
        finished: false,
    }
}

/// Stateless guidance from the globally nearest path point.
pub fn los_guidance(position: (f64, f64), path: &Path, los: &LosConfig) -> LosOutput {
    let pr = path.project(position);
    steer(position, path, pr.s, los, pr.segment + 1)
}

/// Guidance with progress tracking and waypoint bookkeeping.
#[derive(Debug, Clone)]
pub struct LosGuidance {
    cfg: LosConfig,
    tracker: ProgressTracker,
    waypoint: usize,
}

impl LosGuidance {
    pub fn new(cfg: LosConfig) -> Result<Self, NmpcError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracker: ProgressTracker::new(),
            waypoint: 1,
        })
    }

    pub fn config(&self) -> &LosConfig {
        &self.cfg
    }

    pub fn tracker(&self) -> &ProgressTracker {
        &self.tracker
    }

    pub fn update(&mut self, position: (f64, f64), path: &Path) -> LosOutput {
        let pr = self.tracker.update(path, position);
        let n = path.points().len();
        let next = (pr.segment + 1) % n;
        if path.is_closed() {
            self.waypoint = next;
        } else {
            self.waypoint = self.waypoint.max(next);
            while self.waypoint < n - 1 && dist(position, path.points()[self.waypoint]) <= self.cfg.accept_radius {
                self.waypoint += 1;
            }
        }
        steer(position, path, pr.s, &self.cfg, self.waypoint)
    }
}
