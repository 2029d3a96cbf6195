//! Periodic controllers: NMPC on `control_cmds` and the LOS baseline on
//! `course_speed_cmds`.

use serde::{Deserialize, Serialize};

use crate::client::{SyncedSample, TopicPayload};
use crate::nmea::{CourseSpeedCommand, ManualCommand};
use crate::sim::{latlon_to_local, wrap_2pi, VesselState};

use super::cost::Problem;
use super::los::{LosConfig, LosGuidance, LosOutput};
use super::path::{Path, ProgressTracker};
use super::solver::{solve_nmpc, ControlSolution, NmpcConfig};
use super::NmpcError;

/// Controller period, s.
pub const CONTROL_PERIOD: f64 = 0.1;
/// Longest tolerated gap in synchronized telemetry, s.
pub const STALE_AFTER: f64 = 1.0;
/// Consecutive solver failures after which zero input is commanded.
pub const FAILSAFE_AFTER: u32 = 3;
/// Arc length searched behind the vessel and beyond the horizon reach, m.
const WINDOW_MARGIN: f64 = 3.0;

/// Vessel state reconstructed from one synchronized sample.
pub fn estimate_state(sample: &SyncedSample, origin: (f64, f64)) -> Option<VesselState> {
    let gps = sample.gps?;
    let imu = sample.imu?;
    let cs = sample.cogsog?;
    let (north, east) = latlon_to_local(gps.lat, gps.lon, origin);
    let psi = wrap_2pi(imu.yaw.to_radians());
    let (sp, cp) = psi.sin_cos();
    Some(VesselState {
        north,
        east,
        psi,
        u: cs.vel_north * cp + cs.vel_east * sp,
        v: -cs.vel_north * sp + cs.vel_east * cp,
        r: imu.r.to_radians(),
        origin_lat: origin.0,
        origin_lon: origin.1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ControllerEvent {
    Dropout { since: f64 },
    Resume { gap: f64 },
    SolverFailure { consecutive: u32, error: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub cost: f64,
    pub iters: usize,
    pub solve_time: f64,
    pub converged: bool,
}

impl From<&ControlSolution> for SolveStats {
    fn from(s: &ControlSolution) -> Self {
        Self {
            cost: s.cost,
            iters: s.iters,
            solve_time: s.solve_time,
            converged: s.converged,
        }
    }
}

/// Result of one controller tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickOutput {
    /// Command to publish: a control or course/speed payload.
    pub command: Option<TopicPayload>,
    pub events: Vec<ControllerEvent>,
    pub solve: Option<SolveStats>,
}

/// Staleness bookkeeping shared by both controllers.
#[derive(Debug, Clone, Default)]
struct Freshness {
    latest: Option<(f64, VesselState)>,
    paused: bool,
}

impl Freshness {
    /// The state to act on, or `None` while paused or before the first
    /// sample. Emits dropout and resume transitions.
    fn check(&mut self, now: f64, events: &mut Vec<ControllerEvent>) -> Option<Option<VesselState>> {
        let (stamp, state) = self.latest?;
        let age = now - stamp;
        if age > STALE_AFTER {
            if !self.paused {
                self.paused = true;
                events.push(ControllerEvent::Dropout { since: stamp });
            }
            return Some(None);
        }
        Some(Some(state))
    }

    fn push(&mut self, stamp: f64, state: VesselState, events: &mut Vec<ControllerEvent>) {
        if self.paused {
            self.paused = false;
            let gap = self.latest.map_or(0.0, |(t, _)| stamp - t);
            events.push(ControllerEvent::Resume { gap });
        }
        self.latest = Some((stamp, state));
    }
}

pub struct NmpcController {
    cfg: NmpcConfig,
    path: Path,
    origin: (f64, f64),
    tracker: ProgressTracker,
    fresh: Freshness,
    pending: Vec<ControllerEvent>,
    warm: Option<ControlSolution>,
    applied: (f64, f64),
    failures: u32,
}

impl NmpcController {
    pub fn new(cfg: NmpcConfig, path: Path, origin: (f64, f64)) -> Result<Self, NmpcError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            path,
            origin,
            tracker: ProgressTracker::new(),
            fresh: Freshness::default(),
            pending: Vec::new(),
            warm: None,
            applied: (0.0, 0.0),
            failures: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_paused(&self) -> bool {
        self.fresh.paused
    }

    pub fn applied(&self) -> (f64, f64) {
        self.applied
    }

    pub fn on_sample(&mut self, sample: &SyncedSample) {
        if let Some(state) = estimate_state(sample, self.origin) {
            self.fresh.push(sample.stamp, state, &mut self.pending);
        }
    }

    /// One 10 Hz tick. `solve` replaces the solver, which lets tests inject
    /// failures.
    pub fn step_with<F>(&mut self, now: f64, solve: F) -> TickOutput
    where
        F: FnOnce(&Problem<'_>, &NmpcConfig, Option<&ControlSolution>) -> Result<ControlSolution, NmpcError>,
    {
        let mut out = TickOutput {
            events: std::mem::take(&mut self.pending),
            ..TickOutput::default()
        };
        let state = match self.fresh.check(now, &mut out.events) {
            None => return out,
            Some(None) => {
                self.warm = None;
                self.applied = (0.0, 0.0);
                out.command = Some(manual(self.applied));
                return out;
            }
            Some(Some(s)) => s,
        };
        let pr = self.tracker.update(&self.path, (state.north, state.east));
        // Path span the horizon can reach, with margin.
        let reach = 1.5 * state.u.abs().max(self.cfg.ref_speed) * self.cfg.horizon_t + WINDOW_MARGIN;
        let problem = Problem {
            state,
            path: &self.path,
            window: Some((pr.s - WINDOW_MARGIN, pr.s + reach)),
            prev_input: self.applied,
        };
        match solve(&problem, &self.cfg, self.warm.as_ref()) {
            Ok(sol) => {
                self.failures = 0;
                self.applied = sol.first_input();
                out.solve = Some(SolveStats::from(&sol));
                self.warm = Some(sol);
            }
            Err(e) => {
                self.failures += 1;
                out.events.push(ControllerEvent::SolverFailure {
                    consecutive: self.failures,
                    error: e.to_string(),
                });
                if self.failures >= FAILSAFE_AFTER {
                    self.applied = (0.0, 0.0);
                    self.warm = None;
                }
            }
        }
        out.command = Some(manual(self.applied));
        out
    }

    pub fn step(&mut self, now: f64) -> TickOutput {
        self.step_with(now, solve_nmpc)
    }
}

fn manual((x, z): (f64, f64)) -> TopicPayload {
    TopicPayload::Control(ManualCommand { x, y: 0.0, z })
}

/// LOS guidance on the built-in course/speed mode. During a telemetry gap
/// the last command is left standing, as the OBC keeps steering on its own.
pub struct BaselineController {
    guidance: LosGuidance,
    path: Path,
    origin: (f64, f64),
    fresh: Freshness,
    pending: Vec<ControllerEvent>,
    last: Option<LosOutput>,
}

impl BaselineController {
    pub fn new(los: LosConfig, path: Path, origin: (f64, f64)) -> Result<Self, NmpcError> {
        Ok(Self {
            guidance: LosGuidance::new(los)?,
            path,
            origin,
            fresh: Freshness::default(),
            pending: Vec::new(),
            last: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn on_sample(&mut self, sample: &SyncedSample) {
        if let Some(state) = estimate_state(sample, self.origin) {
            self.fresh.push(sample.stamp, state, &mut self.pending);
        }
    }

    pub fn step(&mut self, now: f64) -> TickOutput {
        let mut out = TickOutput {
            events: std::mem::take(&mut self.pending),
            ..TickOutput::default()
        };
        let Some(Some(state)) = self.fresh.check(now, &mut out.events) else {
            return out;
        };
        let g = self.guidance.update((state.north, state.east), &self.path);
        self.last = Some(g);
        out.command = Some(TopicPayload::CourseSpeed(CourseSpeedCommand {
            course: g.course,
            speed: g.speed,
        }));
        out
    }
}

/// Either controller behind one interface.
pub enum Controller {
    Nmpc(Box<NmpcController>),
    Baseline(Box<BaselineController>),
}

impl Controller {
    pub fn on_sample(&mut self, sample: &SyncedSample) {
        match self {
            Controller::Nmpc(c) => c.on_sample(sample),
            Controller::Baseline(c) => c.on_sample(sample),
        }
    }

    pub fn step(&mut self, now: f64) -> TickOutput {
        match self {
            Controller::Nmpc(c) => c.step(now),
            Controller::Baseline(c) => c.step(now),
        }
    }
}
