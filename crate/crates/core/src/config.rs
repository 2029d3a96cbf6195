//! TOML run configuration. Unknown keys are rejected; every key has a
//! default (see `config/default.toml`).

use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nmpc::{LosConfig, NmpcConfig, PathSpec};
use crate::sim::{EnvDisturbance, VesselParams};
use crate::transport::{Endpoint, FaultProfile, RateConfig, CMD_ADDR_ENV, TELEM_ADDR_ENV};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSection {
    pub telemetry_addr: String,
    pub command_addr: String,
    pub rate_hz: f64,
    /// Telemetry faults, realized with the top-level seed.
    pub loss_prob: f64,
    pub latency: f64,
    /// `[start, duration]` pairs, s since the link opened.
    pub dropout_windows: Vec<(f64, f64)>,
}

impl Default for TransportSection {
    fn default() -> Self {
        Self {
            telemetry_addr: "127.0.0.1:10010".into(),
            command_addr: "127.0.0.1:10011".into(),
            rate_hz: 10.0,
            loss_prob: 0.0,
            latency: 0.0,
            dropout_windows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VesselSection {
    pub m11: f64,
    pub m22: f64,
    pub m33: f64,
    pub d1v: f64,
    pub d1r: f64,
    pub f_max: f64,
    pub lever: f64,
    pub v_max: f64,
    pub startup_delay: f64,
    pub motor_tau: f64,
    pub rpm_max: f64,
    /// Constant water current, m/s.
    pub current_north: f64,
    pub current_east: f64,
}

impl Default for VesselSection {
    fn default() -> Self {
        Self::from_params(VesselParams::default(), EnvDisturbance::calm())
    }
}

impl VesselSection {
    pub fn from_params(p: VesselParams, env: EnvDisturbance) -> Self {
        Self {
            m11: p.m11,
            m22: p.m22,
            m33: p.m33,
            d1v: p.d1v,
            d1r: p.d1r,
            f_max: p.f_max,
            lever: p.lever,
            v_max: p.v_max,
            startup_delay: p.startup_delay,
            motor_tau: p.motor_tau,
            rpm_max: p.rpm_max,
            current_north: env.current_north,
            current_east: env.current_east,
        }
    }

    pub fn params(&self) -> VesselParams {
        VesselParams {
            m11: self.m11,
            m22: self.m22,
            m33: self.m33,
            d1v: self.d1v,
            d1r: self.d1r,
            f_max: self.f_max,
            lever: self.lever,
            v_max: self.v_max,
            startup_delay: self.startup_delay,
            motor_tau: self.motor_tau,
            rpm_max: self.rpm_max,
        }
    }

    pub fn env(&self) -> EnvDisturbance {
        EnvDisturbance {
            current_north: self.current_north,
            current_east: self.current_east,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    /// Lemniscate amplitude, m.
    pub amplitude: f64,
    pub center: (f64, f64),
    /// Mission speed for both controllers, m/s.
    pub speed: f64,
    pub laps: f64,
    /// Geodetic origin of the local frame, degrees.
    pub origin: (f64, f64),
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            amplitude: 20.0,
            center: (0.0, 0.0),
            speed: 1.0,
            laps: 1.0,
            origin: (44.2253, -76.4951),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Mission timeout for `run` and `bench-fig8`; run time for `sim`
    /// (0 runs until interrupted), s.
    pub duration: f64,
    pub transport: TransportSection,
    pub vessel: VesselSection,
    pub nmpc: NmpcConfig,
    pub los: LosConfig,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            duration: 200.0,
            transport: TransportSection::default(),
            vessel: VesselSection::default(),
            nmpc: NmpcConfig::default(),
            los: LosConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(ConfigError::Invalid(format!("duration must be >= 0, got {}", self.duration)));
        }
        self.rate().map_err(|e| bad(&e))?;
        self.telemetry_faults().validate().map_err(|e| bad(&e))?;
        self.vessel.params().validate().map_err(|e| bad(&e))?;
        self.nmpc_config().validate().map_err(|e| bad(&e))?;
        self.los_config().validate().map_err(|e| bad(&e))?;
        if !(self.bench.laps.is_finite() && self.bench.laps > 0.0) {
            return Err(ConfigError::Invalid(format!("bench.laps must be > 0, got {}", self.bench.laps)));
        }
        if !(self.bench.speed.is_finite() && self.bench.speed > 0.0) {
            return Err(ConfigError::Invalid(format!("bench.speed must be > 0, got {}", self.bench.speed)));
        }
        self.figure_eight().build().map_err(|e| bad(&e))?;
        Ok(())
    }

    pub fn rate(&self) -> Result<RateConfig, crate::transport::TransportError> {
        RateConfig::new(self.transport.rate_hz)
    }

    pub fn telemetry_faults(&self) -> FaultProfile {
        FaultProfile {
            dropout_windows: self.transport.dropout_windows.clone(),
            loss_prob: self.transport.loss_prob,
            latency: self.transport.latency,
            seed: self.seed,
        }
    }

    /// `[nmpc]` with the `[vessel]` model; `time_budget = 0` disables the
    /// wall-clock cap.
    pub fn nmpc_config(&self) -> NmpcConfig {
        NmpcConfig {
            model: self.vessel.params(),
            time_budget: self.nmpc.time_budget.filter(|b| *b > 0.0),
            ..self.nmpc
        }
    }

    pub fn los_config(&self) -> LosConfig {
        self.los
    }

    pub fn figure_eight(&self) -> PathSpec {
        PathSpec::FigureEight {
            amplitude: self.bench.amplitude,
            center: self.bench.center,
        }
    }

    /// Endpoints from the config, overridden by the environment.
    pub fn endpoints(&self) -> Result<(Endpoint, Endpoint), ConfigError> {
        let pick = |env: &str, fallback: &str| {
            let s = std::env::var(env).unwrap_or_else(|_| fallback.to_string());
            Endpoint::parse(&s).map_err(|e| ConfigError::Invalid(format!("{env}/{s}: {e}")))
        };
        Ok((
            pick(TELEM_ADDR_ENV, &self.transport.telemetry_addr)?,
            pick(CMD_ADDR_ENV, &self.transport.command_addr)?,
        ))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Reads `north,east` waypoints, one pair per line. Blank lines and lines
/// starting with `#` are ignored.
pub fn load_waypoints(path: &FsPath, closed: bool) -> Result<PathSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Option<Vec<f64>> = line.split(',').map(|f| f.trim().parse().ok()).collect();
        match parsed.as_deref() {
            Some(&[n, e]) => points.push((n, e)),
            _ => return Err(ConfigError::Invalid(format!("waypoint line {}: {line:?}", i + 1))),
        }
    }
    let spec = PathSpec::Waypoints { points, closed };
    spec.build().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(spec)
}
