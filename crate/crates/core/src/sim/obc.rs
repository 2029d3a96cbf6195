use serde::{Deserialize, Serialize};

use crate::nmea::{
    AttReport, ManualCommand, ModeTag, OtterMessage, PosReport, StatusReport, TimeReport,
};
use crate::transport::RateConfig;

use super::autopilot::{
    builtin_course_speed, builtin_station_keep, CourseSpeedGains, PiState, StationKeepGains,
};
use super::{
    apply_motor_lag, local_to_latlon, mix, step_dynamics, EnvDisturbance, Forces, MotorState,
    SimError, VesselParams, VesselState, SIM_DT,
};

const IDLE_POWER_W: f64 = 15.0;
const MOTOR_POWER_W: f64 = 350.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObcConfig {
    pub params: VesselParams,
    pub course_speed: CourseSpeedGains,
    pub station_keep: StationKeepGains,
    pub telemetry_hz: f64,
    /// Local frame origin `(lat, lon)`, degrees.
    pub origin: (f64, f64),
    /// Initial `(north, east)`, m.
    pub start_position: (f64, f64),
    /// Initial heading, degrees.
    pub start_heading_deg: f64,
    pub utc_date: u32,
    /// Seconds of day at simulation time zero.
    pub utc_start: f64,
    pub env: EnvDisturbance,
    pub battery_wh: f64,
}

impl Default for ObcConfig {
    fn default() -> Self {
        Self {
            params: VesselParams::default(),
            course_speed: CourseSpeedGains::default(),
            station_keep: StationKeepGains::default(),
            telemetry_hz: 10.0,
            origin: (44.2253, -76.4951),
            start_position: (0.0, 0.0),
            start_heading_deg: 0.0,
            utc_date: 20230815,
            utc_start: 50_400.0,
            env: EnvDisturbance::calm(),
            battery_wh: 1_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObcMode {
    Drift,
    Manual(ManualCommand),
    StationKeep { lat: f64, lon: f64, speed_cap: f64 },
    CourseSpeed { course: f64, speed: f64 },
}

impl ObcMode {
    pub fn tag(&self) -> ModeTag {
        match self {
            ObcMode::Drift => ModeTag::Drift,
            ObcMode::Manual(_) => ModeTag::Manual,
            ObcMode::StationKeep { .. } => ModeTag::StationKeep,
            ObcMode::CourseSpeed { .. } => ModeTag::CourseSpeed,
        }
    }
}

/// Simulated onboard computer. Single owner; commands are applied between
/// ticks.
#[derive(Debug, Clone)]
pub struct Obc {
    cfg: ObcConfig,
    rate: RateConfig,
    state: VesselState,
    motors: [MotorState; 2],
    mode: ObcMode,
    pi: PiState,
    steps: u64,
    next_telemetry: u64,
    next_status: u64,
    battery: f64,
    power: f64,
    fault: Option<SimError>,
}

impl Obc {
    pub fn new(cfg: ObcConfig) -> Result<Self, SimError> {
        cfg.params.validate()?;
        let rate = RateConfig::new(cfg.telemetry_hz).map_err(|e| SimError::Config(e.to_string()))?;
        let state = VesselState::at_rest(
            cfg.start_position.0,
            cfg.start_position.1,
            cfg.start_heading_deg.to_radians(),
            cfg.origin,
        );
        Ok(Self {
            rate,
            state,
            motors: [MotorState::default(); 2],
            mode: ObcMode::Drift,
            pi: PiState::default(),
            steps: 0,
            next_telemetry: 0,
            next_status: 0,
            battery: 100.0,
            power: IDLE_POWER_W,
            fault: None,
            cfg,
        })
    }

    pub fn config(&self) -> &ObcConfig {
        &self.cfg
    }

    pub fn state(&self) -> &VesselState {
        &self.state
    }

    pub fn motors(&self) -> &[MotorState; 2] {
        &self.motors
    }

    pub fn mode(&self) -> ObcMode {
        self.mode
    }

    pub fn battery(&self) -> f64 {
        self.battery
    }

    /// Simulated seconds since start.
    pub fn time(&self) -> f64 {
        self.steps as f64 * SIM_DT
    }

    pub fn set_env(&mut self, env: EnvDisturbance) {
        self.cfg.env = env;
    }

    /// Overrides the vessel state, keeping the origin.
    pub fn set_state(&mut self, state: VesselState) {
        self.state = VesselState {
            origin_lat: self.cfg.origin.0,
            origin_lon: self.cfg.origin.1,
            ..state
        };
    }

    pub fn handle_line(&mut self, line: &str) -> Result<(), SimError> {
        let msg = OtterMessage::decode(line)?;
        self.handle_command(&msg)
    }

    pub fn handle_command(&mut self, msg: &OtterMessage) -> Result<(), SimError> {
        msg.validate()?;
        let next = match *msg {
            OtterMessage::Drift(d) if d.on => ObcMode::Drift,
            OtterMessage::Drift(_) => match self.mode {
                // Leaving drift idles the motors under manual control.
                ObcMode::Drift => ObcMode::Manual(ManualCommand::default()),
                other => other,
            },
            OtterMessage::Manual(m) => ObcMode::Manual(ManualCommand { y: 0.0, ..m }),
            OtterMessage::StationKeep(sk) => ObcMode::StationKeep {
                lat: sk.lat,
                lon: sk.lon,
                speed_cap: sk.speed.min(self.cfg.params.v_max),
            },
            OtterMessage::CourseSpeed(cs) => ObcMode::CourseSpeed {
                course: cs.course,
                speed: cs.speed.min(self.cfg.params.v_max),
            },
            _ => {
                return Err(SimError::Command(format!(
                    "{} is telemetry, not a command",
                    msg.sentence_id()
                )))
            }
        };
        if next.tag() != self.mode.tag() {
            self.pi = PiState::default();
        }
        self.mode = next;
        Ok(())
    }

    /// Advances the simulation to `now` in fixed 20 ms steps and returns the
    /// telemetry lines that fell due on the way.
    pub fn tick(&mut self, now: f64) -> Result<Vec<String>, SimError> {
        let msgs = self.tick_messages(now)?;
        msgs.iter()
            .map(|m| m.encode().map_err(SimError::from))
            .collect()
    }

    pub fn tick_messages(&mut self, now: f64) -> Result<Vec<OtterMessage>, SimError> {
        if let Some(fault) = &self.fault {
            return Err(fault.clone());
        }
        let mut out = Vec::new();
        while (self.steps + 1) as f64 * SIM_DT <= now + 1e-9 {
            self.emit_due(&mut out);
            if let Err(e) = self.step_once() {
                self.fault = Some(e.clone());
                return Err(e);
            }
        }
        Ok(out)
    }

    fn emit_due(&mut self, out: &mut Vec<OtterMessage>) {
        let t = self.time();
        while t + 1e-9 >= self.next_telemetry as f64 * self.rate.interval() {
            out.push(OtterMessage::Pos(self.pos_report(t)));
            out.push(OtterMessage::Att(self.att_report(t)));
            self.next_telemetry += 1;
        }
        while t + 1e-9 >= self.next_status as f64 {
            out.push(OtterMessage::Status(self.status_report()));
            out.push(OtterMessage::Time(TimeReport {
                utc_date: self.cfg.utc_date,
                utc_time: self.utc(t),
            }));
            self.next_status += 1;
        }
    }

    fn utc(&self, t: f64) -> f64 {
        (self.cfg.utc_start + t).rem_euclid(86_400.0)
    }

    fn pos_report(&self, t: f64) -> PosReport {
        let s = &self.state;
        let (lat, lon) = local_to_latlon(s.north, s.east, self.cfg.origin);
        let (vn, ve) = s.ground_velocity(&self.cfg.env);
        let sog = vn.hypot(ve);
        let cog = if sog < 1e-9 {
            s.psi.to_degrees()
        } else {
            ve.atan2(vn).to_degrees().rem_euclid(360.0)
        };
        PosReport {
            utc: self.utc(t),
            lat,
            lon,
            alt: 0.0,
            sog,
            cog: if cog >= 360.0 { 0.0 } else { cog },
        }
    }

    fn att_report(&self, t: f64) -> AttReport {
        let yaw = self.state.psi.to_degrees();
        AttReport {
            utc: self.utc(t),
            roll: 0.0,
            pitch: 0.0,
            yaw: if yaw >= 360.0 { 0.0 } else { yaw },
            p: 0.0,
            q: 0.0,
            r: self.state.r.to_degrees(),
        }
    }

    fn status_report(&self) -> StatusReport {
        StatusReport {
            mode: self.mode.tag(),
            rpm_port: self.motors[0].reported_rpm(),
            rpm_stbd: self.motors[1].reported_rpm(),
            temp: 20.0 + self.power / 100.0,
            battery: self.battery,
            power: self.power,
        }
    }

    fn mode_output(&mut self) -> (f64, f64) {
        let cfg = &self.cfg;
        match self.mode {
            ObcMode::Drift => (0.0, 0.0),
            ObcMode::Manual(m) => (m.x, m.z),
            ObcMode::CourseSpeed { course, speed } => builtin_course_speed(
                &self.state,
                course,
                speed,
                &cfg.course_speed,
                &mut self.pi,
                SIM_DT,
            ),
            ObcMode::StationKeep { lat, lon, speed_cap } => builtin_station_keep(
                &self.state,
                (lat, lon),
                speed_cap,
                &cfg.station_keep,
                &cfg.course_speed,
                &mut self.pi,
                SIM_DT,
            ),
        }
    }

    fn step_once(&mut self) -> Result<(), SimError> {
        let (x, z) = self.mode_output();
        let (port, stbd) = mix(x, z);
        let p = self.cfg.params;
        self.motors[0] = apply_motor_lag(self.motors[0], port, SIM_DT, &p);
        self.motors[1] = apply_motor_lag(self.motors[1], stbd, SIM_DT, &p);
        let forces = Forces {
            port: p.f_max * self.motors[0].actual_norm,
            stbd: p.f_max * self.motors[1].actual_norm,
        };
        self.state = step_dynamics(&self.state, forces, &self.cfg.env, &p, SIM_DT)?;
        self.power = IDLE_POWER_W
            + MOTOR_POWER_W * self.motors.iter().map(|m| m.actual_norm.abs().powi(3)).sum::<f64>();
        let used_pct = self.power * SIM_DT / 3600.0 / self.cfg.battery_wh * 100.0;
        self.battery = (self.battery - used_pct).max(0.0);
        self.steps += 1;
        Ok(())
    }
}
