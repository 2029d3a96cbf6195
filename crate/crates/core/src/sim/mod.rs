//! Simulated Otter OBC.

pub mod autopilot;
mod dynamics;
mod geo;
mod motor;
mod obc;
mod params;

use thiserror::Error;

pub use autopilot::{
    bearing_deg, builtin_course_speed, builtin_station_keep, station_keep_setpoint, wrap_pi,
    CourseSpeedGains, PiState, StationKeepGains,
};
pub use dynamics::{
    allocate_thrust, derivatives, mix, rk4, sat, step_dynamics, wrap_2pi, EnvDisturbance, Forces,
    StateVec, VesselState,
};
pub use geo::{latlon_to_local, local_to_latlon, EARTH_RADIUS_M};
pub use motor::{apply_motor_lag, MotorState};
pub use obc::{Obc, ObcConfig, ObcMode};
pub use params::{VesselParams, SIM_DT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("command error: {0}")]
    Command(String),
    #[error("numeric fault: {0}")]
    NumericFault(String),
    #[error(transparent)]
    Codec(#[from] crate::nmea::CodecError),
}
