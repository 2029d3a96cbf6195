//! Built-in OBC controllers: cascaded PI speed / PD heading, and GNSS
//! station keeping layered on top of it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{latlon_to_local, VesselState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CourseSpeedGains {
    /// Torque per radian of heading error.
    pub kp_heading: f64,
    /// Torque per rad/s of yaw rate.
    pub kd_heading: f64,
    /// Surge per m/s of speed error.
    pub kp_speed: f64,
    /// Surge per m of integrated speed error.
    pub ki_speed: f64,
    /// Bound on the integral contribution to the surge output.
    pub integ_limit: f64,
}

impl Default for CourseSpeedGains {
    fn default() -> Self {
        Self {
            kp_heading: 1.5,
            kd_heading: 0.8,
            kp_speed: 0.5,
            ki_speed: 0.15,
            integ_limit: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationKeepGains {
    /// Inside this radius the OBC drifts, m.
    pub deadband: f64,
    /// Approach speed per metre of distance, 1/s.
    pub k_speed: f64,
}

impl Default for StationKeepGains {
    fn default() -> Self {
        Self {
            deadband: 2.0,
            k_speed: 0.2,
        }
    }
}

/// Speed-loop integrator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PiState {
    pub integral: f64,
}

/// Wraps an angle in radians to (-pi, pi].
pub fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Bearing from `from` to `to`, degrees in [0, 360).
pub fn bearing_deg(from: (f64, f64), to: (f64, f64)) -> f64 {
    let b = (to.1 - from.1).atan2(to.0 - from.0).to_degrees().rem_euclid(360.0);
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

pub fn builtin_course_speed(
    state: &VesselState,
    course_deg: f64,
    speed: f64,
    gains: &CourseSpeedGains,
    integ: &mut PiState,
    dt: f64,
) -> (f64, f64) {
    let heading_err = wrap_pi(course_deg.to_radians() - state.psi);
    let z = (gains.kp_heading * heading_err - gains.kd_heading * state.r).clamp(-1.0, 1.0);

    let speed_err = speed - state.u;
    let p_term = gains.kp_speed * speed_err;
    let i_term = gains.ki_speed * integ.integral;
    let raw = p_term + i_term;
    // Conditional integration: hold the integrator while the output is pinned
    // and the error would push it further into saturation.
    let pinned = (raw >= 1.0 && speed_err > 0.0) || (raw <= -1.0 && speed_err < 0.0);
    if !pinned && gains.ki_speed > 0.0 {
        integ.integral += speed_err * dt;
        let lim = gains.integ_limit / gains.ki_speed;
        integ.integral = integ.integral.clamp(-lim, lim);
    }
    let x = (p_term + gains.ki_speed * integ.integral).clamp(-1.0, 1.0);
    (x, z)
}

/// Course (deg) and speed the station keeper asks of the course/speed loop,
/// or `None` inside the deadband.
pub fn station_keep_setpoint(
    state: &VesselState,
    target: (f64, f64),
    speed_cap: f64,
    gains: &StationKeepGains,
) -> Option<(f64, f64)> {
    let target_local = latlon_to_local(target.0, target.1, (state.origin_lat, state.origin_lon));
    let dn = target_local.0 - state.north;
    let de = target_local.1 - state.east;
    let dist = dn.hypot(de);
    if dist <= gains.deadband {
        return None;
    }
    let course = bearing_deg((state.north, state.east), target_local);
    Some((course, speed_cap.min(gains.k_speed * dist)))
}

pub fn builtin_station_keep(
    state: &VesselState,
    target: (f64, f64),
    speed_cap: f64,
    sk: &StationKeepGains,
    cs: &CourseSpeedGains,
    integ: &mut PiState,
    dt: f64,
) -> (f64, f64) {
    match station_keep_setpoint(state, target, speed_cap, sk) {
        Some((course, speed)) => builtin_course_speed(state, course, speed, cs, integ, dt),
        None => (0.0, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::local_to_latlon;

    #[test]
    fn at_setpoint_outputs_zero() {
        let s = VesselState { psi: 1.0, ..Default::default() };
        let mut pi = PiState::default();
        let (x, z) = builtin_course_speed(
            &s,
            1.0f64.to_degrees(),
            0.0,
            &CourseSpeedGains::default(),
            &mut pi,
            0.02,
        );
        assert_eq!((x, z), (0.0, 0.0));
    }

    #[test]
    fn positive_heading_error_turns_clockwise() {
        let s = VesselState::default();
        let mut pi = PiState::default();
        let (_, z) = builtin_course_speed(&s, 10.0, 0.0, &CourseSpeedGains::default(), &mut pi, 0.02);
        assert!(z > 0.0);
        let (_, z) = builtin_course_speed(&s, 350.0, 0.0, &CourseSpeedGains::default(), &mut pi, 0.02);
        assert!(z < 0.0);
    }

    #[test]
    fn integrator_is_bounded() {
        let s = VesselState::default();
        let mut pi = PiState::default();
        let g = CourseSpeedGains::default();
        for _ in 0..100_000 {
            builtin_course_speed(&s, 0.0, 3.0, &g, &mut pi, 0.02);
        }
        assert!(g.ki_speed * pi.integral <= g.integ_limit + 1e-12);
    }

    #[test]
    fn wrap_pi_interval() {
        assert_eq!(wrap_pi(PI), PI);
        assert!((wrap_pi(-PI) - PI).abs() < 1e-12);
        assert!((wrap_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn deadband_and_bearing() {
        let origin = (44.0, -76.0);
        let sk = StationKeepGains::default();
        let s = VesselState::at_rest(0.5, 0.5, 0.0, origin);
        assert_eq!(station_keep_setpoint(&s, origin, 1.0, &sk), None);
        let mut pi = PiState::default();
        let out = builtin_station_keep(&s, origin, 1.0, &sk, &CourseSpeedGains::default(), &mut pi, 0.02);
        assert_eq!(out, (0.0, 0.0));

        let s = VesselState::at_rest(50.0, 0.0, 0.0, origin);
        let target = local_to_latlon(0.0, 0.0, origin);
        let (course, speed) = station_keep_setpoint(&s, target, 1.0, &sk).unwrap();
        assert!((course - 180.0).abs() < 1e-9);
        assert_eq!(speed, 1.0);
        let (_, speed) = station_keep_setpoint(&VesselState::at_rest(3.0, 0.0, 0.0, origin), target, 1.0, &sk).unwrap();
        assert!((speed - 0.6).abs() < 1e-9);
    }
}
