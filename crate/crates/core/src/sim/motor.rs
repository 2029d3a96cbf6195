use serde::{Deserialize, Serialize};

use super::VesselParams;

/// Below this magnitude a motor with zero demand is considered stopped.
const STOP_EPS: f64 = 1e-3;

/// One propulsion unit. A motor starting from rest waits `startup_delay`
/// before producing thrust, then follows a first-order lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorState {
    pub target_norm: f64,
    pub actual_norm: f64,
    /// Time spent waiting on a nonzero demand while stopped, s.
    pub since_stationary_cmd: f64,
    pub rpm_signed: f64,
    pub stationary: bool,
}

impl Default for MotorState {
    fn default() -> Self {
        Self {
            target_norm: 0.0,
            actual_norm: 0.0,
            since_stationary_cmd: 0.0,
            rpm_signed: 0.0,
            stationary: true,
        }
    }
}

impl MotorState {
    /// Propeller speed as the OBC reports it (direction is not observable).
    pub fn reported_rpm(&self) -> u32 {
        self.rpm_signed.abs().round() as u32
    }
}

pub fn apply_motor_lag(motor: MotorState, target: f64, dt: f64, p: &VesselParams) -> MotorState {
    let target = target.clamp(-1.0, 1.0);
    let mut m = MotorState { target_norm: target, ..motor };
    if m.stationary {
        if target == 0.0 {
            m.since_stationary_cmd = 0.0;
            m.actual_norm = 0.0;
        } else {
            m.since_stationary_cmd += dt;
            if m.since_stationary_cmd >= p.startup_delay - 1e-9 {
                // Relax over whatever part of this step lies past the delay;
                // summed step rounding is not a real overrun.
                let over = m.since_stationary_cmd - p.startup_delay;
                let run = if over < 1e-9 { 0.0 } else { over };
                m.actual_norm = target * (1.0 - (-run / p.motor_tau).exp());
                m.stationary = false;
            } else {
                m.actual_norm = 0.0;
            }
        }
    } else {
        let decay = (-dt / p.motor_tau).exp();
        m.actual_norm = target + (m.actual_norm - target) * decay;
        if target == 0.0 && m.actual_norm.abs() < STOP_EPS {
            m.actual_norm = 0.0;
            m.stationary = true;
            m.since_stationary_cmd = 0.0;
        }
    }
    m.actual_norm = m.actual_norm.clamp(-1.0, 1.0);
    m.rpm_signed = m.actual_norm * p.rpm_max;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SIM_DT;

    fn run(mut m: MotorState, target: f64, seconds: f64, p: &VesselParams) -> MotorState {
        let steps = (seconds / SIM_DT).round() as usize;
        for _ in 0..steps {
            m = apply_motor_lag(m, target, SIM_DT, p);
        }
        m
    }

    #[test]
    fn startup_delay_holds_zero() {
        let p = VesselParams::default();
        let m = run(MotorState::default(), 1.0, 1.0, &p);
        assert_eq!(m.actual_norm, 0.0);
        assert!(m.stationary);
        let m = run(m, 1.0, 0.98, &p);
        assert_eq!(m.actual_norm, 0.0);
        let m = run(m, 1.0, 0.04, &p);
        assert!(m.actual_norm > 0.0);
    }

    #[test]
    fn closed_form_after_delay() {
        let p = VesselParams::default();
        let mut m = run(MotorState::default(), 0.8, p.startup_delay, &p);
        let mut t = m.since_stationary_cmd - p.startup_delay;
        for _ in 0..200 {
            m = apply_motor_lag(m, 0.8, SIM_DT, &p);
            t += SIM_DT;
            let expected = 0.8 * (1.0 - (-t / p.motor_tau).exp());
            assert!((m.actual_norm - expected).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn fixed_point_is_unchanged() {
        let p = VesselParams::default();
        let m = MotorState { target_norm: 0.4, actual_norm: 0.4, stationary: false, ..Default::default() };
        let next = apply_motor_lag(m, 0.4, SIM_DT, &p);
        assert_eq!(next.actual_norm, 0.4);
    }

    #[test]
    fn stops_and_rearms_delay() {
        let p = VesselParams::default();
        let m = run(MotorState::default(), -1.0, 5.0, &p);
        assert!(m.actual_norm < -0.9);
        assert!(m.reported_rpm() > 0);
        let m = run(m, 0.0, 10.0, &p);
        assert_eq!(m.actual_norm, 0.0);
        assert_eq!(m.reported_rpm(), 0);
        assert!(m.stationary);
        let m = run(m, 1.0, 1.0, &p);
        assert_eq!(m.actual_norm, 0.0);
    }

    #[test]
    fn cancelled_start_resets_timer() {
        let p = VesselParams::default();
        let m = run(MotorState::default(), 1.0, 1.5, &p);
        let m = apply_motor_lag(m, 0.0, SIM_DT, &p);
        assert_eq!(m.since_stationary_cmd, 0.0);
        let m = run(m, 1.0, 1.5, &p);
        assert_eq!(m.actual_norm, 0.0);
    }
}
