use serde::{Deserialize, Serialize};

use super::SimError;

/// Fixed internal integration step of the simulated OBC, seconds.
pub const SIM_DT: f64 = 0.02;

/// Planar catamaran model coefficients.
///
/// The surge damping pair is not free: it is derived from `f_max` and `v_max`
/// so that full thrust on both motors balances drag exactly at top speed,
/// with drag split evenly between the linear and quadratic terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VesselParams {
    /// Surge inertia incl. added mass, kg.
    pub m11: f64,
    /// Sway inertia incl. added mass, kg.
    pub m22: f64,
    /// Yaw inertia incl. added mass, kg m^2.
    pub m33: f64,
    pub d1v: f64,
    pub d1r: f64,
    /// Peak thrust per motor, N.
    pub f_max: f64,
    /// Half the thruster separation, m.
    pub lever: f64,
    pub v_max: f64,
    /// Dead time before a motor starting from rest produces thrust, s.
    pub startup_delay: f64,
    /// First-order motor time constant, s.
    pub motor_tau: f64,
    /// Propeller speed at full normalized input, rev/min.
    pub rpm_max: f64,
}

impl Default for VesselParams {
    fn default() -> Self {
        Self {
            m11: 120.0,
            m22: 180.0,
            m33: 50.0,
            d1v: 150.0,
            d1r: 150.0,
            f_max: 100.0,
            lever: 0.54,
            v_max: 3.0,
            startup_delay: 2.0,
            motor_tau: 0.5,
            rpm_max: 1500.0,
        }
    }
}

impl VesselParams {
    /// Linear surge damping, N s/m.
    pub fn d1u(&self) -> f64 {
        self.f_max / self.v_max
    }

    /// Quadratic surge damping, N s^2/m^2.
    pub fn d2u(&self) -> f64 {
        self.f_max / (self.v_max * self.v_max)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("m11", self.m11),
            ("m22", self.m22),
            ("m33", self.m33),
            ("d1v", self.d1v),
            ("d1r", self.d1r),
            ("f_max", self.f_max),
            ("lever", self.lever),
            ("v_max", self.v_max),
            ("startup_delay", self.startup_delay),
            ("motor_tau", self.motor_tau),
            ("rpm_max", self.rpm_max),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("vessel.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}
