//! 3-DOF surge/sway/yaw model.
//!
//! North-east-down convention: `psi` is measured clockwise from north, `u`
//! points forward, `v` to starboard and positive `r` turns clockwise.
//!
//! ```text
//! m11 u' = X - d1u u - d2u u|u| + m22 v r
//! m22 v' = -d1v v - m11 u r
//! m33 r' = N - d1r r
//! ```
//!
//! with `X = F_port + F_stbd` and `N = lever (F_port - F_stbd)`. Currents
//! are added to the world-frame kinematics only.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{SimError, VesselParams};

/// `[north, east, psi, u, v, r]`.
pub type StateVec = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VesselState {
    pub north: f64,
    pub east: f64,
    /// Heading in [0, 2pi), clockwise from north.
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl VesselState {
    pub fn at_rest(north: f64, east: f64, psi: f64, origin: (f64, f64)) -> Self {
        Self {
            north,
            east,
            psi: wrap_2pi(psi),
            origin_lat: origin.0,
            origin_lon: origin.1,
            ..Default::default()
        }
    }

    pub fn vector(&self) -> StateVec {
        [self.north, self.east, self.psi, self.u, self.v, self.r]
    }

    pub fn with_vector(&self, s: &StateVec) -> Self {
        Self {
            north: s[0],
            east: s[1],
            psi: s[2],
            u: s[3],
            v: s[4],
            r: s[5],
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.vector().iter().all(|x| x.is_finite())
    }

    /// Kinetic energy in the body frame, J.
    pub fn kinetic_energy(&self, p: &VesselParams) -> f64 {
        0.5 * (p.m11 * self.u * self.u + p.m22 * self.v * self.v + p.m33 * self.r * self.r)
    }

    /// Velocity over ground `(north, east)`, m/s.
    pub fn ground_velocity(&self, env: &EnvDisturbance) -> (f64, f64) {
        let (s, c) = self.psi.sin_cos();
        (
            self.u * c - self.v * s + env.current_north,
            self.u * s + self.v * c + env.current_east,
        )
    }
}

/// Motor thrust, N.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Forces {
    pub port: f64,
    pub stbd: f64,
}

impl Forces {
    /// Surge force and yaw moment.
    pub fn generalized(&self, p: &VesselParams) -> (f64, f64) {
        (self.port + self.stbd, p.lever * (self.port - self.stbd))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvDisturbance {
    pub current_north: f64,
    pub current_east: f64,
}

impl EnvDisturbance {
    pub fn calm() -> Self {
        Self::default()
    }
}

pub fn wrap_2pi(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn sat(a: f64) -> f64 {
    a.clamp(-1.0, 1.0)
}

/// Normalized per-motor demand `(port, stbd)` for surge `x` and torque `z`.
pub fn mix(x: f64, z: f64) -> (f64, f64) {
    (sat(x + z), sat(x - z))
}

/// Differential-drive allocation. Positive `z` turns clockwise.
pub fn allocate_thrust(x: f64, z: f64, p: &VesselParams) -> Result<Forces, SimError> {
    for (name, v) in [("x", x), ("z", z)] {
        if !(v.is_finite() && (-1.0..=1.0).contains(&v)) {
            return Err(SimError::Command(format!("{name} = {v} outside [-1, 1]")));
        }
    }
    let (port, stbd) = mix(x, z);
    Ok(Forces {
        port: p.f_max * port,
        stbd: p.f_max * stbd,
    })
}

/// Time derivative of the state under generalized forces `(X, N)`.
pub fn derivatives(s: &StateVec, tau: (f64, f64), env: &EnvDisturbance, p: &VesselParams) -> StateVec {
    let [_, _, psi, u, v, r] = *s;
    let (sp, cp) = psi.sin_cos();
    [
        u * cp - v * sp + env.current_north,
        u * sp + v * cp + env.current_east,
        r,
        (tau.0 - p.d1u() * u - p.d2u() * u * u.abs() + p.m22 * v * r) / p.m11,
        (-p.d1v * v - p.m11 * u * r) / p.m22,
        (tau.1 - p.d1r * r) / p.m33,
    ]
}

fn axpy(a: f64, x: &StateVec, y: &StateVec) -> StateVec {
    std::array::from_fn(|i| y[i] + a * x[i])
}

/// One classical RK4 step with inputs held constant. Heading is not wrapped.
pub fn rk4(s: &StateVec, tau: (f64, f64), env: &EnvDisturbance, p: &VesselParams, h: f64) -> StateVec {
    let k1 = derivatives(s, tau, env, p);
    let k2 = derivatives(&axpy(0.5 * h, &k1, s), tau, env, p);
    let k3 = derivatives(&axpy(0.5 * h, &k2, s), tau, env, p);
    let k4 = derivatives(&axpy(h, &k3, s), tau, env, p);
    std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

pub fn step_dynamics(
    state: &VesselState,
    forces: Forces,
    env: &EnvDisturbance,
    p: &VesselParams,
    dt: f64,
) -> Result<VesselState, SimError> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(SimError::Config(format!("dt = {dt} outside (0, 0.1]")));
    }
    let mut next = rk4(&state.vector(), forces.generalized(p), env, p, dt);
    next[2] = wrap_2pi(next[2]);
    let out = state.with_vector(&next);
    if !out.is_finite() {
        return Err(SimError::NumericFault(format!(
            "non-finite state after step: {out:?} (from {state:?}, forces {forces:?})"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SIM_DT;
    use proptest::prelude::*;

    fn p() -> VesselParams {
        VesselParams::default()
    }

    #[test]
    fn allocation_cases() {
        let p = p();
        assert_eq!(allocate_thrust(1.0, 0.0, &p).unwrap(), Forces { port: 100.0, stbd: 100.0 });
        assert_eq!(allocate_thrust(0.0, 1.0, &p).unwrap(), Forces { port: 100.0, stbd: -100.0 });
        assert_eq!(allocate_thrust(1.0, 1.0, &p).unwrap(), Forces { port: 100.0, stbd: 0.0 });
        assert!(matches!(allocate_thrust(1.2, 0.0, &p), Err(SimError::Command(_))));
        assert!(allocate_thrust(0.0, f64::NAN, &p).is_err());
    }

    #[test]
    fn equilibrium_at_rest() {
        let s = VesselState::at_rest(5.0, -3.0, 1.0, (44.0, -76.0));
        let next = step_dynamics(&s, Forces::default(), &EnvDisturbance::calm(), &p(), SIM_DT).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn full_surge_reaches_top_speed() {
        let p = p();
        let f = allocate_thrust(1.0, 0.0, &p).unwrap();
        let mut s = VesselState::default();
        let mut prev_u = 0.0;
        for _ in 0..3000 {
            s = step_dynamics(&s, f, &EnvDisturbance::calm(), &p, SIM_DT).unwrap();
            assert!(s.u >= prev_u);
            prev_u = s.u;
        }
        assert!((s.u - 3.0).abs() < 0.06, "u = {}", s.u);
    }

    #[test]
    fn pure_torque_spins_in_place() {
        let p = p();
        let f = allocate_thrust(0.0, 1.0, &p).unwrap();
        let mut s = VesselState::default();
        for _ in 0..50 {
            s = step_dynamics(&s, f, &EnvDisturbance::calm(), &p, SIM_DT).unwrap();
        }
        assert_eq!(s.u, 0.0);
        assert_eq!(s.v, 0.0);
        assert!(s.r > 0.0);
    }

    #[test]
    fn current_drifts_position() {
        let env = EnvDisturbance { current_north: 0.3, current_east: 0.0 };
        let s = step_dynamics(&VesselState::default(), Forces::default(), &env, &p(), 0.1).unwrap();
        assert!((s.north - 0.03).abs() < 1e-12);
    }

    #[test]
    fn bad_dt_and_numeric_fault() {
        let s = VesselState::default();
        assert!(step_dynamics(&s, Forces::default(), &EnvDisturbance::calm(), &p(), 0.0).is_err());
        assert!(step_dynamics(&s, Forces::default(), &EnvDisturbance::calm(), &p(), 0.2).is_err());
        let f = Forces { port: f64::INFINITY, stbd: 0.0 };
        assert!(matches!(
            step_dynamics(&s, f, &EnvDisturbance::calm(), &p(), SIM_DT),
            Err(SimError::NumericFault(_))
        ));
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_2pi(TAU), 0.0);
        assert!(wrap_2pi(-1e-18) < TAU);
        assert!((wrap_2pi(-0.5) - (TAU - 0.5)).abs() < 1e-12);
    }

    proptest! {
        // Operating envelope: |u| <= 1.2 v_max, |v| <= 1 m/s, |r| <= 1 rad/s.
        #[test]
        fn unforced_energy_never_increases(
            u in -3.6f64..3.6, v in -1.0f64..1.0, r in -1.0f64..1.0, psi in 0.0f64..TAU,
        ) {
            let p = p();
            let mut s = VesselState { psi, u, v, r, ..Default::default() };
            for _ in 0..25 {
                let next = step_dynamics(&s, Forces::default(), &EnvDisturbance::calm(), &p, SIM_DT).unwrap();
                prop_assert!(next.kinetic_energy(&p) <= s.kinetic_energy(&p) * (1.0 + 1e-12));
                prop_assert!(next.psi >= 0.0 && next.psi < TAU);
                s = next;
            }
        }
    }
}
