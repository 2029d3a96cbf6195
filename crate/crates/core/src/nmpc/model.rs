//! Prediction model and its adjoint.
//!
//! The rollout reuses the simulator's `mix`, `derivatives` and `rk4`, holding
//! each input pair for one control interval split into RK4 substeps no longer
//! than [`SIM_DT`]. Motor dynamics are not modelled.

use crate::sim::{derivatives, mix, rk4, wrap_2pi, EnvDisturbance, Forces, StateVec, VesselParams, VesselState, SIM_DT};

use super::NmpcError;

/// Substeps per control interval of length `dt`.
pub fn substeps(dt: f64) -> usize {
    ((dt / SIM_DT) - 1e-9).ceil().max(1.0) as usize
}

/// Generalized forces `(X, N)` for a normalized input pair.
pub fn input_forces(x: f64, z: f64, p: &VesselParams) -> (f64, f64) {
    let (port, stbd) = mix(x, z);
    Forces {
        port: p.f_max * port,
        stbd: p.f_max * stbd,
    }
    .generalized(p)
}

/// Forward rollout with every substep start retained for the reverse pass.
#[derive(Debug, Clone)]
pub(crate) struct Rollout {
    /// States at interval boundaries, `N + 1` entries.
    pub knots: Vec<StateVec>,
    /// Substep start states, `N * substeps` entries.
    pub sub: Vec<StateVec>,
    pub substeps: usize,
    pub h: f64,
}

pub(crate) fn rollout(
    x0: &StateVec,
    inputs: &[(f64, f64)],
    dt: f64,
    p: &VesselParams,
) -> Result<Rollout, NmpcError> {
    let m = substeps(dt);
    let h = dt / m as f64;
    let env = EnvDisturbance::calm();
    let mut knots = Vec::with_capacity(inputs.len() + 1);
    let mut sub = Vec::with_capacity(inputs.len() * m);
    let mut s = *x0;
    knots.push(s);
    for (k, &(x, z)) in inputs.iter().enumerate() {
        let tau = input_forces(x, z, p);
        for _ in 0..m {
            sub.push(s);
            s = rk4(&s, tau, &env, p, h);
            s[2] = wrap_2pi(s[2]);
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(NmpcError::NumericFault(format!("non-finite prediction at step {}", k + 1)));
        }
        knots.push(s);
    }
    Ok(Rollout { knots, sub, substeps: m, h })
}

/// Predicted trajectory, `inputs.len() + 1` states starting at `state`.
pub fn predict(
    state: &VesselState,
    inputs: &[(f64, f64)],
    dt: f64,
    p: &VesselParams,
) -> Result<Vec<VesselState>, NmpcError> {
    if let Some(bad) = inputs
        .iter()
        .find(|(x, z)| !((-1.0..=1.0).contains(x) && (-1.0..=1.0).contains(z)))
    {
        return Err(NmpcError::Config(format!("input {bad:?} outside [-1, 1]")));
    }
    let r = rollout(&state.vector(), inputs, dt, p)?;
    Ok(r.knots.iter().map(|s| state.with_vector(s)).collect())
}

/// `J(s)^T w` for the calm-water state derivative.
fn jt_mul(s: &StateVec, w: &StateVec, p: &VesselParams) -> StateVec {
    let [_, _, psi, u, v, r] = *s;
    let (sp, cp) = psi.sin_cos();
    let (m11, m22, m33) = (p.m11, p.m22, p.m33);
    [
        0.0,
        0.0,
        w[0] * (-u * sp - v * cp) + w[1] * (u * cp - v * sp),
        w[0] * cp + w[1] * sp + w[3] * (-p.d1u() - 2.0 * p.d2u() * u.abs()) / m11 - w[4] * m11 * r / m22,
        -w[0] * sp + w[1] * cp + w[3] * m22 * r / m11 - w[4] * p.d1v / m22,
        w[2] + w[3] * m22 * v / m11 - w[4] * m11 * u / m22 - w[5] * p.d1r / m33,
    ]
}

fn axpy(a: f64, x: &StateVec, y: &StateVec) -> StateVec {
    std::array::from_fn(|i| y[i] + a * x[i])
}

fn sat_slope(a: f64) -> f64 {
    if a.abs() < 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Reverse pass. `knot_grad[k]` is the cost gradient with respect to the
/// state at boundary `k`; the result is the gradient with respect to the
/// inputs through the dynamics.
pub(crate) fn backprop(
    roll: &Rollout,
    inputs: &[(f64, f64)],
    knot_grad: &[StateVec],
    p: &VesselParams,
) -> Vec<(f64, f64)> {
    let n = inputs.len();
    let m = roll.substeps;
    let h = roll.h;
    let mut lam = knot_grad[n];
    let mut out = vec![(0.0, 0.0); n];
    for k in (0..n).rev() {
        let (x, z) = inputs[k];
        let tau = input_forces(x, z, p);
        let env = EnvDisturbance::calm();
        let (mut xbar, mut nbar) = (0.0, 0.0);
        for j in (0..m).rev() {
            let s0 = roll.sub[k * m + j];
            let st1 = derivatives(&s0, tau, &env, p);
            let s2 = axpy(0.5 * h, &st1, &s0);
            let st2 = derivatives(&s2, tau, &env, p);
            let s3 = axpy(0.5 * h, &st2, &s0);
            let st3 = derivatives(&s3, tau, &env, p);
            let s4 = axpy(h, &st3, &s0);

            let mut kb1: StateVec = lam.map(|l| h / 6.0 * l);
            let mut kb2: StateVec = lam.map(|l| h / 3.0 * l);
            let mut kb3: StateVec = lam.map(|l| h / 3.0 * l);
            let kb4: StateVec = lam.map(|l| h / 6.0 * l);
            let mut sb = lam;

            let b4 = jt_mul(&s4, &kb4, p);
            for i in 0..6 {
                sb[i] += b4[i];
                kb3[i] += h * b4[i];
            }
            let b3 = jt_mul(&s3, &kb3, p);
            for i in 0..6 {
                sb[i] += b3[i];
                kb2[i] += 0.5 * h * b3[i];
            }
            let b2 = jt_mul(&s2, &kb2, p);
            for i in 0..6 {
                sb[i] += b2[i];
                kb1[i] += 0.5 * h * b2[i];
            }
            let b1 = jt_mul(&s0, &kb1, p);
            for i in 0..6 {
                sb[i] += b1[i];
            }
            xbar += (kb1[3] + kb2[3] + kb3[3] + kb4[3]) / p.m11;
            nbar += (kb1[5] + kb2[5] + kb3[5] + kb4[5]) / p.m33;
            lam = sb;
        }
        let pbar = p.f_max * xbar + p.f_max * p.lever * nbar;
        let sbar = p.f_max * xbar - p.f_max * p.lever * nbar;
        let dp = sat_slope(x + z);
        let ds = sat_slope(x - z);
        out[k] = (pbar * dp + sbar * ds, pbar * dp - sbar * ds);
        for i in 0..6 {
            lam[i] += knot_grad[k][i];
        }
    }
    out
}
