//! Tracking cost and its exact gradient.

use serde::{Deserialize, Serialize};

use crate::sim::{StateVec, VesselParams, VesselState};

use super::model::{backprop, rollout};
use super::path::{Path, Projection};
use super::NmpcError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub w_ct: f64,
    pub w_head: f64,
    pub w_speed: f64,
    pub w_u: f64,
    pub w_du: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_ct: 10.0,
            w_head: 2.0,
            w_speed: 1.0,
            w_u: 0.1,
            w_du: 0.5,
        }
    }
}

impl CostWeights {
    pub fn zero() -> Self {
        Self {
            w_ct: 0.0,
            w_head: 0.0,
            w_speed: 0.0,
            w_u: 0.0,
            w_du: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), NmpcError> {
        for (name, w) in [
            ("w_ct", self.w_ct),
            ("w_head", self.w_head),
            ("w_speed", self.w_speed),
            ("w_u", self.w_u),
            ("w_du", self.w_du),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(NmpcError::Config(format!("{name} must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// One optimization instance: measured state, reference and the input that
/// is currently applied.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub state: VesselState,
    pub path: &'a Path,
    /// Arc-length window for matching predicted points to the path. `None`
    /// searches the whole path.
    pub window: Option<(f64, f64)>,
    pub prev_input: (f64, f64),
}

impl<'a> Problem<'a> {
    pub fn new(state: VesselState, path: &'a Path) -> Self {
        Self {
            state,
            path,
            window: None,
            prev_input: (0.0, 0.0),
        }
    }

    pub fn reference(&self, pos: (f64, f64)) -> Projection {
        match self.window {
            Some((lo, hi)) => self.path.project_window(pos, lo, hi),
            None => self.path.project(pos),
        }
    }
}

/// Per-step state cost and its gradient with respect to the state vector.
fn state_term(s: &StateVec, pr: &Projection, w: &CostWeights, ref_speed: f64) -> (f64, StateVec) {
    let e = pr.cross_track;
    let dpsi = s[2] - pr.heading;
    let du = s[3] - ref_speed;
    let c = w.w_ct * e * e + w.w_head * (1.0 - dpsi.cos()) + w.w_speed * du * du;
    let g = [
        2.0 * w.w_ct * e * pr.grad.0,
        2.0 * w.w_ct * e * pr.grad.1,
        w.w_head * dpsi.sin(),
        2.0 * w.w_speed * du,
        0.0,
        0.0,
    ];
    (c, g)
}

fn input_terms(inputs: &[(f64, f64)], prev: (f64, f64), w: &CostWeights) -> f64 {
    let mut last = prev;
    let mut c = 0.0;
    for &(x, z) in inputs {
        c += w.w_u * (x * x + z * z);
        let (dx, dz) = (x - last.0, z - last.1);
        c += w.w_du * (dx * dx + dz * dz);
        last = (x, z);
    }
    c
}

/// Cost of a predicted trajectory. State terms are summed over the predicted
/// points `1..=N`; the measured state carries no decision dependence.
pub fn cost(
    trajectory: &[VesselState],
    inputs: &[(f64, f64)],
    problem: &Problem<'_>,
    weights: &CostWeights,
    ref_speed: f64,
) -> f64 {
    assert_eq!(trajectory.len(), inputs.len() + 1, "trajectory/input length mismatch");
    let states: f64 = trajectory[1..]
        .iter()
        .map(|st| {
            let s = st.vector();
            state_term(&s, &problem.reference((s[0], s[1])), weights, ref_speed).0
        })
        .sum();
    states + input_terms(inputs, problem.prev_input, weights)
}

/// Cost of `inputs` and its gradient, by reverse accumulation through the
/// RK4 rollout.
pub fn cost_gradient(
    problem: &Problem<'_>,
    inputs: &[(f64, f64)],
    dt: f64,
    weights: &CostWeights,
    ref_speed: f64,
    p: &VesselParams,
) -> Result<(f64, Vec<(f64, f64)>), NmpcError> {
    let roll = rollout(&problem.state.vector(), inputs, dt, p)?;
    let mut total = 0.0;
    let mut knot_grad = vec![[0.0; 6]; inputs.len() + 1];
    for (k, s) in roll.knots.iter().enumerate().skip(1) {
        let (c, g) = state_term(s, &problem.reference((s[0], s[1])), weights, ref_speed);
        total += c;
        knot_grad[k] = g;
    }
    let mut grad = backprop(&roll, inputs, &knot_grad, p);

    total += input_terms(inputs, problem.prev_input, weights);
    let n = inputs.len();
    for k in 0..n {
        let (x, z) = inputs[k];
        let before = if k == 0 { problem.prev_input } else { inputs[k - 1] };
        grad[k].0 += 2.0 * weights.w_u * x + 2.0 * weights.w_du * (x - before.0);
        grad[k].1 += 2.0 * weights.w_u * z + 2.0 * weights.w_du * (z - before.1);
        if k + 1 < n {
            let (nx, nz) = inputs[k + 1];
            grad[k].0 -= 2.0 * weights.w_du * (nx - x);
            grad[k].1 -= 2.0 * weights.w_du * (nz - z);
        }
    }
    if !total.is_finite() {
        return Err(NmpcError::NumericFault(format!("non-finite cost {total}")));
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmpc::model::predict;

    fn east_line() -> Path {
        Path::new(vec![(0.0, -1000.0), (0.0, 1000.0)], false).unwrap()
    }

    #[test]
    fn on_path_cost_is_input_terms_only() {
        let path = east_line();
        let state = VesselState {
            psi: std::f64::consts::FRAC_PI_2,
            u: 1.0,
            ..VesselState::default()
        };
        let problem = Problem::new(state, &path);
        let w = CostWeights::default();
        // One step of zero input: vessel coasts along the path.
        let inputs = [(0.0, 0.0)];
        let traj = predict(&state, &inputs, 0.2, &VesselParams::default()).unwrap();
        let c = cost(&traj, &inputs, &problem, &w, traj[1].u);
        assert!(c.abs() < 1e-12, "{c}");
    }

    #[test]
    fn zero_weights_zero_cost_and_gradient() {
        let path = east_line();
        let state = VesselState { north: 4.0, u: 0.3, ..VesselState::default() };
        let problem = Problem { prev_input: (0.5, -0.5), ..Problem::new(state, &path) };
        let inputs = vec![(0.3, -0.2); 8];
        let (c, g) =
            cost_gradient(&problem, &inputs, 0.2, &CostWeights::zero(), 1.0, &VesselParams::default()).unwrap();
        assert_eq!(c, 0.0);
        assert!(g.iter().all(|&(a, b)| a == 0.0 && b == 0.0));
    }

    #[test]
    fn single_step_hand_sum() {
        // Trajectory supplied directly so only the summation is exercised.
        let path = east_line();
        let state = VesselState { north: 2.0, psi: 1.0, ..VesselState::default() };
        let problem = Problem { prev_input: (0.1, 0.2), ..Problem::new(state, &path) };
        let w = CostWeights { w_ct: 3.0, w_head: 5.0, w_speed: 7.0, w_u: 11.0, w_du: 13.0 };
        let traj = vec![state, state];
        let inputs = [(0.4, -0.3)];
        let c = cost(&traj, &inputs, &problem, &w, 0.5);
        let hand = 3.0 * 4.0
            + 5.0 * (1.0 - (1.0 - std::f64::consts::FRAC_PI_2).cos())
            + 7.0 * 0.25
            + 11.0 * (0.16 + 0.09)
            + 13.0 * (0.09 + 0.25);
        assert!((c - hand).abs() < 1e-12, "{c} vs {hand}");
    }
}
