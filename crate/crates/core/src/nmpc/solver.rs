use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::sim::{VesselParams, VesselState};

use super::cost::{cost_gradient, CostWeights, Problem};
use super::model::predict;
use super::NmpcError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmpcConfig {
    /// Prediction horizon, s.
    pub horizon_t: f64,
    pub steps_n: usize,
    pub weights: CostWeights,
    pub ref_speed: f64,
    pub max_iters: usize,
    /// Stop when the projected-gradient step is below this in max norm.
    pub grad_tol: f64,
    /// Wall-clock cap per solve, s. `None` disables it.
    pub time_budget: Option<f64>,
    /// Prediction model. Shared with the simulator; not read from the
    /// `[nmpc]` section.
    #[serde(skip)]
    pub model: VesselParams,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        Self {
            horizon_t: 4.0,
            steps_n: 20,
            weights: CostWeights::default(),
            ref_speed: 1.0,
            max_iters: 40,
            grad_tol: 1e-4,
            time_budget: Some(0.09),
            model: VesselParams::default(),
        }
    }
}

impl NmpcConfig {
    pub fn dt(&self) -> f64 {
        self.horizon_t / self.steps_n as f64
    }

    pub fn validate(&self) -> Result<(), NmpcError> {
        if !(self.horizon_t.is_finite() && self.horizon_t > 0.0) {
            return Err(NmpcError::Config(format!("horizon_t must be > 0, got {}", self.horizon_t)));
        }
        if self.steps_n < 2 {
            return Err(NmpcError::Config(format!("steps_n must be >= 2, got {}", self.steps_n)));
        }
        if !(self.ref_speed.is_finite() && self.ref_speed >= 0.0) {
            return Err(NmpcError::Config(format!("ref_speed must be >= 0, got {}", self.ref_speed)));
        }
        if self.max_iters == 0 {
            return Err(NmpcError::Config("max_iters must be >= 1".into()));
        }
        if !(self.grad_tol.is_finite() && self.grad_tol >= 0.0) {
            return Err(NmpcError::Config(format!("grad_tol must be >= 0, got {}", self.grad_tol)));
        }
        if let Some(b) = self.time_budget {
            if !(b.is_finite() && b > 0.0) {
                return Err(NmpcError::Config(format!("time_budget must be > 0, got {b}")));
            }
        }
        self.weights.validate()?;
        self.model.validate().map_err(|e| NmpcError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSolution {
    pub inputs: Vec<(f64, f64)>,
    pub predicted: Vec<VesselState>,
    pub cost: f64,
    pub iters: usize,
    /// Wall-clock solve time, s.
    pub solve_time: f64,
    pub converged: bool,
}

impl ControlSolution {
    pub fn first_input(&self) -> (f64, f64) {
        self.inputs[0]
    }

    /// Warm start for the next tick: shift by one and repeat the last input.
    pub fn shifted(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self.inputs.iter().skip(1).copied().collect();
        out.push(*self.inputs.last().expect("solutions are never empty"));
        out
    }
}

fn project(u: &mut [(f64, f64)]) {
    for (x, z) in u.iter_mut() {
        *x = x.clamp(-1.0, 1.0);
        *z = z.clamp(-1.0, 1.0);
    }
}

fn dot(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.0 * q.0 + p.1 * q.1).sum()
}

fn diff(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    a.iter().zip(b).map(|(p, q)| (p.0 - q.0, p.1 - q.1)).collect()
}

fn max_abs(a: &[(f64, f64)]) -> f64 {
    a.iter().fold(0.0, |m, p| m.max(p.0.abs()).max(p.1.abs()))
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
const STEP_MIN: f64 = 1e-10;
const STEP_MAX: f64 = 1e3;

/// Solves from the shifted previous solution, or from zero inputs.
pub fn solve_nmpc(
    problem: &Problem<'_>,
    cfg: &NmpcConfig,
    warm_start: Option<&ControlSolution>,
) -> Result<ControlSolution, NmpcError> {
    let guess = match warm_start {
        Some(ws) if ws.inputs.len() == cfg.steps_n => ws.shifted(),
        _ => vec![(0.0, 0.0); cfg.steps_n],
    };
    solve_from(problem, cfg, guess)
}

/// Projected gradient with Barzilai-Borwein trial steps and Armijo
/// backtracking along the projection arc. Returns the best iterate.
pub fn solve_from(
    problem: &Problem<'_>,
    cfg: &NmpcConfig,
    guess: Vec<(f64, f64)>,
) -> Result<ControlSolution, NmpcError> {
    cfg.validate()?;
    if guess.len() != cfg.steps_n {
        return Err(NmpcError::Config(format!(
            "initial guess has {} inputs, expected {}",
            guess.len(),
            cfg.steps_n
        )));
    }
    let start = Instant::now();
    let dt = cfg.dt();
    let eval = |u: &[(f64, f64)]| cost_gradient(problem, u, dt, &cfg.weights, cfg.ref_speed, &cfg.model);
    let out_of_time = || cfg.time_budget.is_some_and(|b| start.elapsed().as_secs_f64() >= b);

    let mut u = guess;
    project(&mut u);
    let (mut j, mut g) = eval(&u)?;
    let mut alpha = 1.0 / max_abs(&g).max(1.0);
    let mut iters = 0;
    let mut converged = false;

    while iters < cfg.max_iters {
        let trial: Vec<(f64, f64)> = {
            let mut t: Vec<(f64, f64)> = u.iter().zip(&g).map(|(p, q)| (p.0 - q.0, p.1 - q.1)).collect();
            project(&mut t);
            t
        };
        if max_abs(&diff(&trial, &u)) <= cfg.grad_tol {
            converged = true;
            break;
        }
        if out_of_time() {
            break;
        }
        iters += 1;

        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut cand: Vec<(f64, f64)> =
                u.iter().zip(&g).map(|(p, q)| (p.0 - step * q.0, p.1 - step * q.1)).collect();
            project(&mut cand);
            let d = diff(&cand, &u);
            match eval(&cand) {
                Ok((jc, gc)) if jc <= j + ARMIJO_C * dot(&g, &d) => {
                    accepted = Some((cand, d, jc, gc));
                    break;
                }
                // A non-finite trial point is treated as too long a step.
                Ok(_) | Err(NmpcError::NumericFault(_)) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((cand, s, jc, gc)) = accepted else {
            // No descent along the arc: stationary to working precision.
            converged = true;
            break;
        };
        let y = diff(&gc, &g);
        let sy = dot(&s, &y);
        alpha = if sy > 0.0 { (dot(&s, &s) / sy).clamp(STEP_MIN, STEP_MAX) } else { (step * 2.0).min(STEP_MAX) };
        u = cand;
        j = jc;
        g = gc;
    }

    let predicted = predict(&problem.state, &u, dt, &cfg.model)?;
    Ok(ControlSolution {
        inputs: u,
        predicted,
        cost: j,
        iters,
        solve_time: start.elapsed().as_secs_f64(),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmpc::path::Path;
    use std::f64::consts::FRAC_PI_2;

    fn east_line() -> Path {
        Path::new(vec![(0.0, -1000.0), (0.0, 1000.0)], false).unwrap()
    }

    fn cfg() -> NmpcConfig {
        NmpcConfig { time_budget: None, ..NmpcConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(NmpcConfig::default().validate().is_ok());
        assert!((NmpcConfig::default().dt() - 0.2).abs() < 1e-15);
        assert!(NmpcConfig { steps_n: 1, ..cfg() }.validate().is_err());
        assert!(NmpcConfig { horizon_t: 0.0, ..cfg() }.validate().is_err());
        let mut bad = cfg();
        bad.weights.w_du = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn aligned_on_path_needs_no_turning() {
        let path = east_line();
        let state = VesselState { psi: FRAC_PI_2, u: 1.0, ..VesselState::default() };
        let sol = solve_nmpc(&Problem::new(state, &path), &cfg(), None).unwrap();
        let mean_z = sol.inputs.iter().map(|p| p.1.abs()).sum::<f64>() / sol.inputs.len() as f64;
        assert!(mean_z < 0.01, "{mean_z}");
        assert!(sol.inputs.iter().all(|p| p.0 > 0.0));
        assert_eq!(sol.predicted[0], state);
    }

    #[test]
    fn fixed_point_warm_start() {
        let path = east_line();
        let state = VesselState { north: 3.0, psi: 1.2, u: 0.8, ..VesselState::default() };
        let problem = Problem::new(state, &path);
        let c = NmpcConfig { max_iters: 2000, grad_tol: 1e-9, ..cfg() };
        let first = solve_nmpc(&problem, &c, None).unwrap();
        assert!(first.converged);
        let again = solve_from(&problem, &c, first.inputs.clone()).unwrap();
        assert!(again.iters <= 2, "{}", again.iters);
        for (a, b) in again.inputs.iter().zip(&first.inputs) {
            assert!((a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6);
        }
    }

    #[test]
    fn steers_back_toward_path() {
        let path = east_line();
        // 5 m to port of an eastward path: must turn to starboard (z > 0).
        let state = VesselState { north: 5.0, psi: FRAC_PI_2, u: 1.0, ..VesselState::default() };
        let sol = solve_nmpc(&Problem::new(state, &path), &cfg(), None).unwrap();
        assert!(sol.inputs[0].1 > 0.0, "{:?}", sol.inputs[0]);
        assert!(sol.predicted.last().unwrap().north < 5.0);
    }

    #[test]
    fn shift_repeats_last() {
        let sol = ControlSolution {
            inputs: vec![(0.1, 0.0), (0.2, 0.1), (0.3, 0.2)],
            predicted: vec![],
            cost: 0.0,
            iters: 0,
            solve_time: 0.0,
            converged: true,
        };
        assert_eq!(sol.shifted(), vec![(0.2, 0.1), (0.3, 0.2), (0.3, 0.2)]);
    }
}
