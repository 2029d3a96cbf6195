//! Path-following NMPC and the LOS baseline.
//!
//! Single shooting over `N` held input pairs `(x, z)`, box-constrained to
//! `[-1, 1]`, solved by projected gradient descent with an exact adjoint
//! gradient. The prediction model is the simulator's calm-water dynamics.

mod controller;
mod cost;
mod los;
mod model;
mod path;
mod solver;

use thiserror::Error;

pub use controller::{
    estimate_state, BaselineController, Controller, ControllerEvent, NmpcController, SolveStats, TickOutput,
    CONTROL_PERIOD, FAILSAFE_AFTER, STALE_AFTER,
};
pub use cost::{cost, cost_gradient, CostWeights, Problem};
pub use los::{los_guidance, LosConfig, LosGuidance, LosOutput};
pub use model::{input_forces, predict, substeps};
pub use path::{cross_track_error, Path, PathSpec, ProgressTracker, Projection, FIGURE_EIGHT_SAMPLES};
pub use solver::{solve_from, solve_nmpc, ControlSolution, NmpcConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NmpcError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric fault: {0}")]
    NumericFault(String),
}
