//! Adjoint gradient against an independent central-difference oracle.

mod common;

use common::{central_difference, max_rel_error, random_instance, total_cost};
use otterlink::nmpc::{cost_gradient, CostWeights, NmpcConfig, Path, PathSpec, Problem};
use otterlink::sim::{VesselParams, VesselState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gradient_matches_central_differences() {
    let path = PathSpec::figure_eight(20.0).build().unwrap();
    let cfg = NmpcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (state, inputs, prev) = random_instance(&mut rng);
        let problem = Problem { prev_input: prev, ..Problem::new(state, &path) };
        let (c, g) = cost_gradient(&problem, &inputs, cfg.dt(), &cfg.weights, cfg.ref_speed, &cfg.model).unwrap();
        assert!((c - total_cost(&problem, &inputs, &cfg)).abs() <= 1e-9 * c.abs().max(1.0));
        let fd = central_difference(&problem, &inputs, &cfg);
        worst = worst.max(max_rel_error(&g, &fd));
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn mirrored_instance_mirrors_gradient() {
    // Reflecting across a northward straight path maps (east, psi, v, r, z)
    // to their negatives and leaves the cost unchanged.
    let path = Path::new(vec![(-500.0, 0.0), (500.0, 0.0)], false).unwrap();
    let cfg = NmpcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (mut state, inputs, prev) = random_instance(&mut rng);
        state.north = 0.0;
        state.psi = rng.random_range(-0.5..0.5);
        let mirror_state = VesselState {
            east: -state.east,
            psi: -state.psi,
            v: -state.v,
            r: -state.r,
            ..state
        };
        let mirror_inputs: Vec<_> = inputs.iter().map(|&(x, z)| (x, -z)).collect();
        let a = Problem { prev_input: prev, ..Problem::new(state, &path) };
        let b = Problem { prev_input: (prev.0, -prev.1), ..Problem::new(mirror_state, &path) };
        let (ca, ga) = cost_gradient(&a, &inputs, cfg.dt(), &cfg.weights, cfg.ref_speed, &cfg.model).unwrap();
        let (cb, gb) =
            cost_gradient(&b, &mirror_inputs, cfg.dt(), &cfg.weights, cfg.ref_speed, &cfg.model).unwrap();
        assert!((ca - cb).abs() < 1e-9 * ca.max(1.0));
        for (p, q) in ga.iter().zip(&gb) {
            assert!((p.0 - q.0).abs() < 1e-7 * ca.max(1.0));
            assert!((p.1 + q.1).abs() < 1e-7 * ca.max(1.0));
        }
    }
}

#[test]
fn on_path_torque_gradient_vanishes() {
    let path = Path::new(vec![(-500.0, 0.0), (500.0, 0.0)], false).unwrap();
    let cfg = NmpcConfig::default();
    let state = VesselState { u: 1.0, ..VesselState::default() };
    let inputs = vec![(0.4, 0.0); 20];
    let (_, g) = cost_gradient(
        &Problem::new(state, &path),
        &inputs,
        cfg.dt(),
        &cfg.weights,
        cfg.ref_speed,
        &VesselParams::default(),
    )
    .unwrap();
    assert!(g.iter().all(|p| p.1.abs() < 1e-12));
    assert!(g.iter().any(|p| p.0.abs() > 1e-6));
}

#[test]
fn zero_weights_give_zero_gradient() {
    let path = PathSpec::figure_eight(20.0).build().unwrap();
    let cfg = NmpcConfig { weights: CostWeights::zero(), ..NmpcConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (state, inputs, prev) = random_instance(&mut rng);
    let problem = Problem { prev_input: prev, ..Problem::new(state, &path) };
    let (c, g) = cost_gradient(&problem, &inputs, cfg.dt(), &cfg.weights, cfg.ref_speed, &cfg.model).unwrap();
    assert_eq!(c, 0.0);
    assert!(g.iter().all(|p| *p == (0.0, 0.0)));
}
