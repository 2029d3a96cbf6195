//! Property tests for the invariants of each module.

mod common;

use std::f64::consts::TAU;

use common::{constituents, random_instance, random_message, random_trace, sync_oracle, total_cost, xor_checksum};
use otterlink::client::{Synchronizer, TopicName};
use otterlink::nmea::{compute_checksum, CodecError, ManualCommand, OtterMessage};
use otterlink::nmpc::{solve_from, solve_nmpc, NmpcConfig, PathSpec, Problem};
use otterlink::sim::{Obc, ObcConfig, VesselState};
use otterlink::transport::{FaultProfile, LoopbackLink, RateConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg_unbudgeted() -> NmpcConfig {
    NmpcConfig { time_budget: None, ..NmpcConfig::default() }
}

proptest! {
    #[test]
    fn codec_roundtrip_is_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let msg = random_message(&mut rng);
            let line = msg.encode().unwrap();
            prop_assert_eq!(OtterMessage::decode(&line).unwrap(), msg);
        }
    }

    #[test]
    fn checksum_agrees_with_xor(payload in "[ -#%-)+-~]{0,80}") {
        prop_assert_eq!(compute_checksum(&payload).unwrap(), xor_checksum(&payload));
    }

    #[test]
    fn corrupted_payload_is_rejected(seed in any::<u64>(), pos in any::<prop::sample::Index>(), repl in 0x20u8..0x7f) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let line = random_message(&mut rng).encode().unwrap();
        let star = line.find('*').unwrap();
        let i = 1 + pos.index(star - 1);
        prop_assume!(line.as_bytes()[i] != repl && !b"$*".contains(&repl));
        let mut bytes = line.into_bytes();
        bytes[i] = repl;
        let bad = String::from_utf8(bytes).unwrap();
        prop_assert!(matches!(OtterMessage::decode(&bad), Err(CodecError::Checksum { .. })), "{:?}", bad);
    }

    #[test]
    fn arbitrary_lines_never_panic(line in "\\PC{0,120}") {
        if let Ok(m) = OtterMessage::decode(&line) {
            prop_assert!(m.validate().is_ok());
        }
    }

    #[test]
    fn synchronizer_matches_oracle(seed in any::<u64>(), len in 1usize..=100, mask in 1u8..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = random_trace(&mut rng, len);
        let all = [TopicName::OtterGps, TopicName::OtterImu, TopicName::OtterCogsog];
        let wanted: Vec<TopicName> = (0..3).filter(|i| mask & (1 << i) != 0).map(|i| all[i]).collect();
        let slop = 0.06;
        let mut sync = Synchronizer::new(&wanted, slop).unwrap();
        let got: Vec<_> = trace.iter().filter_map(|s| sync.push(s)).collect();
        let expect = sync_oracle(&trace, &wanted, slop);
        prop_assert_eq!(got.iter().map(constituents).collect::<Vec<_>>(), expect);
        for w in got.windows(2) {
            prop_assert!(w[0].stamp <= w[1].stamp);
        }
        for s in &got {
            prop_assert!(s.max_gap() <= slop + 1e-12);
        }
    }

    #[test]
    fn solver_output_is_feasible_and_descends(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path = PathSpec::figure_eight(20.0).build().unwrap();
        let (state, _, prev) = random_instance(&mut rng);
        let guess: Vec<(f64, f64)> = (0..20).map(|_| (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5))).collect();
        let projected: Vec<(f64, f64)> = guess.iter().map(|&(x, z)| (x.clamp(-1.0, 1.0), z.clamp(-1.0, 1.0))).collect();
        let problem = Problem { prev_input: prev, ..Problem::new(state, &path) };
        let cfg = NmpcConfig { max_iters: 15, ..cfg_unbudgeted() };
        let sol = solve_from(&problem, &cfg, guess).unwrap();
        prop_assert!(sol.inputs.iter().all(|&(x, z)| (-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&z)));
        prop_assert!(sol.cost <= total_cost(&problem, &projected, &cfg) + 1e-12);
        prop_assert!((sol.cost - total_cost(&problem, &sol.inputs, &cfg)).abs() <= 1e-9 * sol.cost.max(1.0));
    }

    #[test]
    fn loopback_faults_are_deterministic_and_fifo(seed in any::<u64>(), loss in 0.0f64..0.5, latency in 0.0f64..0.3) {
        let run = || {
            let mut link = LoopbackLink::new(Some(RateConfig::new(10.0).unwrap()));
            link.inject_fault(FaultProfile { dropout_windows: vec![(2.0, 1.0)], loss_prob: loss, latency, seed }).unwrap();
            let mut got = Vec::new();
            for i in 0..250 {
                let t = i as f64 * 0.02;
                link.send(t, &format!("$POTPOS,{i}*00"));
                link.send(t, &format!("$POTATT,{i}*00"));
                got.extend(link.poll(t).into_iter().map(|r| (r.line, r.stamp)));
            }
            got.extend(link.poll(1e9).into_iter().map(|r| (r.line, r.stamp)));
            got
        };
        let a = run();
        prop_assert_eq!(&a, &run());
        for flow in ["POTPOS", "POTATT"] {
            let seq: Vec<u32> = a
                .iter()
                .filter(|(l, _)| l.contains(flow))
                .map(|(l, _)| l[8..l.find('*').unwrap()].parse().unwrap())
                .collect();
            prop_assert!(seq.windows(2).all(|w| w[0] < w[1]), "{} reordered", flow);
        }
        prop_assert!(a.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn heading_and_wire_bearings_wrap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obc = Obc::new(ObcConfig { start_heading_deg: rng.random_range(0.0..360.0), ..ObcConfig::default() }).unwrap();
        for step in 1..=600 {
            if step % 100 == 1 {
                let cmd = ManualCommand { x: rng.random_range(-1.0..1.0), y: 0.0, z: rng.random_range(-1.0..1.0) };
                obc.handle_command(&OtterMessage::Manual(cmd)).unwrap();
            }
            for line in obc.tick(step as f64 * 0.02).unwrap() {
                match OtterMessage::decode(&line).unwrap() {
                    OtterMessage::Pos(p) => prop_assert!((0.0..360.0).contains(&p.cog)),
                    OtterMessage::Att(a) => prop_assert!((0.0..360.0).contains(&a.yaw)),
                    _ => {}
                }
            }
            prop_assert!((0.0..TAU).contains(&obc.state().psi));
        }
    }
}

#[test]
fn simulator_is_deterministic() {
    let run = || {
        let mut obc = Obc::new(ObcConfig::default()).unwrap();
        obc.handle_command(&OtterMessage::Manual(ManualCommand { x: 0.7, y: 0.0, z: 0.3 })).unwrap();
        let mut lines = Vec::new();
        for step in 1..=1000 {
            lines.extend(obc.tick(step as f64 * 0.02).unwrap());
        }
        (lines, *obc.state())
    };
    assert_eq!(run(), run());
}

/// Warm starting from the shifted previous solution should not lose to a
/// cold start under the same iteration budget. Instances are tracking
/// situations near the path, with the controller's projection window.
#[test]
fn warm_start_dominates_cold_start() {
    let path = PathSpec::figure_eight(20.0).build().unwrap();
    let full = cfg_unbudgeted();
    let limited = NmpcConfig { max_iters: 8, ..full };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let trials = 100;
    let mut wins = 0;
    for _ in 0..trials {
        let s = rng.random_range(0.0..path.length());
        let (n, e) = path.point_at(s);
        let heading = path.project_window((n, e), s - 0.5, s + 0.5).heading;
        let offset = rng.random_range(-3.0..3.0);
        let state = VesselState {
            north: n - offset * heading.sin(),
            east: e + offset * heading.cos(),
            psi: (heading + rng.random_range(-0.5..0.5)).rem_euclid(TAU),
            u: rng.random_range(0.5..1.5),
            v: rng.random_range(-0.1..0.1),
            r: rng.random_range(-0.1..0.1),
            ..VesselState::default()
        };
        let prev = (rng.random_range(0.0..0.6), rng.random_range(-0.3..0.3));
        let window = |st: &VesselState| {
            let s = path.project_window((st.north, st.east), s - 5.0, s + 5.0).s;
            Some((s - 3.0, s + 1.5 * full.horizon_t * st.u.abs().max(1.0) + 3.0))
        };
        let p0 = Problem { window: window(&state), prev_input: prev, ..Problem::new(state, &path) };
        let first = solve_nmpc(&p0, &full, None).unwrap();
        // The plant follows the prediction for one step.
        let s1 = first.predicted[1];
        let next = Problem { window: window(&s1), prev_input: first.first_input(), ..Problem::new(s1, &path) };
        let warm = solve_nmpc(&next, &limited, Some(&first)).unwrap();
        let cold = solve_nmpc(&next, &limited, None).unwrap();
        if warm.cost <= cold.cost + 1e-9 * cold.cost.max(1.0) {
            wins += 1;
        }
    }
    assert!(wins * 100 >= 95 * trials, "warm start won {wins}/{trials}");
}
