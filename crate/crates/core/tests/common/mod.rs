//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use otterlink::client::{CogSog, GpsFix, ImuSample, SyncedSample, TopicName, TopicPayload, TopicSample};
use otterlink::nmea::{
    AttReport, CourseSpeedCommand, DriftCommand, ManualCommand, ModeTag, OtterMessage, PosReport,
    StationKeepCommand, StatusReport, TimeReport,
};
use otterlink::nmpc::{cost, predict, NmpcConfig, Problem};
use otterlink::sim::VesselState;
use rand::{Rng, RngCore};

/// XOR of the payload bytes, computed without the codec.
pub fn xor_checksum(payload: &str) -> String {
    let mut acc = 0u8;
    for b in payload.bytes() {
        acc ^= b;
    }
    format!("{acc:02X}")
}

/// A value on the decimal grid `10^-prec` inside `[lo, hi]`.
fn grid(rng: &mut impl RngCore, lo: f64, hi: f64, prec: i32) -> f64 {
    let scale = 10f64.powi(prec);
    let k = rng.random_range((lo * scale).ceil() as i64..=(hi * scale).floor() as i64);
    k as f64 / scale
}

/// A valid message whose fields sit on the wire precision grid,
/// so a roundtrip must reproduce it exactly.
pub fn random_message(rng: &mut impl RngCore) -> OtterMessage {
    let mode = [ModeTag::Drift, ModeTag::Manual, ModeTag::StationKeep, ModeTag::CourseSpeed][rng.random_range(0..4)];
    match rng.random_range(0..8) {
        0 => OtterMessage::Pos(PosReport {
            utc: grid(rng, 0.0, 86_399.999, 3),
            lat: grid(rng, -90.0, 90.0, 7),
            lon: grid(rng, -180.0, 180.0, 7),
            alt: grid(rng, -50.0, 50.0, 2),
            sog: grid(rng, 0.0, 5.0, 2),
            cog: grid(rng, 0.0, 359.99, 2),
        }),
        1 => OtterMessage::Att(AttReport {
            utc: grid(rng, 0.0, 86_399.999, 3),
            roll: grid(rng, -180.0, 180.0, 2),
            pitch: grid(rng, -90.0, 90.0, 2),
            yaw: grid(rng, 0.0, 359.99, 2),
            p: grid(rng, -100.0, 100.0, 2),
            q: grid(rng, -100.0, 100.0, 2),
            r: grid(rng, -100.0, 100.0, 2),
        }),
        2 => OtterMessage::Status(StatusReport {
            mode,
            rpm_port: rng.random_range(0..3000),
            rpm_stbd: rng.random_range(0..3000),
            temp: grid(rng, -20.0, 60.0, 2),
            battery: grid(rng, 0.0, 100.0, 2),
            power: grid(rng, 0.0, 2000.0, 2),
        }),
        3 => OtterMessage::Time(TimeReport {
            utc_date: rng.random_range(2000..2100) * 10_000 + rng.random_range(1..=12) * 100 + rng.random_range(1..=28),
            utc_time: grid(rng, 0.0, 86_399.999, 3),
        }),
        4 => OtterMessage::Drift(DriftCommand { on: rng.random() }),
        5 => OtterMessage::Manual(ManualCommand {
            x: grid(rng, -1.0, 1.0, 3),
            y: grid(rng, -1.0, 1.0, 3),
            z: grid(rng, -1.0, 1.0, 3),
        }),
        6 => OtterMessage::StationKeep(StationKeepCommand {
            lat: grid(rng, -90.0, 90.0, 7),
            lon: grid(rng, -180.0, 180.0, 7),
            speed: grid(rng, 0.0, 3.0, 2),
        }),
        _ => OtterMessage::CourseSpeed(CourseSpeedCommand {
            course: grid(rng, 0.0, 360.0, 2),
            speed: grid(rng, 0.0, 3.0, 2),
        }),
    }
}

const SYNC_TOPICS: [TopicName; 3] = [TopicName::OtterGps, TopicName::OtterImu, TopicName::OtterCogsog];

fn sample(topic: TopicName, stamp: f64, tag: f64) -> TopicSample {
    let payload = match topic {
        TopicName::OtterGps => TopicPayload::Gps(GpsFix { lat: tag, lon: 0.0, alt: 0.0 }),
        TopicName::OtterImu => TopicPayload::Imu(ImuSample { roll: 0.0, pitch: 0.0, yaw: tag, p: 0.0, q: 0.0, r: 0.0 }),
        _ => TopicPayload::CogSog(CogSog { cog: tag, sog: 0.0, vel_north: 0.0, vel_east: 0.0 }),
    };
    TopicSample { topic, stamp, payload }
}

/// Receive-ordered trace of the three synchronized topics with jittered,
/// occasionally missing and occasionally tied stamps. Each payload carries
/// its trace index so constituents can be traced back.
pub fn random_trace(rng: &mut impl RngCore, len: usize) -> Vec<TopicSample> {
    let mut t = 0.0;
    (0..len)
        .map(|i| {
            if rng.random_bool(0.85) {
                t += grid(rng, 0.0, 0.08, 3);
            }
            let topic = SYNC_TOPICS[rng.random_range(0..3)];
            sample(topic, t, i as f64)
        })
        .collect()
}

fn index_of(s: &TopicSample) -> usize {
    match s.payload {
        TopicPayload::Gps(g) => g.lat as usize,
        TopicPayload::Imu(m) => m.yaw as usize,
        TopicPayload::CogSog(c) => c.cog as usize,
        _ => unreachable!(),
    }
}

/// Trace indices of a sample's constituents in `[gps, imu, cogsog]` order.
pub fn constituents(s: &SyncedSample) -> [Option<usize>; 3] {
    [
        s.gps.map(|g| g.lat as usize),
        s.imu.map(|m| m.yaw as usize),
        s.cogsog.map(|c| c.cog as usize),
    ]
}

/// Brute-force newest-within-window matcher: for each arrival, every other
/// wanted topic takes its newest unused earlier arrival stamped within
/// `[pivot - slop, pivot]`; a full set is emitted and marked used.
pub fn sync_oracle(trace: &[TopicSample], wanted: &[TopicName], slop: f64) -> Vec<[Option<usize>; 3]> {
    let mut used = vec![false; trace.len()];
    let mut out = Vec::new();
    for (i, pivot) in trace.iter().enumerate() {
        if !wanted.contains(&pivot.topic) {
            continue;
        }
        let mut picks = [None; 3];
        let mut complete = true;
        for (slot, topic) in SYNC_TOPICS.iter().enumerate() {
            if !wanted.contains(topic) {
                continue;
            }
            if *topic == pivot.topic {
                picks[slot] = Some(i);
                continue;
            }
            let best = (0..i)
                .filter(|&j| !used[j] && trace[j].topic == *topic)
                .filter(|&j| trace[j].stamp >= pivot.stamp - slop && trace[j].stamp <= pivot.stamp)
                .max_by(|&a, &b| trace[a].stamp.total_cmp(&trace[b].stamp).then(a.cmp(&b)));
            match best {
                Some(j) => picks[slot] = Some(j),
                None => complete = false,
            }
        }
        if complete {
            for j in picks.iter().flatten() {
                used[*j] = true;
            }
            out.push(picks);
        }
    }
    debug_assert!(trace.iter().enumerate().all(|(i, s)| index_of(s) == i));
    out
}

pub fn total_cost(problem: &Problem<'_>, inputs: &[(f64, f64)], cfg: &NmpcConfig) -> f64 {
    let traj = predict(&problem.state, inputs, cfg.dt(), &cfg.model).unwrap();
    cost(&traj, inputs, problem, &cfg.weights, cfg.ref_speed)
}

/// Random state near a 20 m lemniscate and inputs kept off the saturation
/// kinks of the thrust allocation, where the cost is not differentiable.
pub fn random_instance(rng: &mut impl RngCore) -> (VesselState, Vec<(f64, f64)>, (f64, f64)) {
    let state = VesselState {
        north: rng.random_range(-25.0..25.0),
        east: rng.random_range(-25.0..25.0),
        psi: rng.random_range(0.0..std::f64::consts::TAU),
        u: rng.random_range(-0.5..2.5),
        v: rng.random_range(-0.3..0.3),
        r: rng.random_range(-0.4..0.4),
        ..VesselState::default()
    };
    let inputs = (0..20)
        .map(|_| loop {
            let x: f64 = rng.random_range(-0.9..0.9);
            let z: f64 = rng.random_range(-0.6..0.6);
            if ((x + z).abs() - 1.0).abs() > 1e-3 && ((x - z).abs() - 1.0).abs() > 1e-3 {
                break (x, z);
            }
        })
        .collect();
    let prev = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    (state, inputs, prev)
}

/// Largest component error relative to the largest numeric component.
pub fn max_rel_error(analytic: &[(f64, f64)], numeric: &[(f64, f64)]) -> f64 {
    let flat = |g: &[(f64, f64)]| g.iter().flat_map(|p| [p.0, p.1]).collect::<Vec<_>>();
    let (a, n) = (flat(analytic), flat(numeric));
    let scale = n.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    a.iter().zip(&n).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

pub fn central_difference(problem: &Problem<'_>, inputs: &[(f64, f64)], cfg: &NmpcConfig) -> Vec<(f64, f64)> {
    let h = 1e-6;
    let mut out = vec![(0.0, 0.0); inputs.len()];
    for k in 0..inputs.len() {
        for c in 0..2 {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            if c == 0 {
                plus[k].0 += h;
                minus[k].0 -= h;
            } else {
                plus[k].1 += h;
                minus[k].1 -= h;
            }
            let d = (total_cost(problem, &plus, cfg) - total_cost(problem, &minus, cfg)) / (2.0 * h);
            if c == 0 {
                out[k].0 = d;
            } else {
                out[k].1 = d;
            }
        }
    }
    out
}
