//! Broadcaster to listener over real loopback sockets.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use otterlink::client::{BackseatClient, ClientError};
use otterlink::transport::{
    mono_now, open_broadcaster, Broadcaster, Endpoint, FaultProfile, Listener, RateConfig, Received, SendAck,
    TransportError,
};

fn pair(hz: f64) -> (Broadcaster, Listener) {
    let l = Listener::bind("127.0.0.1:0".parse().unwrap()).unwrap();
    let b = open_broadcaster(Endpoint::new(l.local_addr()).unwrap(), RateConfig::new(hz).unwrap()).unwrap();
    (b, l)
}

fn drain(l: &Listener, for_: Duration) -> Vec<Received> {
    let end = Instant::now() + for_;
    let mut out = Vec::new();
    while Instant::now() < end {
        out.extend(l.poll(Duration::from_millis(20)).unwrap());
    }
    out
}

fn line(flow: usize, i: usize) -> String {
    format!("$F{flow},{i}*00\r\n")
}

#[test]
fn pacing_spaces_a_flow_at_the_rate() {
    let (b, l) = pair(20.0);
    for i in 0..10 {
        b.send(&line(0, i)).unwrap();
    }
    let got = drain(&l, Duration::from_millis(700));
    assert_eq!(got.len(), 10);
    let spacing = (got[9].stamp - got[0].stamp) / 9.0;
    assert!((spacing - 0.05).abs() < 0.01, "{spacing}");
    let order: Vec<String> = got.iter().map(|r| r.line.clone()).collect();
    assert_eq!(order, (0..10).map(|i| line(0, i)).collect::<Vec<_>>());
}

#[test]
fn latency_delays_every_datagram() {
    let (b, l) = pair(20.0);
    b.inject_fault(FaultProfile { latency: 0.2, ..Default::default() }).unwrap();
    let mut sent = Vec::new();
    for f in 0..5 {
        sent.push(mono_now());
        b.send(&line(f, 0)).unwrap();
    }
    let got = drain(&l, Duration::from_millis(500));
    assert_eq!(got.len(), 5);
    for (r, t) in got.iter().zip(&sent) {
        let delay = r.stamp - t;
        assert!((0.19..0.26).contains(&delay), "{delay}");
    }
}

#[test]
fn seeded_loss_drops_a_reproducible_subset() {
    let run = || {
        let (b, l) = pair(20.0);
        b.inject_fault(FaultProfile { loss_prob: 0.3, seed: 11, ..Default::default() }).unwrap();
        let mut acks = Vec::new();
        let mut got = HashSet::new();
        // Distinct flows so pacing does not stretch the run; small batches
        // keep the receive buffer from overflowing.
        for batch in 0..20 {
            for f in 0..20 {
                acks.push(b.send(&line(batch * 20 + f, 0)).unwrap());
            }
            got.extend(l.poll(Duration::from_millis(10)).unwrap().into_iter().map(|r| r.line));
        }
        got.extend(drain(&l, Duration::from_millis(200)).into_iter().map(|r| r.line));
        (acks, got, b.stats())
    };
    let (acks, got, stats) = run();
    let dropped = acks.iter().filter(|a| **a == SendAck::Dropped).count();
    assert!((80..=160).contains(&dropped), "{dropped}");
    assert_eq!(stats.dropped as usize, dropped);
    assert_eq!(stats.sent as usize, 400 - dropped);
    let admitted: HashSet<String> =
        acks.iter().enumerate().filter(|(_, a)| **a == SendAck::Queued).map(|(i, _)| line(i, 0)).collect();
    assert_eq!(got, admitted);
    let (acks2, _, _) = run();
    assert_eq!(acks, acks2);
}

#[test]
fn dropout_window_silences_the_link() {
    let (b, l) = pair(20.0);
    b.inject_fault(FaultProfile { dropout_windows: vec![(0.3, 0.4)], ..Default::default() }).unwrap();
    let start = Instant::now();
    let mut got = Vec::new();
    let mut i = 0;
    while start.elapsed() < Duration::from_millis(1000) {
        b.send(&line(0, i)).unwrap();
        i += 1;
        got.extend(l.poll(Duration::from_millis(50)).unwrap());
    }
    got.extend(drain(&l, Duration::from_millis(100)));
    let stamps: Vec<f64> = got.iter().map(|r| r.stamp).collect();
    let longest = stamps.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    assert!(longest > 0.35 && longest < 0.55, "{longest}");
    assert!(got.len() >= 8, "{}", got.len());
}

#[test]
fn second_client_on_same_port_is_refused() {
    let first = Listener::bind("127.0.0.1:0".parse().unwrap()).unwrap();
    let telemetry = Endpoint::new(first.local_addr()).unwrap();
    let command = Endpoint::loopback(first.local_addr().port().wrapping_add(1).max(1024)).unwrap();
    let err = BackseatClient::connect(telemetry, command).err().expect("port is taken");
    assert!(matches!(err, ClientError::Transport(TransportError::Bind { .. })), "{err}");
}

#[test]
fn closed_broadcaster_rejects_sends() {
    let (b, _l) = pair(10.0);
    b.close();
    assert!(matches!(b.send(&line(0, 0)), Err(TransportError::Closed)));
}
