//! Newest-within-window synchronization of `otter_gps`, `otter_imu` and
//! `otter_cogsog`.
//!
//! Each arriving message is a pivot. For every other requested topic the
//! newest unused message stamped within `[pivot - slop, pivot]` is taken; if
//! every topic has one, a [`SyncedSample`] is emitted and its constituents are
//! consumed. Otherwise the pivot is queued for later pivots. Stamps must be
//! nondecreasing (receive order); older stamps are rejected and counted.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::topics::{CogSog, GpsFix, ImuSample, TopicName, TopicPayload, TopicSample};
use super::ClientError;

/// Default window at 10 Hz telemetry, s.
pub const DEFAULT_SLOP: f64 = 0.06;

const SLOTS: [TopicName; 3] = [TopicName::OtterGps, TopicName::OtterImu, TopicName::OtterCogsog];

fn slot(topic: TopicName) -> Option<usize> {
    SLOTS.iter().position(|t| *t == topic)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SyncedSample {
    pub gps: Option<GpsFix>,
    pub imu: Option<ImuSample>,
    pub cogsog: Option<CogSog>,
    /// Stamp of the pivot message.
    pub stamp: f64,
    /// Stamps of the constituents in `[gps, imu, cogsog]` order.
    pub stamps: [Option<f64>; 3],
}

impl SyncedSample {
    /// Largest pairwise stamp difference among the constituents.
    pub fn max_gap(&self) -> f64 {
        let s: Vec<f64> = self.stamps.iter().flatten().copied().collect();
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        if s.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synchronizer {
    want: [bool; 3],
    slop: f64,
    queues: [VecDeque<TopicSample>; 3],
    last_stamp: f64,
    out_of_order: u64,
    emitted: u64,
}

impl Synchronizer {
    pub fn new(topics: &[TopicName], slop: f64) -> Result<Self, ClientError> {
        if topics.is_empty() {
            return Err(ClientError::Usage("synchronize needs at least one topic".into()));
        }
        if !(slop.is_finite() && slop > 0.0) {
            return Err(ClientError::Usage(format!("slop must be positive, got {slop}")));
        }
        let mut want = [false; 3];
        for &t in topics {
            let i = slot(t).ok_or_else(|| {
                ClientError::Usage(format!("{t} cannot be synchronized (gps, imu, cogsog only)"))
            })?;
            want[i] = true;
        }
        Ok(Self {
            want,
            slop,
            queues: Default::default(),
            last_stamp: f64::NEG_INFINITY,
            out_of_order: 0,
            emitted: 0,
        })
    }

    pub fn slop(&self) -> f64 {
        self.slop
    }

    pub fn out_of_order(&self) -> u64 {
        self.out_of_order
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn push(&mut self, sample: &TopicSample) -> Option<SyncedSample> {
        let i = slot(sample.topic).filter(|&i| self.want[i])?;
        if sample.stamp < self.last_stamp || !sample.stamp.is_finite() {
            self.out_of_order += 1;
            return None;
        }
        self.last_stamp = sample.stamp;
        let lo = sample.stamp - self.slop;
        for q in &mut self.queues {
            while q.front().is_some_and(|m| m.stamp < lo) {
                q.pop_front();
            }
        }
        let mut picks: [Option<usize>; 3] = [None; 3];
        for (j, pick) in picks.iter_mut().enumerate() {
            if !self.want[j] || j == i {
                continue;
            }
            // Queues are stamp-ordered, so the newest in-window entry is the
            // last one; everything left after pruning is in the window.
            match self.queues[j].len() {
                0 => {
                    self.queues[i].push_back(*sample);
                    return None;
                }
                n => *pick = Some(n - 1),
            }
        }
        let mut out = SyncedSample {
            stamp: sample.stamp,
            ..Default::default()
        };
        for (j, pick) in picks.iter().enumerate() {
            let constituent = if j == i {
                Some(*sample)
            } else {
                pick.and_then(|k| self.queues[j].remove(k))
            };
            if let Some(m) = constituent {
                out.stamps[j] = Some(m.stamp);
                match m.payload {
                    TopicPayload::Gps(g) => out.gps = Some(g),
                    TopicPayload::Imu(m) => out.imu = Some(m),
                    TopicPayload::CogSog(c) => out.cogsog = Some(c),
                    _ => unreachable!("slot topics carry matching payloads"),
                }
            }
        }
        self.emitted += 1;
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gps(t: f64) -> TopicSample {
        TopicSample {
            topic: TopicName::OtterGps,
            stamp: t,
            payload: TopicPayload::Gps(GpsFix { lat: t, lon: 0.0, alt: 0.0 }),
        }
    }
    fn imu(t: f64) -> TopicSample {
        TopicSample {
            topic: TopicName::OtterImu,
            stamp: t,
            payload: TopicPayload::Imu(ImuSample { roll: 0.0, pitch: 0.0, yaw: t, p: 0.0, q: 0.0, r: 0.0 }),
        }
    }
    fn cogsog(t: f64) -> TopicSample {
        TopicSample {
            topic: TopicName::OtterCogsog,
            stamp: t,
            payload: TopicPayload::CogSog(CogSog { cog: t, sog: 0.0, vel_north: 0.0, vel_east: 0.0 }),
        }
    }

    fn all() -> Synchronizer {
        Synchronizer::new(&SLOTS, 0.05).unwrap()
    }

    #[test]
    fn three_within_window() {
        let mut s = all();
        assert!(s.push(&gps(1.0)).is_none());
        assert!(s.push(&imu(1.02)).is_none());
        let out = s.push(&cogsog(1.04)).unwrap();
        assert_eq!(out.stamp, 1.04);
        assert!(out.max_gap() <= 0.05 + 1e-12);
        assert_eq!(out.gps.unwrap().lat, 1.0);
    }

    #[test]
    fn missing_topic_emits_nothing() {
        let mut s = all();
        for k in 0..10 {
            let t = k as f64 * 0.1;
            assert!(s.push(&gps(t)).is_none());
            assert!(s.push(&cogsog(t)).is_none());
        }
    }

    #[test]
    fn no_stale_pairing_across_gap() {
        let mut s = all();
        s.push(&gps(0.0));
        s.push(&cogsog(0.0));
        // imu resumes after a 3 s gap; old gps/cogsog must not be used.
        assert!(s.push(&imu(3.0)).is_none());
        s.push(&gps(3.01));
        let out = s.push(&cogsog(3.02)).unwrap();
        assert_eq!(out.stamps, [Some(3.01), Some(3.0), Some(3.02)]);
    }

    #[test]
    fn each_message_used_once() {
        let mut s = Synchronizer::new(&[TopicName::OtterGps, TopicName::OtterImu], 0.05).unwrap();
        s.push(&gps(1.0));
        assert!(s.push(&imu(1.01)).is_some());
        assert!(s.push(&imu(1.02)).is_none());
    }

    #[test]
    fn rejects_stale_and_bad_config() {
        let mut s = all();
        s.push(&gps(2.0));
        assert!(s.push(&imu(1.0)).is_none());
        assert_eq!(s.out_of_order(), 1);
        assert!(Synchronizer::new(&[], 0.05).is_err());
        assert!(Synchronizer::new(&[TopicName::OtterStatus], 0.05).is_err());
        assert!(Synchronizer::new(&[TopicName::OtterGps], 0.0).is_err());
    }

    #[test]
    fn single_topic_passes_through() {
        let mut s = Synchronizer::new(&[TopicName::OtterImu], 0.05).unwrap();
        assert!(s.push(&imu(0.0)).is_some());
        assert!(s.push(&gps(0.0)).is_none());
    }
}
