use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nmea::{
    CourseSpeedCommand, DriftCommand, ManualCommand, OtterMessage, StationKeepCommand,
    StatusReport,
};

use super::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicName {
    OtterGps,
    OtterGpsTime,
    OtterImu,
    OtterStatus,
    OtterCogsog,
    DriftCmds,
    ControlCmds,
    StationKeepingCmds,
    CourseSpeedCmds,
}

impl TopicName {
    pub const ALL: [TopicName; 9] = [
        TopicName::OtterGps,
        TopicName::OtterGpsTime,
        TopicName::OtterImu,
        TopicName::OtterStatus,
        TopicName::OtterCogsog,
        TopicName::DriftCmds,
        TopicName::ControlCmds,
        TopicName::StationKeepingCmds,
        TopicName::CourseSpeedCmds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopicName::OtterGps => "otter_gps",
            TopicName::OtterGpsTime => "otter_gps_time",
            TopicName::OtterImu => "otter_imu",
            TopicName::OtterStatus => "otter_status",
            TopicName::OtterCogsog => "otter_cogsog",
            TopicName::DriftCmds => "drift_cmds",
            TopicName::ControlCmds => "control_cmds",
            TopicName::StationKeepingCmds => "station_keeping_cmds",
            TopicName::CourseSpeedCmds => "course_speed_cmds",
        }
    }

    pub fn is_command(self) -> bool {
        matches!(
            self,
            TopicName::DriftCmds
                | TopicName::ControlCmds
                | TopicName::StationKeepingCmds
                | TopicName::CourseSpeedCmds
        )
    }

    pub fn is_telemetry(self) -> bool {
        !self.is_command()
    }

    /// Payload field names, in CSV column order.
    pub fn fields(self) -> &'static [&'static str] {
        match self {
            TopicName::OtterGps => &["lat", "lon", "alt"],
            TopicName::OtterGpsTime => &["utc_date", "utc_time"],
            TopicName::OtterImu => &["roll", "pitch", "yaw", "p", "q", "r"],
            TopicName::OtterStatus => &["mode", "rpm_port", "rpm_stbd", "temp", "battery", "power"],
            TopicName::OtterCogsog => &["cog", "sog", "vel_north", "vel_east"],
            TopicName::DriftCmds => &["on"],
            TopicName::ControlCmds => &["x", "y", "z"],
            TopicName::StationKeepingCmds => &["lat", "lon", "speed"],
            TopicName::CourseSpeedCmds => &["course", "speed"],
        }
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopicName {
    type Err = ClientError;

    fn from_str(s: &str) -> Result<Self, ClientError> {
        TopicName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ClientError::Usage(format!("unknown topic {s:?}")))
    }
}

/// `otter_gps`: position fix, degrees and metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

/// `otter_gps_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsTime {
    pub utc_date: u32,
    pub utc_time: f64,
}

/// `otter_imu`: orientation in degrees, rates in deg/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

/// `otter_cogsog`: course and speed over ground plus the local velocity
/// vector they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CogSog {
    pub cog: f64,
    pub sog: f64,
    pub vel_north: f64,
    pub vel_east: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopicPayload {
    Gps(GpsFix),
    GpsTime(GpsTime),
    Imu(ImuSample),
    Status(StatusReport),
    CogSog(CogSog),
    Drift(DriftCommand),
    Control(ManualCommand),
    StationKeeping(StationKeepCommand),
    CourseSpeed(CourseSpeedCommand),
}

impl TopicPayload {
    pub fn topic(&self) -> TopicName {
        match self {
            TopicPayload::Gps(_) => TopicName::OtterGps,
            TopicPayload::GpsTime(_) => TopicName::OtterGpsTime,
            TopicPayload::Imu(_) => TopicName::OtterImu,
            TopicPayload::Status(_) => TopicName::OtterStatus,
            TopicPayload::CogSog(_) => TopicName::OtterCogsog,
            TopicPayload::Drift(_) => TopicName::DriftCmds,
            TopicPayload::Control(_) => TopicName::ControlCmds,
            TopicPayload::StationKeeping(_) => TopicName::StationKeepingCmds,
            TopicPayload::CourseSpeed(_) => TopicName::CourseSpeedCmds,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("payload structs serialize")
    }

    /// Reads a payload back using the topic to select the schema.
    pub fn from_json(topic: TopicName, value: serde_json::Value) -> Result<Self, serde_json::Error> {
        use serde_json::from_value as v;
        Ok(match topic {
            TopicName::OtterGps => TopicPayload::Gps(v(value)?),
            TopicName::OtterGpsTime => TopicPayload::GpsTime(v(value)?),
            TopicName::OtterImu => TopicPayload::Imu(v(value)?),
            TopicName::OtterStatus => TopicPayload::Status(v(value)?),
            TopicName::OtterCogsog => TopicPayload::CogSog(v(value)?),
            TopicName::DriftCmds => TopicPayload::Drift(v(value)?),
            TopicName::ControlCmds => TopicPayload::Control(v(value)?),
            TopicName::StationKeepingCmds => TopicPayload::StationKeeping(v(value)?),
            TopicName::CourseSpeedCmds => TopicPayload::CourseSpeed(v(value)?),
        })
    }

    /// The wire message for a command payload.
    pub fn to_command(&self) -> Option<OtterMessage> {
        match *self {
            TopicPayload::Drift(m) => Some(OtterMessage::Drift(m)),
            TopicPayload::Control(m) => Some(OtterMessage::Manual(m)),
            TopicPayload::StationKeeping(m) => Some(OtterMessage::StationKeep(m)),
            TopicPayload::CourseSpeed(m) => Some(OtterMessage::CourseSpeed(m)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicSample {
    pub topic: TopicName,
    /// Monotonic receive time, s.
    pub stamp: f64,
    pub payload: TopicPayload,
}

/// Splits a decoded sentence into the topic samples it populates. A position
/// report feeds both `otter_gps` and `otter_cogsog`.
pub fn topic_samples(msg: &OtterMessage, stamp: f64) -> Vec<TopicSample> {
    let payloads = match *msg {
        OtterMessage::Pos(p) => {
            let (s, c) = p.cog.to_radians().sin_cos();
            vec![
                TopicPayload::Gps(GpsFix { lat: p.lat, lon: p.lon, alt: p.alt }),
                TopicPayload::CogSog(CogSog {
                    cog: p.cog,
                    sog: p.sog,
                    vel_north: p.sog * c,
                    vel_east: p.sog * s,
                }),
            ]
        }
        OtterMessage::Att(a) => vec![TopicPayload::Imu(ImuSample {
            roll: a.roll,
            pitch: a.pitch,
            yaw: a.yaw,
            p: a.p,
            q: a.q,
            r: a.r,
        })],
        OtterMessage::Status(s) => vec![TopicPayload::Status(s)],
        OtterMessage::Time(t) => vec![TopicPayload::GpsTime(GpsTime {
            utc_date: t.utc_date,
            utc_time: t.utc_time,
        })],
        OtterMessage::Drift(m) => vec![TopicPayload::Drift(m)],
        OtterMessage::Manual(m) => vec![TopicPayload::Control(m)],
        OtterMessage::StationKeep(m) => vec![TopicPayload::StationKeeping(m)],
        OtterMessage::CourseSpeed(m) => vec![TopicPayload::CourseSpeed(m)],
    };
    payloads
        .into_iter()
        .map(|payload| TopicSample {
            topic: payload.topic(),
            stamp,
            payload,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmea::PosReport;

    #[test]
    fn names_roundtrip() {
        for t in TopicName::ALL {
            assert_eq!(t.as_str().parse::<TopicName>().unwrap(), t);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.as_str()));
        }
        assert!("otter_lidar".parse::<TopicName>().is_err());
    }

    #[test]
    fn pos_feeds_gps_and_cogsog() {
        let pos = OtterMessage::Pos(PosReport {
            utc: 1.0,
            lat: 44.0,
            lon: -76.0,
            alt: 1.5,
            sog: 2.0,
            cog: 90.0,
        });
        let samples = topic_samples(&pos, 3.0);
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].topic, TopicName::OtterGps);
        let TopicPayload::CogSog(c) = samples[1].payload else { panic!() };
        assert!((c.vel_east - 2.0).abs() < 1e-12 && c.vel_north.abs() < 1e-12);
    }

    #[test]
    fn payload_json_matches_schema() {
        let p = TopicPayload::Control(ManualCommand { x: 0.3, y: 0.0, z: -0.1 });
        let json = p.to_json();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        let mut expected: Vec<_> = TopicName::ControlCmds.fields().iter().map(|s| s.to_string()).collect();
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
        assert_eq!(TopicPayload::from_json(TopicName::ControlCmds, json).unwrap(), p);
    }
}
