//! Framing and field codec for the `POT` backseat sentences.
//!
//! Every datagram carries one sentence:
//!
//! ```text
//! $<payload>*<hh>\r\n
//! ```
//!
//! where `<hh>` is the XOR of all payload bytes rendered as two uppercase hex
//! digits. The payload is a comma separated list whose first field names the
//! sentence (`POTPOS`, `POTATT`, `POTSTA`, `POTTIM`, `POTCMD`). Command
//! sentences carry a subcommand (`DRIFT`, `MAN`, `SK`, `CRS`) in the second
//! field. See `docs/protocol.md` for the full grammar.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Talker prefix shared by every sentence.
pub const TALKER: &str = "POT";

/// Top speed used when range checking speed commands.
pub const V_MAX: f64 = 3.0;

const SECONDS_PER_DAY: f64 = 86_400.0;

// Fixed decimal precisions per field class.
const PREC_LATLON: usize = 7;
const PREC_ANGLE: usize = 2;
const PREC_SPEED: usize = 2;
const PREC_FORCE: usize = 3;
const PREC_TIME: usize = 3;
const PREC_MISC: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("framing error: {0}")]
    Framing(String),
    #[error("checksum mismatch: computed {computed}, found {found}")]
    Checksum { computed: String, found: String },
    #[error("unknown sentence `{0}`")]
    UnknownSentence(String),
    #[error("malformed field `{field}`: {reason}")]
    MalformedField { field: &'static str, reason: String },
    #[error("field `{field}` out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
}

pub type Result<T> = std::result::Result<T, CodecError>;

fn check_payload(payload: &str) -> Result<()> {
    for (i, b) in payload.bytes().enumerate() {
        if !b.is_ascii() {
            return Err(CodecError::Framing(format!("non-ASCII byte 0x{b:02X} at {i}")));
        }
        if matches!(b, b'$' | b'*' | b'\r' | b'\n') {
            return Err(CodecError::Framing(format!(
                "forbidden character {:?} at {i}",
                b as char
            )));
        }
    }
    Ok(())
}

/// XOR of all payload bytes as two uppercase hex digits.
pub fn compute_checksum(payload: &str) -> Result<String> {
    check_payload(payload)?;
    let sum = payload.bytes().fold(0u8, |acc, b| acc ^ b);
    Ok(format!("{sum:02X}"))
}

/// A validated `$payload*hh` frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    payload: String,
    checksum: String,
}

impl Frame {
    pub fn new(payload: impl Into<String>) -> Result<Self> {
        let payload = payload.into();
        let checksum = compute_checksum(&payload)?;
        Ok(Self { payload, checksum })
    }

    /// Parses a wire line, verifying the checksum. A trailing CRLF (or bare
    /// LF) is accepted and stripped.
    pub fn parse(line: &str) -> Result<Self> {
        let body = line
            .strip_suffix("\r\n")
            .or_else(|| line.strip_suffix('\n'))
            .unwrap_or(line);
        let rest = body
            .strip_prefix('$')
            .ok_or_else(|| CodecError::Framing("missing leading '$'".into()))?;
        let star = rest
            .rfind('*')
            .ok_or_else(|| CodecError::Framing("missing '*' checksum delimiter".into()))?;
        let (payload, tail) = (&rest[..star], &rest[star + 1..]);
        if tail.len() != 2 || !tail.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(CodecError::Framing(format!(
                "checksum must be two hex digits, got {tail:?}"
            )));
        }
        let computed = compute_checksum(payload)?;
        let found = tail.to_ascii_uppercase();
        if computed != found {
            return Err(CodecError::Checksum { computed, found });
        }
        Ok(Self {
            payload: payload.to_string(),
            checksum: computed,
        })
    }

    pub fn payload(&self) -> &str {
        &self.payload
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn to_line(&self) -> String {
        format!("${}*{}\r\n", self.payload, self.checksum)
    }
}

/// OBC operating mode as carried in status sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeTag {
    Drift,
    Manual,
    StationKeep,
    CourseSpeed,
}

impl ModeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeTag::Drift => "DRIFT",
            ModeTag::Manual => "MAN",
            ModeTag::StationKeep => "SK",
            ModeTag::CourseSpeed => "CRS",
        }
    }
}

impl fmt::Display for ModeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeTag {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DRIFT" => Ok(ModeTag::Drift),
            "MAN" => Ok(ModeTag::Manual),
            "SK" => Ok(ModeTag::StationKeep),
            "CRS" => Ok(ModeTag::CourseSpeed),
            other => Err(CodecError::MalformedField {
                field: "mode",
                reason: format!("unknown mode tag {other:?}"),
            }),
        }
    }
}

/// Position, speed and course over ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosReport {
    /// Seconds of the UTC day.
    pub utc: f64,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
    /// Speed over ground, m/s.
    pub sog: f64,
    /// Course over ground, degrees clockwise from north.
    pub cog: f64,
}

/// Orientation (deg) and angular rates (deg/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttReport {
    pub utc: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub mode: ModeTag,
    /// Propeller speed magnitude; the direction of rotation is not reported.
    pub rpm_port: u32,
    pub rpm_stbd: u32,
    /// Degrees Celsius.
    pub temp: f64,
    /// Remaining capacity, percent.
    pub battery: f64,
    /// Power draw, W.
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeReport {
    /// Calendar date as `yyyymmdd`.
    pub utc_date: u32,
    pub utc_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftCommand {
    pub on: bool,
}

/// Normalized motor inputs. `y` travels on the wire but the OBC ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ManualCommand {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationKeepCommand {
    pub lat: f64,
    pub lon: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourseSpeedCommand {
    pub course: f64,
    pub speed: f64,
}

/// Every sentence that crosses the backseat interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OtterMessage {
    Pos(PosReport),
    Att(AttReport),
    Status(StatusReport),
    Time(TimeReport),
    Drift(DriftCommand),
    Manual(ManualCommand),
    StationKeep(StationKeepCommand),
    CourseSpeed(CourseSpeedCommand),
}

fn finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(CodecError::OutOfRange { field, value })
    }
}

fn within(field: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    finite(field, value)?;
    if value < lo || value > hi {
        return Err(CodecError::OutOfRange { field, value });
    }
    Ok(())
}

fn half_open(field: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    finite(field, value)?;
    if value < lo || value >= hi {
        return Err(CodecError::OutOfRange { field, value });
    }
    Ok(())
}

/// Fixed-precision rendering with negative zero normalized away.
fn render(value: f64, prec: usize) -> String {
    let s = format!("{value:.prec$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// Bearings live in [0, 360); a value that rounds up to 360 is rendered as 0.
fn render_bearing(value: f64) -> String {
    let s = render(value, PREC_ANGLE);
    if s == "360.00" {
        render(0.0, PREC_ANGLE)
    } else {
        s
    }
}

fn render_utc(value: f64) -> String {
    let s = render(value, PREC_TIME);
    if s == "86400.000" {
        render(0.0, PREC_TIME)
    } else {
        s
    }
}

impl OtterMessage {
    /// Sentence identifier including the subcommand for commands, e.g.
    /// `POTPOS` or `POTCMD,MAN`.
    pub fn sentence_id(&self) -> &'static str {
        match self {
            OtterMessage::Pos(_) => "POTPOS",
            OtterMessage::Att(_) => "POTATT",
            OtterMessage::Status(_) => "POTSTA",
            OtterMessage::Time(_) => "POTTIM",
            OtterMessage::Drift(_) => "POTCMD,DRIFT",
            OtterMessage::Manual(_) => "POTCMD,MAN",
            OtterMessage::StationKeep(_) => "POTCMD,SK",
            OtterMessage::CourseSpeed(_) => "POTCMD,CRS",
        }
    }

    pub fn is_command(&self) -> bool {
        matches!(
            self,
            OtterMessage::Drift(_)
                | OtterMessage::Manual(_)
                | OtterMessage::StationKeep(_)
                | OtterMessage::CourseSpeed(_)
        )
    }

    /// Checks the per-variant range invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            OtterMessage::Pos(m) => {
                half_open("utc", m.utc, 0.0, SECONDS_PER_DAY)?;
                within("lat", m.lat, -90.0, 90.0)?;
                within("lon", m.lon, -180.0, 180.0)?;
                finite("alt", m.alt)?;
                within("sog", m.sog, 0.0, f64::MAX)?;
                half_open("cog", m.cog, 0.0, 360.0)
            }
            OtterMessage::Att(m) => {
                half_open("utc", m.utc, 0.0, SECONDS_PER_DAY)?;
                within("roll", m.roll, -180.0, 180.0)?;
                within("pitch", m.pitch, -90.0, 90.0)?;
                half_open("yaw", m.yaw, 0.0, 360.0)?;
                finite("p", m.p)?;
                finite("q", m.q)?;
                finite("r", m.r)
            }
            OtterMessage::Status(m) => {
                finite("temp", m.temp)?;
                within("battery", m.battery, 0.0, 100.0)?;
                within("power", m.power, 0.0, f64::MAX)
            }
            OtterMessage::Time(m) => {
                let (y, mo, d) = (m.utc_date / 10_000, m.utc_date / 100 % 100, m.utc_date % 100);
                if !(1..=9999).contains(&y) || !(1..=12).contains(&mo) || !(1..=31).contains(&d) {
                    return Err(CodecError::OutOfRange {
                        field: "utc_date",
                        value: m.utc_date as f64,
                    });
                }
                half_open("utc_time", m.utc_time, 0.0, SECONDS_PER_DAY)
            }
            OtterMessage::Drift(_) => Ok(()),
            OtterMessage::Manual(m) => {
                within("x", m.x, -1.0, 1.0)?;
                finite("y", m.y)?;
                within("z", m.z, -1.0, 1.0)
            }
            OtterMessage::StationKeep(m) => {
                within("lat", m.lat, -90.0, 90.0)?;
                within("lon", m.lon, -180.0, 180.0)?;
                within("speed", m.speed, 0.0, V_MAX)
            }
            OtterMessage::CourseSpeed(m) => {
                within("course", m.course, 0.0, 360.0)?;
                within("speed", m.speed, 0.0, V_MAX)
            }
        }
    }

    fn payload(&self) -> String {
        let fields: Vec<String> = match self {
            OtterMessage::Pos(m) => vec![
                render_utc(m.utc),
                render(m.lat, PREC_LATLON),
                render(m.lon, PREC_LATLON),
                render(m.alt, PREC_MISC),
                render(m.sog, PREC_SPEED),
                render_bearing(m.cog),
            ],
            OtterMessage::Att(m) => vec![
                render_utc(m.utc),
                render(m.roll, PREC_ANGLE),
                render(m.pitch, PREC_ANGLE),
                render_bearing(m.yaw),
                render(m.p, PREC_ANGLE),
                render(m.q, PREC_ANGLE),
                render(m.r, PREC_ANGLE),
            ],
            OtterMessage::Status(m) => vec![
                m.mode.as_str().to_string(),
                m.rpm_port.to_string(),
                m.rpm_stbd.to_string(),
                render(m.temp, PREC_MISC),
                render(m.battery, PREC_MISC),
                render(m.power, PREC_MISC),
            ],
            OtterMessage::Time(m) => vec![format!("{:08}", m.utc_date), render_utc(m.utc_time)],
            OtterMessage::Drift(m) => vec![if m.on { "1" } else { "0" }.to_string()],
            OtterMessage::Manual(m) => vec![
                render(m.x, PREC_FORCE),
                render(m.y, PREC_FORCE),
                render(m.z, PREC_FORCE),
            ],
            OtterMessage::StationKeep(m) => vec![
                render(m.lat, PREC_LATLON),
                render(m.lon, PREC_LATLON),
                render(m.speed, PREC_SPEED),
            ],
            OtterMessage::CourseSpeed(m) => {
                vec![render(m.course, PREC_ANGLE), render(m.speed, PREC_SPEED)]
            }
        };
        let mut out = String::from(self.sentence_id());
        for f in fields {
            out.push(',');
            out.push_str(&f);
        }
        out
    }

    /// Renders the complete wire line, CRLF included.
    pub fn encode(&self) -> Result<String> {
        self.validate()?;
        Ok(Frame::new(self.payload())?.to_line())
    }

    /// Parses and validates a wire line.
    pub fn decode(line: &str) -> Result<Self> {
        let frame = Frame::parse(line)?;
        let mut fields = frame.payload().split(',');
        let head = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        let tag = head
            .strip_prefix(TALKER)
            .ok_or_else(|| CodecError::UnknownSentence(head.to_string()))?;
        let msg = match tag {
            "POS" => {
                let f = Fields::new(&rest, &["utc", "lat", "lon", "alt", "sog", "cog"])?;
                OtterMessage::Pos(PosReport {
                    utc: f.num(0)?,
                    lat: f.num(1)?,
                    lon: f.num(2)?,
                    alt: f.num(3)?,
                    sog: f.num(4)?,
                    cog: f.num(5)?,
                })
            }
            "ATT" => {
                let f = Fields::new(&rest, &["utc", "roll", "pitch", "yaw", "p", "q", "r"])?;
                OtterMessage::Att(AttReport {
                    utc: f.num(0)?,
                    roll: f.num(1)?,
                    pitch: f.num(2)?,
                    yaw: f.num(3)?,
                    p: f.num(4)?,
                    q: f.num(5)?,
                    r: f.num(6)?,
                })
            }
            "STA" => {
                let f = Fields::new(
                    &rest,
                    &["mode", "rpm_port", "rpm_stbd", "temp", "battery", "power"],
                )?;
                OtterMessage::Status(StatusReport {
                    mode: f.raw(0).parse()?,
                    rpm_port: f.uint(1)?,
                    rpm_stbd: f.uint(2)?,
                    temp: f.num(3)?,
                    battery: f.num(4)?,
                    power: f.num(5)?,
                })
            }
            "TIM" => {
                let f = Fields::new(&rest, &["utc_date", "utc_time"])?;
                if f.raw(0).len() != 8 {
                    return Err(CodecError::MalformedField {
                        field: "utc_date",
                        reason: "expected yyyymmdd".into(),
                    });
                }
                OtterMessage::Time(TimeReport {
                    utc_date: f.uint(0)?,
                    utc_time: f.num(1)?,
                })
            }
            "CMD" => {
                let (sub, args) = rest.split_first().ok_or(CodecError::MalformedField {
                    field: "subcommand",
                    reason: "missing".into(),
                })?;
                match *sub {
                    "DRIFT" => {
                        let f = Fields::new(args, &["on"])?;
                        let on = match f.raw(0) {
                            "1" => true,
                            "0" => false,
                            other => {
                                return Err(CodecError::MalformedField {
                                    field: "on",
                                    reason: format!("expected 0 or 1, got {other:?}"),
                                })
                            }
                        };
                        OtterMessage::Drift(DriftCommand { on })
                    }
                    "MAN" => {
                        let f = Fields::new(args, &["x", "y", "z"])?;
                        OtterMessage::Manual(ManualCommand {
                            x: f.num(0)?,
                            y: f.num(1)?,
                            z: f.num(2)?,
                        })
                    }
                    "SK" => {
                        let f = Fields::new(args, &["lat", "lon", "speed"])?;
                        OtterMessage::StationKeep(StationKeepCommand {
                            lat: f.num(0)?,
                            lon: f.num(1)?,
                            speed: f.num(2)?,
                        })
                    }
                    "CRS" => {
                        let f = Fields::new(args, &["course", "speed"])?;
                        OtterMessage::CourseSpeed(CourseSpeedCommand {
                            course: f.num(0)?,
                            speed: f.num(1)?,
                        })
                    }
                    other => return Err(CodecError::UnknownSentence(format!("{head},{other}"))),
                }
            }
            _ => return Err(CodecError::UnknownSentence(head.to_string())),
        };
        msg.validate()?;
        Ok(msg)
    }
}

impl fmt::Display for OtterMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.payload())
    }
}

struct Fields<'a> {
    values: &'a [&'a str],
    names: &'static [&'static str],
}

impl<'a> Fields<'a> {
    fn new(values: &'a [&'a str], names: &'static [&'static str]) -> Result<Self> {
        if values.len() != names.len() {
            return Err(CodecError::MalformedField {
                field: "field_count",
                reason: format!("expected {} fields, got {}", names.len(), values.len()),
            });
        }
        Ok(Self { values, names })
    }

    fn raw(&self, i: usize) -> &'a str {
        self.values[i]
    }

    fn num(&self, i: usize) -> Result<f64> {
        let s = self.values[i];
        // Rust's float parser also accepts "inf" and "NaN"; the wire grammar
        // only allows plain decimals.
        let plain = !s.is_empty()
            && s.bytes()
                .all(|b| b.is_ascii_digit() || b == b'.' || b == b'-' || b == b'+');
        match s.parse::<f64>() {
            Ok(v) if plain && v.is_finite() => Ok(v),
            _ => Err(CodecError::MalformedField {
                field: self.names[i],
                reason: format!("not a decimal number: {s:?}"),
            }),
        }
    }

    fn uint(&self, i: usize) -> Result<u32> {
        let s = self.values[i];
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(CodecError::MalformedField {
                field: self.names[i],
                reason: format!("not an unsigned integer: {s:?}"),
            });
        }
        s.parse::<u32>().map_err(|e| CodecError::MalformedField {
            field: self.names[i],
            reason: e.to_string(),
        })
    }
}
