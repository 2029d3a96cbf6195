//! C ABI over the otterlink codec, simulated OBC and NMPC solver.
//!
//! Every function returns an [`OtlStatus`]. On failure a message is kept per
//! thread and can be read with [`otl_last_error`]. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use otterlink::nmea::{
    compute_checksum, AttReport, CodecError, CourseSpeedCommand, DriftCommand, ManualCommand, ModeTag,
    OtterMessage, PosReport, StationKeepCommand, StatusReport, TimeReport,
};
use otterlink::nmpc::{solve_nmpc, ControlSolution, NmpcConfig, NmpcError, Path, PathSpec, Problem, ProgressTracker};
use otterlink::sim::{EnvDisturbance, Obc, ObcConfig, SimError, VesselState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Framing = 3,
    Checksum = 4,
    UnknownSentence = 5,
    Malformed = 6,
    OutOfRange = 7,
    BufferTooSmall = 8,
    InvalidArgument = 9,
    NumericFault = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtlKind {
    Pos = 0,
    Att = 1,
    Status = 2,
    Time = 3,
    Drift = 4,
    Manual = 5,
    StationKeep = 6,
    CourseSpeed = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtlMode {
    Drift = 0,
    Manual = 1,
    StationKeep = 2,
    CourseSpeed = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlPos {
    pub utc: f64,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
    pub sog: f64,
    pub cog: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlAtt {
    pub utc: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlStatusReport {
    pub mode: OtlMode,
    pub rpm_port: u32,
    pub rpm_stbd: u32,
    pub temp: f64,
    pub battery: f64,
    pub power: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlTime {
    pub utc_date: u32,
    pub utc_time: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlDrift {
    pub on: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlManual {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlStationKeep {
    pub lat: f64,
    pub lon: f64,
    pub speed: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlCourseSpeed {
    pub course: f64,
    pub speed: f64,
}

/// Payload selected by [`OtlMessage::kind`].
#[repr(C)]
#[derive(Clone, Copy)]
pub union OtlBody {
    pub pos: OtlPos,
    pub att: OtlAtt,
    pub status: OtlStatusReport,
    pub time: OtlTime,
    pub drift: OtlDrift,
    pub manual: OtlManual,
    pub station_keep: OtlStationKeep,
    pub course_speed: OtlCourseSpeed,
}

#[repr(C)]
#[derive(Clone, Copy)]
pub struct OtlMessage {
    pub kind: OtlKind,
    pub body: OtlBody,
}

/// Planar vessel state in the local frame. Heading in radians, clockwise
/// from north; rates in rad/s.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OtlState {
    pub north: f64,
    pub east: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlSimConfig {
    pub telemetry_hz: f64,
    pub start_north: f64,
    pub start_east: f64,
    pub start_heading_deg: f64,
    pub current_north: f64,
    pub current_east: f64,
}

/// Simulated OBC.
pub struct OtlSim {
    obc: Obc,
}

/// NMPC path follower with its warm start and path progress.
pub struct OtlNmpc {
    cfg: NmpcConfig,
    path: Path,
    tracker: ProgressTracker,
    warm: Option<ControlSolution>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: OtlStatus, msg: impl Into<String>) -> OtlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guard(f: impl FnOnce() -> OtlStatus) -> OtlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(OtlStatus::Panic, "internal panic"),
    }
}

fn codec_status(e: &CodecError) -> OtlStatus {
    let s = match e {
        CodecError::Framing(_) => OtlStatus::Framing,
        CodecError::Checksum { .. } => OtlStatus::Checksum,
        CodecError::UnknownSentence(_) => OtlStatus::UnknownSentence,
        CodecError::MalformedField { .. } => OtlStatus::Malformed,
        CodecError::OutOfRange { .. } => OtlStatus::OutOfRange,
    };
    fail(s, e.to_string())
}

fn sim_status(e: &SimError) -> OtlStatus {
    match e {
        SimError::NumericFault(_) => fail(OtlStatus::NumericFault, e.to_string()),
        SimError::Codec(c) => codec_status(c),
        _ => fail(OtlStatus::InvalidArgument, e.to_string()),
    }
}

fn nmpc_status(e: &NmpcError) -> OtlStatus {
    match e {
        NmpcError::NumericFault(_) => fail(OtlStatus::NumericFault, e.to_string()),
        NmpcError::Config(_) => fail(OtlStatus::InvalidArgument, e.to_string()),
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, OtlStatus> {
    if p.is_null() {
        return Err(fail(OtlStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(OtlStatus::InvalidUtf8, "string is not UTF-8"))
}

/// Copies `s` plus a NUL into `buf`. `written` receives `s.len()` either way.
///
/// # Safety
/// `buf` is valid for `cap` bytes; `written` is null or valid.
unsafe fn write_str(s: &str, buf: *mut c_char, cap: usize, written: *mut usize) -> OtlStatus {
    if !written.is_null() {
        *written = s.len();
    }
    if buf.is_null() {
        return fail(OtlStatus::NullPointer, "null buffer");
    }
    if cap < s.len() + 1 {
        return fail(OtlStatus::BufferTooSmall, format!("need {} bytes", s.len() + 1));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    OtlStatus::Ok
}

fn mode_to_c(m: ModeTag) -> OtlMode {
    match m {
        ModeTag::Drift => OtlMode::Drift,
        ModeTag::Manual => OtlMode::Manual,
        ModeTag::StationKeep => OtlMode::StationKeep,
        ModeTag::CourseSpeed => OtlMode::CourseSpeed,
    }
}

fn mode_from_c(m: OtlMode) -> ModeTag {
    match m {
        OtlMode::Drift => ModeTag::Drift,
        OtlMode::Manual => ModeTag::Manual,
        OtlMode::StationKeep => ModeTag::StationKeep,
        OtlMode::CourseSpeed => ModeTag::CourseSpeed,
    }
}

fn message_to_c(m: &OtterMessage) -> OtlMessage {
    match *m {
        OtterMessage::Pos(p) => OtlMessage {
            kind: OtlKind::Pos,
            body: OtlBody {
                pos: OtlPos { utc: p.utc, lat: p.lat, lon: p.lon, alt: p.alt, sog: p.sog, cog: p.cog },
            },
        },
        OtterMessage::Att(a) => OtlMessage {
            kind: OtlKind::Att,
            body: OtlBody {
                att: OtlAtt { utc: a.utc, roll: a.roll, pitch: a.pitch, yaw: a.yaw, p: a.p, q: a.q, r: a.r },
            },
        },
        OtterMessage::Status(s) => OtlMessage {
            kind: OtlKind::Status,
            body: OtlBody {
                status: OtlStatusReport {
                    mode: mode_to_c(s.mode),
                    rpm_port: s.rpm_port,
                    rpm_stbd: s.rpm_stbd,
                    temp: s.temp,
                    battery: s.battery,
                    power: s.power,
                },
            },
        },
        OtterMessage::Time(t) => OtlMessage {
            kind: OtlKind::Time,
            body: OtlBody { time: OtlTime { utc_date: t.utc_date, utc_time: t.utc_time } },
        },
        OtterMessage::Drift(d) => OtlMessage { kind: OtlKind::Drift, body: OtlBody { drift: OtlDrift { on: d.on } } },
        OtterMessage::Manual(c) => OtlMessage {
            kind: OtlKind::Manual,
            body: OtlBody { manual: OtlManual { x: c.x, y: c.y, z: c.z } },
        },
        OtterMessage::StationKeep(c) => OtlMessage {
            kind: OtlKind::StationKeep,
            body: OtlBody { station_keep: OtlStationKeep { lat: c.lat, lon: c.lon, speed: c.speed } },
        },
        OtterMessage::CourseSpeed(c) => OtlMessage {
            kind: OtlKind::CourseSpeed,
            body: OtlBody { course_speed: OtlCourseSpeed { course: c.course, speed: c.speed } },
        },
    }
}

/// # Safety
/// The union member read must match `kind`, which the caller guarantees.
unsafe fn message_from_c(m: &OtlMessage) -> OtterMessage {
    let b = &m.body;
    match m.kind {
        OtlKind::Pos => {
            let p = b.pos;
            OtterMessage::Pos(PosReport { utc: p.utc, lat: p.lat, lon: p.lon, alt: p.alt, sog: p.sog, cog: p.cog })
        }
        OtlKind::Att => {
            let a = b.att;
            OtterMessage::Att(AttReport { utc: a.utc, roll: a.roll, pitch: a.pitch, yaw: a.yaw, p: a.p, q: a.q, r: a.r })
        }
        OtlKind::Status => {
            let s = b.status;
            OtterMessage::Status(StatusReport {
                mode: mode_from_c(s.mode),
                rpm_port: s.rpm_port,
                rpm_stbd: s.rpm_stbd,
                temp: s.temp,
                battery: s.battery,
                power: s.power,
            })
        }
        OtlKind::Time => OtterMessage::Time(TimeReport { utc_date: b.time.utc_date, utc_time: b.time.utc_time }),
        OtlKind::Drift => OtterMessage::Drift(DriftCommand { on: b.drift.on }),
        OtlKind::Manual => OtterMessage::Manual(ManualCommand { x: b.manual.x, y: b.manual.y, z: b.manual.z }),
        OtlKind::StationKeep => OtterMessage::StationKeep(StationKeepCommand {
            lat: b.station_keep.lat,
            lon: b.station_keep.lon,
            speed: b.station_keep.speed,
        }),
        OtlKind::CourseSpeed => OtterMessage::CourseSpeed(CourseSpeedCommand {
            course: b.course_speed.course,
            speed: b.course_speed.speed,
        }),
    }
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `cap > 0`). Returns the full message length.
///
/// # Safety
/// `buf` is null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn otl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Writes the two-digit XOR checksum of `payload` and a NUL into `out`.
///
/// # Safety
/// `payload` is a NUL-terminated string; `out` holds at least 3 bytes.
#[no_mangle]
pub unsafe extern "C" fn otl_checksum(payload: *const c_char, out: *mut c_char) -> OtlStatus {
    guard(|| {
        let payload = match read_str(payload) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match compute_checksum(payload) {
            Ok(hex) => write_str(&hex, out, 3, ptr::null_mut()),
            Err(e) => codec_status(&e),
        }
    })
}

/// Encodes `msg` as one sentence including `\r\n`. `written` receives the
/// sentence length, also when the buffer is too small.
///
/// # Safety
/// `msg` is valid with a body matching its kind; `buf` is valid for `cap`
/// bytes; `written` is null or valid.
#[no_mangle]
pub unsafe extern "C" fn otl_encode(
    msg: *const OtlMessage,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> OtlStatus {
    guard(|| {
        let Some(msg) = msg.as_ref() else {
            return fail(OtlStatus::NullPointer, "null message");
        };
        match message_from_c(msg).encode() {
            Ok(line) => write_str(&line, buf, cap, written),
            Err(e) => codec_status(&e),
        }
    })
}

/// Decodes one sentence, with or without the trailing `\r\n`.
///
/// # Safety
/// `line` is a NUL-terminated string; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn otl_decode(line: *const c_char, out: *mut OtlMessage) -> OtlStatus {
    guard(|| {
        let line = match read_str(line) {
            Ok(s) => s,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(OtlStatus::NullPointer, "null output");
        }
        match OtterMessage::decode(line) {
            Ok(m) => {
                out.write(message_to_c(&m));
                OtlStatus::Ok
            }
            Err(e) => codec_status(&e),
        }
    })
}

/// Defaults used when `otl_sim_new` gets a null config.
#[no_mangle]
pub extern "C" fn otl_sim_config_default() -> OtlSimConfig {
    let d = ObcConfig::default();
    OtlSimConfig {
        telemetry_hz: d.telemetry_hz,
        start_north: d.start_position.0,
        start_east: d.start_position.1,
        start_heading_deg: d.start_heading_deg,
        current_north: d.env.current_north,
        current_east: d.env.current_east,
    }
}

/// # Safety
/// `cfg` is null or valid; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn otl_sim_new(cfg: *const OtlSimConfig, out: *mut *mut OtlSim) -> OtlStatus {
    guard(|| {
        if out.is_null() {
            return fail(OtlStatus::NullPointer, "null output");
        }
        let c = cfg.as_ref().copied().unwrap_or_else(|| otl_sim_config_default());
        let obc_cfg = ObcConfig {
            telemetry_hz: c.telemetry_hz,
            start_position: (c.start_north, c.start_east),
            start_heading_deg: c.start_heading_deg,
            env: EnvDisturbance { current_north: c.current_north, current_east: c.current_east },
            ..ObcConfig::default()
        };
        match Obc::new(obc_cfg) {
            Ok(obc) => {
                out.write(Box::into_raw(Box::new(OtlSim { obc })));
                OtlStatus::Ok
            }
            Err(e) => sim_status(&e),
        }
    })
}

/// # Safety
/// `sim` is null or was returned by `otl_sim_new` and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn otl_sim_free(sim: *mut OtlSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Applies one command sentence.
///
/// # Safety
/// `sim` is a live handle; `line` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn otl_sim_command(sim: *mut OtlSim, line: *const c_char) -> OtlStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(OtlStatus::NullPointer, "null sim");
        };
        let line = match read_str(line) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match sim.obc.handle_line(line) {
            Ok(()) => OtlStatus::Ok,
            Err(e) => sim_status(&e),
        }
    })
}

/// Advances the simulation to `now` (s) and writes the due telemetry
/// sentences, concatenated, into `buf`. `written` receives their total
/// length. On `BUFFER_TOO_SMALL` the sentences are lost; size the buffer
/// for a full tick (1 KiB is ample).
///
/// # Safety
/// `sim` is a live handle; `buf` is valid for `cap` bytes; `written` is
/// null or valid.
#[no_mangle]
pub unsafe extern "C" fn otl_sim_tick(
    sim: *mut OtlSim,
    now: f64,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> OtlStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(OtlStatus::NullPointer, "null sim");
        };
        if !now.is_finite() {
            return fail(OtlStatus::InvalidArgument, "time must be finite");
        }
        match sim.obc.tick(now) {
            Ok(lines) => write_str(&lines.concat(), buf, cap, written),
            Err(e) => sim_status(&e),
        }
    })
}

fn state_to_c(s: &VesselState) -> OtlState {
    OtlState { north: s.north, east: s.east, psi: s.psi, u: s.u, v: s.v, r: s.r }
}

/// # Safety
/// `sim` is a live handle; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn otl_sim_state(sim: *const OtlSim, out: *mut OtlState) -> OtlStatus {
    guard(|| {
        let (Some(sim), false) = (sim.as_ref(), out.is_null()) else {
            return fail(OtlStatus::NullPointer, "null argument");
        };
        out.write(state_to_c(sim.obc.state()));
        OtlStatus::Ok
    })
}

/// NMPC tracking a lemniscate of the given amplitude (m) centred on the
/// local origin, with default weights and horizon.
///
/// # Safety
/// `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn otl_nmpc_new_figure_eight(
    amplitude: f64,
    ref_speed: f64,
    out: *mut *mut OtlNmpc,
) -> OtlStatus {
    guard(|| {
        if out.is_null() {
            return fail(OtlStatus::NullPointer, "null output");
        }
        let cfg = NmpcConfig { ref_speed, ..NmpcConfig::default() };
        if let Err(e) = cfg.validate() {
            return nmpc_status(&e);
        }
        let path = match PathSpec::figure_eight(amplitude).build() {
            Ok(p) => p,
            Err(e) => return nmpc_status(&e),
        };
        out.write(Box::into_raw(Box::new(OtlNmpc {
            cfg,
            path,
            tracker: ProgressTracker::new(),
            warm: None,
        })));
        OtlStatus::Ok
    })
}

/// # Safety
/// `h` is null or was returned by `otl_nmpc_new_figure_eight` and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn otl_nmpc_free(h: *mut OtlNmpc) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// One solve from `state`. `prev` is the previously applied `(x, z)` pair;
/// the first optimal input is written to `out`. Calls should follow the
/// vessel at the control rate so path progress stays unambiguous.
///
/// # Safety
/// `h` is a live handle; `state` is valid; `prev` and `out` point to two
/// doubles each.
#[no_mangle]
pub unsafe extern "C" fn otl_nmpc_solve(
    h: *mut OtlNmpc,
    state: *const OtlState,
    prev: *const f64,
    out: *mut f64,
) -> OtlStatus {
    guard(|| {
        let (Some(h), Some(st)) = (h.as_mut(), state.as_ref()) else {
            return fail(OtlStatus::NullPointer, "null argument");
        };
        if prev.is_null() || out.is_null() {
            return fail(OtlStatus::NullPointer, "null input pair");
        }
        let s = VesselState { north: st.north, east: st.east, psi: st.psi, u: st.u, v: st.v, r: st.r, ..VesselState::default() };
        let pr = h.tracker.update(&h.path, (s.north, s.east));
        let reach = 1.5 * s.u.abs().max(h.cfg.ref_speed) * h.cfg.horizon_t + 3.0;
        let problem = Problem {
            state: s,
            path: &h.path,
            window: Some((pr.s - 3.0, pr.s + reach)),
            prev_input: (*prev, *prev.add(1)),
        };
        match solve_nmpc(&problem, &h.cfg, h.warm.as_ref()) {
            Ok(sol) => {
                let (x, z) = sol.first_input();
                *out = x;
                *out.add(1) = z;
                h.warm = Some(sol);
                OtlStatus::Ok
            }
            Err(e) => {
                h.warm = None;
                nmpc_status(&e)
            }
        }
    })
}
