//! C ABI over the seahaul library.
//!
//! Every fallible call returns a [`SeahaulStatus`]. On failure a message is
//! kept per thread and can be read with [`seahaul_last_error`]. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use seahaul::mission::{attachment_check, MissionPhase};
use seahaul::planner::{plan_search, DeckPose};
use seahaul::runner::MissionRun;
use seahaul::sim::RotorTelemetry;
use seahaul::uwb::{multilaterate, AnchorSet};
use seahaul::{Error, ScenarioConfig, Vec3};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeahaulStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Config = 4,
    Degenerate = 5,
    NonFinite = 6,
    Io = 7,
    BufferTooSmall = 8,
    Finished = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeahaulPhase {
    TakeOff = 0,
    Search = 1,
    Land = 2,
    Adsorb = 3,
    Return = 4,
    Done = 5,
    Aborted = 6,
}

impl From<MissionPhase> for SeahaulPhase {
    fn from(p: MissionPhase) -> Self {
        match p {
            MissionPhase::TakeOff => SeahaulPhase::TakeOff,
            MissionPhase::Search => SeahaulPhase::Search,
            MissionPhase::Land => SeahaulPhase::Land,
            MissionPhase::Adsorb => SeahaulPhase::Adsorb,
            MissionPhase::Return => SeahaulPhase::Return,
            MissionPhase::Done => SeahaulPhase::Done,
            MissionPhase::Aborted => SeahaulPhase::Aborted,
        }
    }
}

/// One control tick as seen from outside.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SeahaulTick {
    pub t: f64,
    pub phase: u32,
    /// True position in the world frame.
    pub truth: [f64; 3],
    pub true_yaw: f64,
    /// Nonzero when `estimate` holds a fused pose.
    pub has_estimate: u8,
    pub estimate: [f64; 3],
    /// Commanded body velocity and yaw rate.
    pub command: [f64; 4],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SeahaulWaypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

/// A simulated mission with the full onboard stack.
pub struct SeahaulRun {
    inner: MissionRun,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> SeahaulStatus {
    match e {
        Error::NonFinite(_) => SeahaulStatus::NonFinite,
        Error::Config { .. } => SeahaulStatus::Config,
        Error::Degenerate(_) => SeahaulStatus::Degenerate,
        Error::Io(_) | Error::Log(_) => SeahaulStatus::Io,
        _ => SeahaulStatus::InvalidArgument,
    }
}

fn fail(status: SeahaulStatus, msg: impl Into<String>) -> SeahaulStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> SeahaulStatus) -> SeahaulStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SeahaulStatus::Panic, "internal panic"),
    }
}

macro_rules! try_lib {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return fail(status_of(&err), err.to_string()),
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(SeahaulStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next seahaul call on the same thread.
#[no_mangle]
pub extern "C" fn seahaul_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seahaul_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a mission. `scenario_json` may be null for the competition
/// replica scenario.
///
/// # Safety
/// `scenario_json` must be null or a valid NUL-terminated string. `out` must
/// be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn seahaul_run_new(scenario_json: *const c_char, seed: u64, out: *mut *mut SeahaulRun) -> SeahaulStatus {
    guard(|| {
        non_null!(out);
        let cfg = if scenario_json.is_null() {
            ScenarioConfig::competition_replica()
        } else {
            let Ok(text) = CStr::from_ptr(scenario_json).to_str() else {
                return fail(SeahaulStatus::InvalidUtf8, "scenario is not UTF-8");
            };
            try_lib!(ScenarioConfig::from_json(text))
        };
        let inner = try_lib!(MissionRun::new(&cfg, seed));
        *out = Box::into_raw(Box::new(SeahaulRun { inner }));
        SeahaulStatus::Ok
    })
}

/// # Safety
/// `run` must be null or a handle from [`seahaul_run_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seahaul_run_free(run: *mut SeahaulRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Advances one control tick. Returns `Finished` without stepping once the
/// mission is done or aborted. `tick` may be null.
///
/// # Safety
/// `run` must be a live handle and `tick` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn seahaul_run_step(run: *mut SeahaulRun, tick: *mut SeahaulTick) -> SeahaulStatus {
    guard(|| {
        non_null!(run);
        let run = &mut (*run).inner;
        if run.is_finished() {
            return fail(SeahaulStatus::Finished, "mission already finished");
        }
        let rec = try_lib!(run.step());
        if !tick.is_null() {
            let est = rec.estimate.map(|e| e.position);
            *tick = SeahaulTick {
                t: rec.t,
                phase: SeahaulPhase::from(rec.phase) as u32,
                truth: [rec.truth.x, rec.truth.y, rec.truth.z],
                true_yaw: rec.true_yaw,
                has_estimate: est.is_some() as u8,
                estimate: est.map_or([0.0; 3], |p| [p.x, p.y, p.z]),
                command: [
                    rec.command.velocity[0],
                    rec.command.velocity[1],
                    rec.command.velocity[2],
                    rec.command.yaw_rate,
                ],
            };
        }
        SeahaulStatus::Ok
    })
}

/// Steps until the mission finishes.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seahaul_run_to_end(run: *mut SeahaulRun) -> SeahaulStatus {
    guard(|| {
        non_null!(run);
        let run = &mut (*run).inner;
        while !run.is_finished() {
            try_lib!(run.step());
        }
        SeahaulStatus::Ok
    })
}

/// # Safety
/// `run` must be a live handle and `phase` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn seahaul_run_phase(run: *const SeahaulRun, phase: *mut SeahaulPhase) -> SeahaulStatus {
    guard(|| {
        non_null!(run, phase);
        *phase = (*run).inner.phase().into();
        SeahaulStatus::Ok
    })
}

/// Writes the run summary as a JSON string. Release it with
/// [`seahaul_string_free`].
///
/// # Safety
/// `run` must be a live handle and `json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn seahaul_run_summary_json(run: *const SeahaulRun, json: *mut *mut c_char) -> SeahaulStatus {
    guard(|| {
        non_null!(run, json);
        let text = match serde_json::to_string(&(*run).inner.summary()) {
            Ok(t) => t,
            Err(e) => return fail(SeahaulStatus::Io, e.to_string()),
        };
        *json = CString::new(text).expect("JSON has no NUL").into_raw();
        SeahaulStatus::Ok
    })
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seahaul_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Spiral search waypoints over a deck. When `capacity` is too small the
/// required count is still written to `count` and `BufferTooSmall` is
/// returned.
///
/// # Safety
/// `out` must be valid for `capacity` writes (may be null when `capacity`
/// is 0) and `count` valid for one write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn seahaul_plan_search(
    center_x: f64,
    center_y: f64,
    deck_yaw: f64,
    size_x: f64,
    size_y: f64,
    deck_height: f64,
    altitude: f64,
    v_fov: f64,
    h_fov: f64,
    out: *mut SeahaulWaypoint,
    capacity: usize,
    count: *mut usize,
) -> SeahaulStatus {
    guard(|| {
        non_null!(count);
        let deck = DeckPose {
            center: [center_x, center_y],
            yaw: deck_yaw,
            size: [size_x, size_y],
            height: deck_height,
        };
        let plan = try_lib!(plan_search(&deck, altitude, v_fov, h_fov));
        *count = plan.waypoints.len();
        if plan.waypoints.len() > capacity {
            return fail(SeahaulStatus::BufferTooSmall, format!("{} waypoints needed", plan.waypoints.len()));
        }
        non_null!(out);
        for (i, w) in plan.waypoints.iter().enumerate() {
            *out.add(i) = SeahaulWaypoint {
                x: w.x,
                y: w.y,
                z: w.z,
                yaw: w.yaw,
            };
        }
        SeahaulStatus::Ok
    })
}

/// Least-squares position from ranges to `n` anchors given as packed xyz
/// triples.
///
/// # Safety
/// `anchors` must hold `3 * n` values, `ranges` `n` values and `position`
/// room for 3.
#[no_mangle]
pub unsafe extern "C" fn seahaul_multilaterate(
    anchors: *const f64,
    ranges: *const f64,
    n: usize,
    position: *mut f64,
) -> SeahaulStatus {
    guard(|| {
        non_null!(anchors, ranges, position);
        let a = std::slice::from_raw_parts(anchors, 3 * n);
        let r = std::slice::from_raw_parts(ranges, n);
        let set = try_lib!(AnchorSet::new(a.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()));
        let ranges: Vec<(usize, f64)> = r.iter().copied().enumerate().collect();
        let p = try_lib!(multilaterate(&set, &ranges, None));
        std::slice::from_raw_parts_mut(position, 3).copy_from_slice(&[p.x, p.y, p.z]);
        SeahaulStatus::Ok
    })
}

/// Attachment test on rotor speed samples (4 per sample, packed). Writes 1
/// to `attached` when the post-adsorption load exceeds the pre-landing load
/// by more than `delta`.
///
/// # Safety
/// `pre` and `post` must hold `4 * pre_len` and `4 * post_len` values and
/// `attached` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn seahaul_attachment_check(
    pre: *const f64,
    pre_len: usize,
    post: *const f64,
    post_len: usize,
    delta: f64,
    attached: *mut u8,
) -> SeahaulStatus {
    guard(|| {
        non_null!(pre, post, attached);
        let samples = |p: *const f64, n: usize| -> Vec<[f64; 4]> {
            std::slice::from_raw_parts(p, 4 * n)
                .chunks(4)
                .map(|c| [c[0], c[1], c[2], c[3]])
                .collect()
        };
        let (Some(a), Some(b)) = (
            RotorTelemetry::from_samples(&samples(pre, pre_len)),
            RotorTelemetry::from_samples(&samples(post, post_len)),
        ) else {
            return fail(SeahaulStatus::InvalidArgument, "telemetry is empty");
        };
        *attached = try_lib!(attachment_check(&a, &b, delta)) as u8;
        SeahaulStatus::Ok
    })
}
