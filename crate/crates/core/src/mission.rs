//! Mission executive: take-off, search, visual-servo landing, adsorption
//! and return, with a thrust-based check that the cargo is attached.
//!
//! Control errors are formed in the heading frame (body frame with roll and
//! pitch removed), which is the frame the velocity commands are executed
//! in.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::MissionConfig;
use crate::control::{pid_step, position_error_body, yaw_error, ControllerState, PidGains, VelocityCommand};
use crate::error::{Error, Result};
use crate::frames::{wrap, EulerAngles, Vec3};
use crate::planner::{next_search_altitude, plan_search, CoveragePath, DeckPose};
use crate::qr::PoseEstimate;
use crate::sim::RotorTelemetry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MissionPhase {
    TakeOff,
    Search,
    Land,
    Adsorb,
    Return,
    Done,
    Aborted,
}

impl MissionPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            MissionPhase::TakeOff => "takeoff",
            MissionPhase::Search => "search",
            MissionPhase::Land => "land",
            MissionPhase::Adsorb => "adsorb",
            MissionPhase::Return => "return",
            MissionPhase::Done => "done",
            MissionPhase::Aborted => "aborted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "takeoff" => MissionPhase::TakeOff,
            "search" => MissionPhase::Search,
            "land" => MissionPhase::Land,
            "adsorb" => MissionPhase::Adsorb,
            "return" => MissionPhase::Return,
            "done" => MissionPhase::Done,
            "aborted" => MissionPhase::Aborted,
            _ => return None,
        })
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, MissionPhase::Done | MissionPhase::Aborted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissionEvent {
    TakeoffComplete,
    CargoLocked,
    TargetLost,
    Landed,
    AdsorbComplete,
    AttachOk,
    AttachFailed,
    PlatformLanded,
    GeofenceBreach,
    Timeout,
    AttemptsExhausted,
    BlindEntry,
}

impl MissionEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            MissionEvent::TakeoffComplete => "takeoff-complete",
            MissionEvent::CargoLocked => "cargo-locked",
            MissionEvent::TargetLost => "target-lost",
            MissionEvent::Landed => "landed",
            MissionEvent::AdsorbComplete => "adsorb-complete",
            MissionEvent::AttachOk => "attach-ok",
            MissionEvent::AttachFailed => "attach-failed",
            MissionEvent::PlatformLanded => "platform-landed",
            MissionEvent::GeofenceBreach => "geofence-breach",
            MissionEvent::Timeout => "timeout",
            MissionEvent::AttemptsExhausted => "attempts-exhausted",
            MissionEvent::BlindEntry => "blind-entry",
        }
    }
}

/// Phase graph. Events that are not an edge out of `phase` leave it
/// unchanged.
pub fn next_phase(phase: MissionPhase, event: MissionEvent) -> MissionPhase {
    use MissionEvent as E;
    use MissionPhase as P;
    match (phase, event) {
        (P::Done | P::Aborted, _) => phase,
        (_, E::GeofenceBreach | E::Timeout | E::AttemptsExhausted) => P::Aborted,
        (P::TakeOff, E::TakeoffComplete) => P::Search,
        (P::Search, E::CargoLocked) => P::Land,
        (P::Land, E::TargetLost) => P::Search,
        (P::Land, E::Landed) => P::Adsorb,
        (P::Adsorb, E::AdsorbComplete) => P::Return,
        (P::Return, E::AttachFailed) => P::Land,
        (P::Return, E::PlatformLanded) => P::Done,
        _ => phase,
    }
}

/// True when the post-adsorption hover needs noticeably more thrust than
/// the pre-landing hover: `Σϖ_post² > (1 + δ) Σϖ_pre²`.
pub fn attachment_check(pre: &RotorTelemetry, post: &RotorTelemetry, delta: f64) -> Result<bool> {
    if !(pre.sum_of_squares > 0.0) || !pre.sum_of_squares.is_finite() || pre.samples == 0 {
        return Err(Error::InvalidArgument("pre-landing telemetry is empty".into()));
    }
    if !post.sum_of_squares.is_finite() || post.samples == 0 {
        return Err(Error::InvalidArgument("post-adsorption telemetry is empty".into()));
    }
    Ok(post.sum_of_squares > (1.0 + delta) * pre.sum_of_squares)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Climb,
    Cruise,
    Approach,
    PreBlind,
    Blind,
    Action,
    Settle,
    Lift,
    Check,
    Transit,
    Descend,
    Idle,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Climb => "climb",
            Stage::Cruise => "cruise",
            Stage::Approach => "approach",
            Stage::PreBlind => "pre-blind",
            Stage::Blind => "blind",
            Stage::Action => "action",
            Stage::Settle => "settle",
            Stage::Lift => "lift",
            Stage::Check => "check",
            Stage::Transit => "transit",
            Stage::Descend => "descend",
            Stage::Idle => "idle",
        }
    }
}

/// Cargo as seen by the tracker, heading frame relative to the UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CargoView {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Box long-axis angle in the body frame.
    pub yaw: f64,
}

/// Everything the executive reads in one tick.
#[derive(Debug, Clone, Copy)]
pub struct MissionInputs {
    pub t: f64,
    pub estimate: PoseEstimate,
    pub cargo_locked: bool,
    pub cargo: Option<CargoView>,
    pub grounded: bool,
    pub on_platform: bool,
    pub rotor_sum_of_squares: f64,
    pub platform: EulerAngles,
    pub deck: DeckPose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Fly(VelocityCommand),
    /// Close the adhesive pad now; the command keeps the UAV pressed down.
    Adsorb(VelocityCommand),
}

impl Action {
    pub fn command(&self) -> &VelocityCommand {
        match self {
            Action::Fly(c) | Action::Adsorb(c) => c,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TickOutput {
    pub action: Action,
    pub phase: MissionPhase,
    pub stage: Stage,
    pub events: Vec<MissionEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseDurations {
    pub takeoff: f64,
    pub search: f64,
    pub land: f64,
    pub adsorb: f64,
    #[serde(rename = "return")]
    pub return_: f64,
}

impl PhaseDurations {
    fn add(&mut self, phase: MissionPhase, dt: f64) {
        match phase {
            MissionPhase::TakeOff => self.takeoff += dt,
            MissionPhase::Search => self.search += dt,
            MissionPhase::Land => self.land += dt,
            MissionPhase::Adsorb => self.adsorb += dt,
            MissionPhase::Return => self.return_ += dt,
            _ => {}
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.takeoff, self.search, self.land, self.adsorb, self.return_]
    }
}

/// Interval during which rotor telemetry was averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryWindow {
    pub start: f64,
    pub end: f64,
    pub telemetry: RotorTelemetry,
}

#[derive(Debug, Clone)]
pub struct MissionExecutive {
    cfg: MissionConfig,
    period: f64,
    vertical_limit: f64,
    phase: MissionPhase,
    stage: Stage,
    stage_since: f64,
    controller: ControllerState,
    hold_xy: Option<Vec3>,
    hold_yaw: f64,
    takeoff_ref: Option<Vec3>,
    plan: Option<CoveragePath>,
    waypoint: usize,
    search_altitude: f64,
    blind_since: Option<f64>,
    lost_since: Option<f64>,
    rotor_history: VecDeque<(f64, f64)>,
    pre: Option<TelemetryWindow>,
    post: Option<TelemetryWindow>,
    adsorb_window: Option<(f64, f64)>,
    attempts: u32,
    ff_velocity: Vec3,
    uav_velocity: Vec3,
    durations: PhaseDurations,
    last_t: Option<f64>,
    attach_ok: Option<bool>,
    velocity_time_constant: f64,
    fov: (f64, f64),
    search_armed: bool,
}

impl MissionExecutive {
    /// `fov` is the detection camera (horizontal, vertical) field of view.
    pub fn new(cfg: &MissionConfig, period: f64, velocity_time_constant: f64, fov: (f64, f64)) -> Self {
        Self {
            fov,
            search_armed: false,
            vertical_limit: cfg.limits.vertical,
            controller: ControllerState::new(cfg.integral_window, period),
            search_altitude: cfg.search_altitude,
            cfg: cfg.clone(),
            period,
            phase: MissionPhase::TakeOff,
            stage: Stage::Climb,
            stage_since: 0.0,
            hold_xy: None,
            hold_yaw: 0.0,
            takeoff_ref: None,
            plan: None,
            waypoint: 0,
            blind_since: None,
            lost_since: None,
            rotor_history: VecDeque::new(),
            pre: None,
            post: None,
            adsorb_window: None,
            attempts: 0,
            ff_velocity: Vec3::zeros(),
            uav_velocity: Vec3::zeros(),
            durations: PhaseDurations::default(),
            last_t: None,
            attach_ok: None,
            velocity_time_constant,
        }
    }

    pub fn phase(&self) -> MissionPhase {
        self.phase
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn durations(&self) -> &PhaseDurations {
        &self.durations
    }

    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    pub fn attach_ok(&self) -> Option<bool> {
        self.attach_ok
    }

    pub fn pre_window(&self) -> Option<&TelemetryWindow> {
        self.pre.as_ref()
    }

    pub fn post_window(&self) -> Option<&TelemetryWindow> {
        self.post.as_ref()
    }

    pub fn adsorb_window(&self) -> Option<(f64, f64)> {
        self.adsorb_window
    }

    pub fn plan(&self) -> Option<&CoveragePath> {
        self.plan.as_ref()
    }

    /// Applies an externally detected event (timeout, loss of the
    /// vehicle) and returns it.
    pub fn notify(&mut self, event: MissionEvent, t: f64) -> MissionEvent {
        let mut sink = Vec::new();
        self.apply(event, &mut sink, t);
        event
    }

    fn set_stage(&mut self, stage: Stage, t: f64) {
        self.stage = stage;
        self.stage_since = t;
    }

    fn apply(&mut self, event: MissionEvent, events: &mut Vec<MissionEvent>, t: f64) {
        let next = next_phase(self.phase, event);
        events.push(event);
        if next != self.phase {
            self.phase = next;
            let stage = match next {
                MissionPhase::Search => Stage::Cruise,
                MissionPhase::Land => Stage::Approach,
                MissionPhase::Adsorb => Stage::Action,
                MissionPhase::Return => Stage::Lift,
                _ => Stage::Idle,
            };
            self.set_stage(stage, t);
            self.blind_since = None;
            self.lost_since = None;
            self.hold_xy = None;
        }
    }

    fn gains(&self) -> PidGains {
        let g = &self.cfg.gains;
        match self.phase {
            MissionPhase::TakeOff => g.takeoff,
            MissionPhase::Search => g.search,
            MissionPhase::Land | MissionPhase::Adsorb => g.land,
            _ => g.return_,
        }
    }

    fn command(&mut self, e: [f64; 4], ff: Option<Vec3>, t: f64) -> VelocityCommand {
        let mut limits = self.cfg.limits;
        limits.vertical = self.vertical_limit;
        let gains = self.gains();
        let (cmd, _) = pid_step(&gains, &e, &mut self.controller, self.period, ff, &limits, t);
        cmd
    }

    fn world_error(&self, target: &Vec3, est: &PoseEstimate) -> Vec3 {
        let r_w_b = EulerAngles::yaw_only(est.yaw).rotation().inverse();
        position_error_body(target, &est.position, &r_w_b)
    }

    fn fly_to(&mut self, target: Vec3, yaw: f64, est: &PoseEstimate, t: f64) -> VelocityCommand {
        let e = self.world_error(&target, est);
        self.command([e.x, e.y, e.z, wrap(yaw - est.yaw)], None, t)
    }

    fn record_rotors(&mut self, t: f64, sum: f64) {
        self.rotor_history.push_back((t, sum));
        let keep = self.cfg.hover_window + self.cfg.blind_hold_time + 1.0;
        while self.rotor_history.front().is_some_and(|(s, _)| *s < t - keep) {
            self.rotor_history.pop_front();
        }
    }

    fn window(&self, start: f64, end: f64) -> Option<TelemetryWindow> {
        let samples: Vec<f64> = self
            .rotor_history
            .iter()
            .filter(|(s, _)| *s > start - 1e-9 && *s <= end + 1e-9)
            .map(|(_, v)| *v)
            .collect();
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        Some(TelemetryWindow {
            start,
            end,
            telemetry: RotorTelemetry {
                rotors: [0.0; 4],
                sum_of_squares: samples.iter().sum::<f64>() / n,
                samples: samples.len(),
            },
        })
    }

    fn home_pad(&self, platform: &EulerAngles, pad: &Vec3) -> Vec3 {
        // Nominal pad position: platform heading only, no roll or pitch.
        EulerAngles::yaw_only(platform.yaw).rotation().apply(pad)
    }

    /// One executive tick.
    pub fn tick(&mut self, inp: &MissionInputs, pad_local: &Vec3) -> TickOutput {
        let t = inp.t;
        let dt = self.last_t.map(|l| t - l).unwrap_or(0.0);
        self.last_t = Some(t);
        self.durations.add(self.phase, dt);
        self.record_rotors(t, inp.rotor_sum_of_squares);
        let mut events = Vec::new();
        let est = inp.estimate;

        if !self.phase.is_terminal() {
            let p = est.position;
            if !self.cfg.geofence.contains(&[p.x, p.y, p.z]) {
                self.apply(MissionEvent::GeofenceBreach, &mut events, t);
            }
        }

        let idle = VelocityCommand {
            velocity: [0.0, 0.0, 0.0],
            yaw_rate: 0.0,
            t,
        };
        let mut adsorb_now = false;
        let cmd = match self.phase {
            MissionPhase::Done | MissionPhase::Aborted => idle,
            MissionPhase::TakeOff => self.takeoff(inp, pad_local, &mut events),
            MissionPhase::Search => self.search(inp, &mut events),
            MissionPhase::Land => self.land(inp, &mut events),
            MissionPhase::Adsorb => self.adsorb(inp, &mut events, &mut adsorb_now),
            MissionPhase::Return => self.return_home(inp, pad_local, &mut events),
        };
        let cmd = VelocityCommand { t, ..cmd };
        // Track our own velocity through the same lag the airframe has, in
        // the heading frame, for the landing feedforward.
        let k = (dt / self.velocity_time_constant).min(1.0);
        self.uav_velocity += (cmd.velocity() - self.uav_velocity) * k;
        TickOutput {
            action: if adsorb_now { Action::Adsorb(cmd) } else { Action::Fly(cmd) },
            phase: self.phase,
            stage: self.stage,
            events,
        }
    }

    fn takeoff(&mut self, inp: &MissionInputs, pad_local: &Vec3, events: &mut Vec<MissionEvent>) -> VelocityCommand {
        let est = inp.estimate;
        let pad = self.home_pad(&inp.platform, pad_local);
        let base = *self.takeoff_ref.get_or_insert(Vec3::new(pad.x, pad.y, pad.z));
        if self.hold_xy.is_none() {
            self.hold_xy = Some(base);
            self.hold_yaw = est.yaw;
        }
        let target = Vec3::new(base.x, base.y, base.z + self.cfg.takeoff_altitude);
        let cmd = self.fly_to(target, self.hold_yaw, &est, inp.t);
        if est.position.z >= target.z - self.cfg.waypoint_radius {
            self.apply(MissionEvent::TakeoffComplete, events, inp.t);
        }
        cmd
    }

    fn search(&mut self, inp: &MissionInputs, events: &mut Vec<MissionEvent>) -> VelocityCommand {
        let est = inp.estimate;
        // Detections count once the UAV flies at the altitude the coverage
        // plan was made for.
        if self.search_armed && inp.cargo_locked {
            self.apply(MissionEvent::CargoLocked, events, inp.t);
            return self.land(inp, events);
        }
        if self.plan.is_none() {
            match plan_search(&inp.deck, self.search_altitude, self.cfg_v_fov(), self.cfg_h_fov()) {
                Ok(plan) => {
                    self.plan = Some(plan);
                    self.waypoint = 0;
                    self.hold_yaw = est.yaw;
                }
                Err(_) => return self.fly_to(est.position, est.yaw, &est, inp.t),
            }
        }
        let plan = self.plan.as_ref().expect("plan set above");
        let wp = plan.waypoints[self.waypoint.min(plan.waypoints.len() - 1)].clone();
        let n = plan.waypoints.len();
        let target = Vec3::new(wp.x, wp.y, wp.z);
        let yaw = wrap(self.hold_yaw + wp.yaw);

        // Leave the platform's danger zone vertically before moving across.
        let target = if let Some(base) = self.takeoff_ref {
            if est.position.z < base.z + self.cfg.danger_zone_height {
                Vec3::new(est.position.x, est.position.y, target.z)
            } else {
                target
            }
        } else {
            target
        };
        let cmd = self.fly_to(target, yaw, &est, inp.t);
        if (wp.z - est.position.z).abs() < self.cfg.waypoint_radius {
            self.search_armed = true;
        }
        if (target - est.position).norm() < self.cfg.waypoint_radius {
            self.waypoint += 1;
            if self.waypoint >= n {
                let next = next_search_altitude(self.search_altitude, self.cfg.altitude_step, self.cfg.min_search_altitude);
                self.search_altitude = next.unwrap_or(self.cfg.min_search_altitude);
                self.plan = None;
            }
        }
        cmd
    }

    fn cfg_h_fov(&self) -> f64 {
        self.fov.0
    }

    fn cfg_v_fov(&self) -> f64 {
        self.fov.1
    }

    fn land(&mut self, inp: &MissionInputs, events: &mut Vec<MissionEvent>) -> VelocityCommand {
        let t = inp.t;
        if self.stage == Stage::Blind {
            if inp.grounded {
                self.apply(MissionEvent::Landed, events, t);
                return VelocityCommand {
                    velocity: [0.0, 0.0, -0.1],
                    yaw_rate: 0.0,
                    t,
                };
            }
            let ff = self.ff_velocity;
            return VelocityCommand {
                velocity: [ff.x, ff.y, -self.cfg.blind_descent_speed],
                yaw_rate: 0.0,
                t,
            };
        }
        if inp.grounded {
            // Touched down before the blind stage: treat as landed and take
            // the reference from the hover just before contact.
            self.pre = self.window(t - self.cfg.hover_window, t);
            self.apply(MissionEvent::Landed, events, t);
            return VelocityCommand {
                velocity: [0.0, 0.0, -0.1],
                yaw_rate: 0.0,
                t,
            };
        }
        let Some(cargo) = inp.cargo.filter(|_| inp.cargo_locked) else {
            // Out of view: climb back over the last position to reacquire.
            let since = *self.lost_since.get_or_insert(t);
            if t - since >= self.cfg.reacquire_time - 1e-9 {
                self.apply(MissionEvent::TargetLost, events, t);
            }
            if self.stage == Stage::PreBlind {
                self.set_stage(Stage::Approach, t);
            }
            self.blind_since = None;
            let est = inp.estimate;
            let hold = *self.hold_xy.get_or_insert(est.position);
            let mut cmd = self.fly_to(hold, est.yaw, &est, t);
            cmd.velocity[2] = self.cfg.blind_descent_speed;
            return cmd;
        };
        self.lost_since = None;
        self.hold_xy = None;

        let height = -cargo.position.z;
        let horizontal = cargo.position.x.hypot(cargo.position.y);
        let e_yaw = yaw_error(cargo.yaw);
        let target_h = match self.stage {
            Stage::PreBlind => self.cfg.pre_blind_height,
            _ => self.cfg.align_height,
        };
        let mut e_z = target_h - height;
        // Do not descend while far off to the side.
        let cone = (0.5 * height).max(0.2);
        if horizontal > cone && e_z < 0.0 {
            e_z = 0.0;
        }

        let ff = Vec3::new(
            cargo.velocity.x + self.uav_velocity.x,
            cargo.velocity.y + self.uav_velocity.y,
            0.0,
        );
        let ff = if ff.norm() > self.cfg.limits.horizontal {
            ff * (self.cfg.limits.horizontal / ff.norm())
        } else {
            ff
        };
        self.ff_velocity = ff;
        let mut cmd = self.command([cargo.position.x, cargo.position.y, e_z, e_yaw], Some(ff), t);
        if self.stage == Stage::PreBlind {
            cmd.velocity[2] = cmd.velocity[2].max(-self.cfg.pre_blind_descent_speed);
        }

        match self.stage {
            Stage::Approach => {
                if (height - self.cfg.align_height).abs() < self.cfg.pre_blind_height_tolerance * 3.0
                    && e_yaw.abs() < self.cfg.yaw_tolerance
                    && horizontal < cone
                {
                    self.set_stage(Stage::PreBlind, t);
                }
            }
            Stage::PreBlind => {
                let steady = horizontal < self.cfg.blind_threshold
                    && (height - self.cfg.pre_blind_height).abs() < self.cfg.pre_blind_height_tolerance;
                if steady {
                    let since = *self.blind_since.get_or_insert(t);
                    if t - since >= self.cfg.blind_hold_time - 1e-9 {
                        let start = (t - self.cfg.hover_window).max(since);
                        self.pre = self.window(start, t);
                        self.set_stage(Stage::Blind, t);
                        events.push(MissionEvent::BlindEntry);
                    }
                } else {
                    self.blind_since = None;
                }
            }
            _ => {}
        }
        cmd
    }

    fn adsorb(&mut self, inp: &MissionInputs, events: &mut Vec<MissionEvent>, adsorb_now: &mut bool) -> VelocityCommand {
        let t = inp.t;
        let press = VelocityCommand {
            velocity: [0.0, 0.0, -0.1],
            yaw_rate: 0.0,
            t,
        };
        match self.stage {
            Stage::Action => {
                if self.adsorb_window.is_none_or(|(s, e)| e < s || s < self.stage_since - 1e-9) {
                    self.adsorb_window = Some((t, f64::NAN));
                }
                if t - self.stage_since >= self.cfg.adsorb_action_time - 1e-9 {
                    *adsorb_now = true;
                    if let Some((s, _)) = self.adsorb_window {
                        self.adsorb_window = Some((s, t));
                    }
                    self.set_stage(Stage::Settle, t);
                }
            }
            Stage::Settle => {
                if t - self.stage_since >= self.cfg.adsorb_settle_time - 1e-9 {
                    self.attempts += 1;
                    self.apply(MissionEvent::AdsorbComplete, events, t);
                }
            }
            _ => {}
        }
        press
    }

    fn return_home(&mut self, inp: &MissionInputs, pad_local: &Vec3, events: &mut Vec<MissionEvent>) -> VelocityCommand {
        let t = inp.t;
        let est = inp.estimate;
        match self.stage {
            Stage::Lift => {
                let base = *self.hold_xy.get_or_insert(est.position);
                self.hold_yaw = est.yaw;
                let target = Vec3::new(base.x, base.y, inp.deck.height + self.cfg.align_height);
                let cmd = self.fly_to(target, self.hold_yaw, &est, t);
                let lifted = !inp.grounded && (target.z - est.position.z).abs() < self.cfg.waypoint_radius;
                if lifted || t - self.stage_since > self.cfg.check_climb_time * 5.0 {
                    self.set_stage(Stage::Check, t);
                }
                cmd
            }
            Stage::Check => {
                let base = self.hold_xy.unwrap_or(est.position);
                let target = Vec3::new(base.x, base.y, inp.deck.height + self.cfg.align_height);
                let cmd = self.fly_to(target, self.hold_yaw, &est, t);
                if t - self.stage_since >= self.cfg.check_climb_time + self.cfg.hover_window - 1e-9 {
                    self.post = self.window(t - self.cfg.hover_window, t);
                    let ok = match (&self.pre, &self.post) {
                        (Some(pre), Some(post)) => {
                            attachment_check(&pre.telemetry, &post.telemetry, self.cfg.attach_threshold).unwrap_or(false)
                        }
                        _ => false,
                    };
                    self.attach_ok = Some(ok);
                    if ok {
                        events.push(MissionEvent::AttachOk);
                        self.set_stage(Stage::Transit, t);
                        self.hold_xy = None;
                    } else if self.attempts >= self.cfg.max_attempts {
                        self.apply(MissionEvent::AttemptsExhausted, events, t);
                    } else {
                        self.apply(MissionEvent::AttachFailed, events, t);
                    }
                }
                cmd
            }
            Stage::Transit => {
                let pad = self.home_pad(&inp.platform, pad_local);
                let target = Vec3::new(pad.x, pad.y, pad.z + self.cfg.return_altitude);
                let cmd = self.fly_to(target, self.hold_yaw, &est, t);
                let d = (target.xy() - est.position.xy()).norm();
                if d < self.cfg.return_descent_radius {
                    self.set_stage(Stage::Descend, t);
                }
                cmd
            }
            Stage::Descend => {
                if inp.on_platform {
                    self.apply(MissionEvent::PlatformLanded, events, t);
                    return VelocityCommand {
                        velocity: [0.0, 0.0, -0.1],
                        yaw_rate: 0.0,
                        t,
                    };
                }
                let pad = self.home_pad(&inp.platform, pad_local);
                let target = Vec3::new(pad.x, pad.y, pad.z - 1.0);
                let mut cmd = self.fly_to(target, self.hold_yaw, &est, t);
                cmd.velocity[2] = cmd.velocity[2].min(-0.1);
                cmd
            }
            _ => self.fly_to(est.position, est.yaw, &est, t),
        }
    }
}
