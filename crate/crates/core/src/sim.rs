//! Synthetic sea environment.
//!
//! The world frame is gravity-aligned with its origin at the landing
//! platform's centre of rotation. The platform rolls and pitches as two
//! sinusoids and its heading random-walks. The target vessel's deck is
//! level and drifts slowly. The UAV tracks velocity commands through a
//! first-order lag whose acceleration demand is itself delivered through a
//! lagged tilt, standing in for the vendor low-level controller, and is
//! pushed around by an Ornstein-Uhlenbeck gust process.
//!
//! Each sensor draws from its own seeded stream so that enabling one sensor
//! never perturbs another's noise sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{CargoConfig, ScenarioConfig};
use crate::control::VelocityCommand;
use crate::error::{Error, Result};
use crate::frames::{wrap, EulerAngles, Rotation, Vec3};
use crate::perception::DetectionObservation;
use crate::planner::{deck_rotate, deck_unrotate, DeckPose};
use crate::qr::{project_marker, QrObservation};
use crate::uwb::RangeMeasurement;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Contact {
    Airborne,
    /// Resting on the platform at a platform-frame point.
    Platform([f64; 3]),
    /// Resting on the deck at a deck-frame point.
    Deck([f64; 2]),
    /// Resting on top of a cargo, deck-frame point.
    Cargo(usize, [f64; 2]),
    /// Below the platform and deck level outside both: in the water.
    Sea,
}

impl Contact {
    pub fn is_grounded(&self) -> bool {
        !matches!(self, Contact::Airborne)
    }
}

/// Immutable snapshot of the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub platform: EulerAngles,
    pub position: Vec3,
    pub attitude: EulerAngles,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub command: VelocityCommand,
    pub attached_mass: f64,
    pub carried: Option<usize>,
    pub rotors: [f64; 4],
    pub wind: Vec3,
    pub contact: Contact,
}

/// Rotor speeds averaged over a hover window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorTelemetry {
    pub rotors: [f64; 4],
    pub sum_of_squares: f64,
    pub samples: usize,
}

impl RotorTelemetry {
    pub fn from_samples(samples: &[[f64; 4]]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let mut rotors = [0.0; 4];
        for s in samples {
            for i in 0..4 {
                rotors[i] += s[i] / n;
            }
        }
        let sum_of_squares = samples
            .iter()
            .map(|s| s.iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
            / n;
        Some(Self {
            rotors,
            sum_of_squares,
            samples: samples.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Kinematic acceleration (gravity removed) in the body frame.
    pub accel_body: Vec3,
    pub roll: f64,
    pub pitch: f64,
}

#[derive(Debug, Clone)]
struct Streams {
    motion: ChaCha8Rng,
    uwb: ChaCha8Rng,
    qr: ChaCha8Rng,
    detection: ChaCha8Rng,
    rotor: ChaCha8Rng,
    imu: ChaCha8Rng,
    adhesion: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let make = |stream: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(stream);
            r
        };
        Self {
            motion: make(1),
            uwb: make(2),
            qr: make(3),
            detection: make(4),
            rotor: make(5),
            imu: make(6),
            adhesion: make(7),
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

#[derive(Debug, Clone)]
pub struct World {
    cfg: ScenarioConfig,
    rng: Streams,
    t: f64,
    platform_yaw: f64,
    position: Vec3,
    velocity: Vec3,
    acceleration: Vec3,
    /// Acceleration the low-level controller is producing, lagging its
    /// demand by the attitude response.
    control_accel: Vec3,
    yaw: f64,
    attitude: EulerAngles,
    command: VelocityCommand,
    gust: Vec3,
    wind: Vec3,
    rejected: Vec3,
    contact: Contact,
    carried: Option<usize>,
    rotors: [f64; 4],
    detection_clock: f64,
    confidences: Vec<f64>,
}

impl World {
    pub fn new(cfg: ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let platform_yaw = cfg.platform.initial_yaw;
        let confidences = cfg.cargoes.iter().map(|c| c.base_confidence).collect();
        let mut w = Self {
            rng: Streams::new(seed),
            t: 0.0,
            platform_yaw,
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            control_accel: Vec3::zeros(),
            yaw: wrap(platform_yaw + cfg.uav.initial_yaw),
            attitude: EulerAngles::default(),
            command: VelocityCommand::default(),
            gust: Vec3::zeros(),
            wind: Vec3::zeros(),
            rejected: Vec3::zeros(),
            contact: Contact::Platform(cfg.platform.home_pad),
            carried: None,
            rotors: [0.0; 4],
            detection_clock: 0.0,
            confidences,
            cfg,
        };
        w.wind = w.mean_wind();
        w.rejected = w.wind;
        w.settle_contact();
        w.attitude = w.attitude_from_thrust();
        Ok(w)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> SimState {
        SimState {
            t: self.t,
            platform: self.platform_attitude(),
            position: self.position,
            attitude: self.attitude,
            velocity: self.velocity,
            acceleration: self.acceleration,
            command: self.command,
            attached_mass: self.attached_mass(),
            carried: self.carried,
            rotors: self.rotors,
            wind: self.wind,
            contact: self.contact,
        }
    }

    pub fn attached_mass(&self) -> f64 {
        self.carried.map(|i| self.cfg.cargoes[i].mass).unwrap_or(0.0)
    }

    pub fn platform_attitude(&self) -> EulerAngles {
        platform_attitude_at(&self.cfg, self.t, self.platform_yaw)
    }

    pub fn deck_pose(&self) -> DeckPose {
        let d = &self.cfg.deck;
        DeckPose {
            center: [
                d.center[0] + d.drift_velocity[0] * self.t,
                d.center[1] + d.drift_velocity[1] * self.t,
            ],
            yaw: d.yaw,
            size: d.size,
            height: d.height,
        }
    }

    /// World position of the centre of a cargo's top face.
    pub fn cargo_top(&self, i: usize) -> Vec3 {
        let c = &self.cfg.cargoes[i];
        if self.carried == Some(i) {
            return self.position;
        }
        let deck = self.deck_pose();
        let off = deck_rotate(deck.yaw, c.position);
        Vec3::new(
            deck.center[0] + off[0],
            deck.center[1] + off[1],
            deck.height + c.size[2],
        )
    }

    /// World yaw of a cargo's long (x) axis.
    pub fn cargo_yaw(&self, i: usize) -> f64 {
        wrap(self.cfg.cargoes[i].yaw - self.cfg.deck.yaw)
    }

    pub fn home_pad_world(&self) -> Vec3 {
        self.platform_attitude()
            .rotation()
            .apply(&Vec3::from(self.cfg.platform.home_pad))
    }

    /// Puts the UAV in a steady hover at `position` with heading `yaw`.
    pub fn teleport(&mut self, position: Vec3, yaw: f64) {
        self.position = position;
        self.yaw = wrap(yaw);
        self.velocity = Vec3::zeros();
        self.acceleration = Vec3::zeros();
        self.control_accel = -self.cfg.wind.drag * self.rejected;
        self.command = VelocityCommand::default();
        self.contact = Contact::Airborne;
        self.attitude = self.attitude_from_thrust();
        self.update_rotors();
    }

    fn mean_wind(&self) -> Vec3 {
        let w = &self.cfg.wind;
        Vec3::new(w.direction.cos(), w.direction.sin(), 0.0) * w.mean_speed
    }

    fn carried_height(&self) -> f64 {
        self.carried.map(|i| self.cfg.cargoes[i].size[2]).unwrap_or(0.0)
    }

    fn surface_velocity(&self) -> Vec3 {
        match self.contact {
            Contact::Deck(_) | Contact::Cargo(..) => {
                let d = self.cfg.deck.drift_velocity;
                Vec3::new(d[0], d[1], 0.0)
            }
            _ => Vec3::zeros(),
        }
    }

    /// Pins a grounded UAV to whatever it is standing on.
    fn settle_contact(&mut self) {
        let lift = self.carried_height();
        match self.contact {
            Contact::Platform(local) => {
                let r = self.platform_attitude().rotation();
                let mut l = Vec3::from(local);
                l.z += lift;
                self.position = r.apply(&l);
            }
            Contact::Deck(local) => {
                let deck = self.deck_pose();
                let off = deck_rotate(deck.yaw, local);
                self.position = Vec3::new(
                    deck.center[0] + off[0],
                    deck.center[1] + off[1],
                    deck.height + lift,
                );
            }
            Contact::Cargo(i, local) => {
                let deck = self.deck_pose();
                let off = deck_rotate(deck.yaw, local);
                self.position = Vec3::new(
                    deck.center[0] + off[0],
                    deck.center[1] + off[1],
                    deck.height + self.cfg.cargoes[i].size[2] + lift,
                );
            }
            Contact::Airborne | Contact::Sea => {}
        }
    }

    /// Surface under the UAV at its current position, if it has gone
    /// through one.
    fn detect_touchdown(&self) -> Option<Contact> {
        let lift = self.carried_height();
        let p = self.position;
        let plat = self.platform_attitude().rotation();
        let local = plat.inverse().apply(&p);
        let pc = &self.cfg.platform;
        if local.x.abs() <= pc.length / 2.0 && local.y.abs() <= pc.width / 2.0 && local.z - lift <= 0.0 {
            return Some(Contact::Platform([local.x, local.y, 0.0]));
        }
        let deck = self.deck_pose();
        let rel = deck_unrotate(deck.yaw, [p.x - deck.center[0], p.y - deck.center[1]]);
        let on_deck = rel[0].abs() <= deck.size[0] / 2.0 && rel[1].abs() <= deck.size[1] / 2.0;
        if on_deck {
            let foot = self.cfg.uav.footprint_radius;
            for (i, c) in self.cfg.cargoes.iter().enumerate() {
                if self.carried == Some(i) {
                    continue;
                }
                let top = deck.height + c.size[2];
                if p.z - lift <= top && within_cargo(c, rel, foot) {
                    return Some(Contact::Cargo(i, rel));
                }
            }
            if p.z - lift <= deck.height {
                return Some(Contact::Deck(rel));
            }
        }
        if p.z <= -0.5 {
            return Some(Contact::Sea);
        }
        None
    }

    fn attitude_from_thrust(&self) -> EulerAngles {
        let t = self.specific_thrust();
        let (s, c) = self.yaw.sin_cos();
        let hx = c * t.x + s * t.y;
        let hy = -s * t.x + c * t.y;
        let pitch = hx.atan2(t.z);
        let roll = (-hy).atan2(hx.hypot(t.z));
        EulerAngles::new(roll, pitch, self.yaw)
    }

    /// Thrust per unit mass the low-level controller must produce.
    fn specific_thrust(&self) -> Vec3 {
        if self.contact.is_grounded() {
            return Vec3::new(0.0, 0.0, GRAVITY);
        }
        let drag = self.cfg.wind.drag * Vec3::new(self.wind.x, self.wind.y, 0.0);
        self.acceleration + Vec3::new(0.0, 0.0, GRAVITY) - drag
    }

    fn update_rotors(&mut self) {
        let flying = !self.contact.is_grounded() || self.command.velocity[2] > 0.0;
        if !flying {
            self.rotors = [0.0; 4];
            return;
        }
        let mass = self.cfg.uav.mass + self.attached_mass();
        let total = mass * self.specific_thrust().norm() / self.cfg.uav.thrust_coefficient;
        let each = (total / 4.0).sqrt();
        let noise = self.cfg.uav.rotor_noise;
        for w in self.rotors.iter_mut() {
            *w = (each * (1.0 + noise * gauss(&mut self.rng.rotor))).max(0.0);
        }
    }

    /// Advances the world by `dt` under a body-frame velocity command.
    pub fn step(&mut self, cmd: &VelocityCommand, dt: f64) -> Result<()> {
        if !cmd.is_finite() {
            return Err(Error::NonFinite("velocity command"));
        }
        if !(dt > 0.0 && dt <= 0.1) {
            return Err(Error::InvalidArgument(format!("dt must lie in (0, 0.1], got {dt}")));
        }
        self.command = *cmd;
        self.step_platform(dt);
        self.step_wind(dt);
        self.t += dt;

        match self.contact {
            Contact::Sea => {
                self.velocity = Vec3::zeros();
                self.acceleration = Vec3::zeros();
            }
            c if c.is_grounded() => {
                if cmd.velocity[2] > 0.05 {
                    self.velocity = self.surface_velocity();
                    self.control_accel = -self.cfg.wind.drag * self.rejected;
                    self.contact = Contact::Airborne;
                    self.fly(cmd, dt);
                } else {
                    self.settle_contact();
                    self.velocity = self.surface_velocity();
                    self.acceleration = Vec3::zeros();
                }
            }
            _ => self.fly(cmd, dt),
        }
        self.attitude = self.attitude_from_thrust();
        self.update_rotors();
        Ok(())
    }

    fn fly(&mut self, cmd: &VelocityCommand, dt: f64) {
        let (s, c) = self.yaw.sin_cos();
        let v = cmd.velocity;
        let target = Vec3::new(c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]);
        let u = &self.cfg.uav;
        let drag = self.cfg.wind.drag;
        let demand = (target - self.velocity) / u.velocity_time_constant - drag * self.rejected;
        let k = (dt / u.attitude_time_constant).min(1.0);
        self.control_accel += (demand - self.control_accel) * k;
        let a = self.control_accel + drag * self.wind;
        self.acceleration = a;
        self.velocity += a * dt;
        self.position += self.velocity * dt;
        self.yaw = wrap(self.yaw + cmd.yaw_rate * dt);
        if let Some(contact) = self.detect_touchdown() {
            self.contact = contact;
            self.velocity = self.surface_velocity();
            self.acceleration = Vec3::zeros();
            self.control_accel = Vec3::zeros();
            self.settle_contact();
        }
    }

    fn step_platform(&mut self, dt: f64) {
        let rate = self.cfg.platform.yaw_walk_rate;
        if rate > 0.0 {
            self.platform_yaw = wrap(self.platform_yaw + rate * dt.sqrt() * gauss(&mut self.rng.motion));
        }
    }

    fn step_wind(&mut self, dt: f64) {
        let w = &self.cfg.wind;
        if w.gust_std > 0.0 {
            let decay = (-dt / w.gust_time_constant).exp();
            let scale = w.gust_std * (1.0 - decay * decay).sqrt();
            for axis in 0..2 {
                self.gust[axis] = decay * self.gust[axis] + scale * gauss(&mut self.rng.motion);
            }
        }
        let mut wind = self.mean_wind() + self.gust;
        let speed = wind.norm();
        if speed > w.max_speed && speed > 0.0 {
            wind *= w.max_speed / speed;
        }
        self.wind = wind;
        if w.rejection_time_constant > 0.0 {
            let k = (dt / w.rejection_time_constant).min(1.0);
            self.rejected += (self.wind - self.rejected) * k;
        } else {
            self.rejected = Vec3::zeros();
        }
    }

    /// Closes the adhesive pad. Succeeds when the UAV sits on a cargo close
    /// enough to its centre and the configured success draw passes.
    pub fn adsorb(&mut self, success_probability: f64) -> bool {
        let Contact::Cargo(i, local) = self.contact else {
            return false;
        };
        let c = &self.cfg.cargoes[i];
        let offset = (local[0] - c.position[0]).hypot(local[1] - c.position[1]);
        let draw: f64 = self.rng.adhesion.random();
        if offset <= self.cfg.uav.grasp_radius && draw < success_probability {
            self.carried = Some(i);
            // Standing on the deck now, with the cargo underneath.
            self.contact = Contact::Deck(local);
            self.settle_contact();
            true
        } else {
            false
        }
    }

    /// Ranges from both labels to every anchor.
    pub fn sense_uwb(&mut self) -> Vec<RangeMeasurement> {
        let plat_inv = self.platform_attitude().rotation().inverse();
        let r_b_w = self.attitude.rotation();
        let half = self.cfg.uwb.label_baseline / 2.0;
        let mut out = Vec::with_capacity(2 * self.cfg.uwb.anchors.len());
        for (label, sign) in [(0usize, 1.0), (1usize, -1.0)] {
            let world = self.position + r_b_w.apply(&Vec3::new(0.0, sign * half, 0.0));
            let mut sigma = self.cfg.uwb.range_noise;
            if let Some(z) = &self.cfg.uwb.occlusion {
                if (0..3).all(|k| world[k] >= z.min[k] && world[k] <= z.max[k]) {
                    sigma *= z.noise_factor;
                }
            }
            let u = plat_inv.apply(&world);
            for (j, a) in self.cfg.uwb.anchors.iter().enumerate() {
                let d = (u - Vec3::from(*a)).norm();
                let noise = if sigma > 0.0 { sigma * gauss(&mut self.rng.uwb) } else { 0.0 };
                out.push(RangeMeasurement {
                    label,
                    anchor: j,
                    range: d + noise,
                });
            }
        }
        out
    }

    pub fn sense_imu(&mut self) -> ImuSample {
        let u = &self.cfg.uav;
        let r_w_b = self.attitude.rotation().inverse();
        let mut a = r_w_b.apply(&self.acceleration);
        let (an, at) = (u.accel_noise, u.attitude_noise);
        if an > 0.0 {
            for k in 0..3 {
                a[k] += an * gauss(&mut self.rng.imu);
            }
        }
        let mut roll = self.attitude.roll;
        let mut pitch = self.attitude.pitch;
        if at > 0.0 {
            roll += at * gauss(&mut self.rng.imu);
            pitch += at * gauss(&mut self.rng.imu);
        }
        ImuSample {
            accel_body: a,
            roll,
            pitch,
        }
    }

    /// Decoded QR codes in view of the downward QR camera.
    pub fn sense_qr(&mut self) -> Vec<QrObservation> {
        let q = &self.cfg.qr;
        let platform = self.platform_attitude();
        let pitch_px = q.pixel_pitch();
        let (tan_h, tan_v) = ((q.h_fov / 2.0).tan(), (q.v_fov / 2.0).tan());
        let mut out = Vec::new();
        for m in &q.markers {
            let Some((mut obs, c)) = project_marker(m, &platform, &self.position, &self.attitude, q.focal_length)
            else {
                continue;
            };
            let depth = -c.z;
            if depth < q.min_decode_height || depth > q.max_decode_height {
                continue;
            }
            if c.x.abs() > depth * tan_h || c.y.abs() > depth * tan_v {
                continue;
            }
            let diag_px = obs.diagonal / pitch_px;
            if diag_px < q.min_decode_pixels {
                continue;
            }
            if q.dropout > 0.0 && self.rng.qr.random::<f64>() < q.dropout {
                continue;
            }
            if q.pixel_noise > 0.0 {
                let s = q.pixel_noise * pitch_px;
                obs.center[0] += s * gauss(&mut self.rng.qr);
                obs.center[1] += s * gauss(&mut self.rng.qr);
                obs.diagonal = (obs.diagonal + s * std::f64::consts::SQRT_2 * gauss(&mut self.rng.qr))
                    .max(pitch_px);
                obs.yaw = wrap(obs.yaw + q.pixel_noise * std::f64::consts::SQRT_2 / diag_px * gauss(&mut self.rng.qr));
            }
            out.push(obs);
        }
        out
    }

    /// Cargo candidates when a detection frame is due this tick, `None`
    /// between frames.
    pub fn sense_cargo(&mut self, dt: f64) -> Option<Vec<DetectionObservation>> {
        self.detection_clock += dt;
        let period = 1.0 / self.cfg.detection.frame_rate;
        if self.detection_clock + 1e-12 < period {
            return None;
        }
        self.detection_clock -= period;
        Some(self.detect_now())
    }

    /// One detector frame regardless of frame timing.
    pub fn detect_now(&mut self) -> Vec<DetectionObservation> {
        let d = self.cfg.detection.clone();
        let f = d.focal_px();
        let (tan_h, tan_v) = ((d.h_fov / 2.0).tan(), (d.v_fov / 2.0).tan());
        let r_w_b = self.attitude.rotation().inverse();
        let mut out = Vec::new();
        for i in 0..self.cfg.cargoes.len() {
            let base = self.cfg.cargoes[i].base_confidence;
            let jitter = d.confidence_jitter * gauss(&mut self.rng.detection);
            self.confidences[i] = (base + d.confidence_memory * (self.confidences[i] - base) + jitter).clamp(0.0, 1.0);
            if self.carried == Some(i) {
                continue;
            }
            let cargo = &self.cfg.cargoes[i];
            let mut c = r_w_b.apply(&(self.cargo_top(i) - self.position));
            let depth = -c.z;
            if depth < d.min_visible_height {
                continue;
            }
            if c.x.abs() > depth * tan_h || c.y.abs() > depth * tan_v {
                continue;
            }
            let mut diag = f * cargo.top_diagonal() / depth;
            if diag < d.min_diagonal_px {
                continue;
            }
            if d.dropout > 0.0 && self.rng.detection.random::<f64>() < d.dropout {
                continue;
            }
            if d.noise > 0.0 {
                c.x += d.noise * depth * gauss(&mut self.rng.detection);
                c.y += d.noise * depth * gauss(&mut self.rng.detection);
            }
            if d.diagonal_noise > 0.0 {
                diag *= (1.0 + d.diagonal_noise * gauss(&mut self.rng.detection)).max(0.1);
            }
            let mut angle = self.cargo_yaw(i) - self.attitude.yaw;
            if d.angle_noise > 0.0 {
                angle += d.angle_noise * gauss(&mut self.rng.detection);
            }
            out.push(DetectionObservation {
                class_id: 0,
                confidence: self.confidences[i],
                center: [f * c.x / depth, f * c.y / depth],
                diagonal: diag,
                angle: fold_half_turn(angle),
                t: self.t,
            });
        }
        out
    }
}

/// A rectangle looks the same after a half turn; report its axis in (−π, 0].
pub fn fold_half_turn(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::PI);
    if r == 0.0 {
        0.0
    } else {
        r - std::f64::consts::PI
    }
}

fn within_cargo(c: &CargoConfig, rel: [f64; 2], margin: f64) -> bool {
    let d = [rel[0] - c.position[0], rel[1] - c.position[1]];
    let (s, co) = c.yaw.sin_cos();
    let x = co * d[0] + s * d[1];
    let y = -s * d[0] + co * d[1];
    x.abs() <= c.size[0] / 2.0 + margin && y.abs() <= c.size[1] / 2.0 + margin
}

pub fn platform_attitude_at(cfg: &ScenarioConfig, t: f64, yaw: f64) -> EulerAngles {
    let p = &cfg.platform;
    let tau = std::f64::consts::TAU;
    EulerAngles::new(
        p.roll_amplitude * (tau * t / p.roll_period + p.roll_phase).sin(),
        p.pitch_amplitude * (tau * t / p.pitch_period + p.pitch_phase).sin(),
        yaw,
    )
}

/// Helper for tests and tools: rotation of the platform at `t` with zero
/// heading drift.
pub fn platform_rotation_at(cfg: &ScenarioConfig, t: f64) -> Rotation {
    platform_attitude_at(cfg, t, cfg.platform.initial_yaw).rotation()
}
