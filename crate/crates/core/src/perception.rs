//! Cargo tracking from detector output.
//!
//! Detections arrive as boxes with confidences that wander from frame to
//! frame. The wavegate locks onto one candidate and afterwards only looks
//! inside a region of interest around it, so two similar cargoes cannot
//! trade places. Positions recovered from the box size go through outlier
//! rejection, a moving mean and a constant-velocity Kalman filter.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::PerceptionConfig;
use crate::error::{Error, Result};
use crate::frames::{Rotation, Vec3};

/// One detector candidate. Pixel coordinates are offsets from the image
/// centre; `u` runs along body x and `v` along body y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionObservation {
    pub class_id: u32,
    pub confidence: f64,
    pub center: [f64; 2],
    pub diagonal: f64,
    /// Orientation of the box long axis in the body frame, in (−π, 0].
    pub angle: f64,
    pub t: f64,
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Roi {
    pub fn around(obs: &DetectionObservation, scale: f64) -> Self {
        let half = obs.diagonal / std::f64::consts::SQRT_2 / 2.0 * scale;
        Roi {
            min: [obs.center[0] - half, obs.center[1] - half],
            max: [obs.center[0] + half, obs.center[1] + half],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    fn area(&self) -> f64 {
        (self.max[0] - self.min[0]).max(0.0) * (self.max[1] - self.min[1]).max(0.0)
    }

    pub fn iou(&self, other: &Roi) -> f64 {
        let inter = Roi {
            min: [self.min[0].max(other.min[0]), self.min[1].max(other.min[1])],
            max: [self.max[0].min(other.max[0]), self.max[1].min(other.max[1])],
        };
        let i = inter.area();
        let u = self.area() + other.area() - i;
        if u > 0.0 {
            i / u
        } else {
            0.0
        }
    }
}

/// Where a pixel moves when the camera turns by `delta` (old camera
/// coordinates to new). `None` if the ray ends up behind the camera.
pub fn rotate_pixel(p: [f64; 2], delta: &Rotation, focal_px: f64) -> Option<[f64; 2]> {
    let r = delta.apply(&Vec3::new(p[0], p[1], -focal_px));
    (r.z < 0.0).then(|| [-focal_px * r.x / r.z, -focal_px * r.y / r.z])
}

impl Roi {
    /// Same size, centre moved by the camera rotation `delta`.
    pub fn rotated(&self, delta: &Rotation, focal_px: f64) -> Self {
        let c = [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0];
        match rotate_pixel(c, delta, focal_px) {
            Some(n) => {
                let d = [n[0] - c[0], n[1] - c[1]];
                Roi {
                    min: [self.min[0] + d[0], self.min[1] + d[1]],
                    max: [self.max[0] + d[0], self.max[1] + d[1]],
                }
            }
            None => *self,
        }
    }
}

impl CargoTrack {
    /// Carries the ROI and the followed box across a camera rotation
    /// between frames.
    pub fn compensate_rotation(&mut self, delta: &Rotation, focal_px: f64) {
        self.roi = self.roi.map(|r| r.rotated(delta, focal_px));
        if let Some(t) = self.target.as_mut() {
            if let Some(c) = rotate_pixel(t.center, delta, focal_px) {
                t.center = c;
            }
        }
    }
}

fn bbox(obs: &DetectionObservation) -> Roi {
    Roi::around(obs, 1.0)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CargoTrack {
    pub locked: bool,
    /// `None` means the whole image is searched.
    pub roi: Option<Roi>,
    /// Box currently followed.
    pub target: Option<DetectionObservation>,
    streak: usize,
    pub frames_since_seen: usize,
    /// Smoothed cargo position in the body frame.
    pub position: Option<Vec3>,
    pub velocity: Vec3,
    pub yaw: Option<f64>,
}

impl CargoTrack {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Lock, follow and release rules of the wavegate.
pub fn wavegate_select(
    candidates: &[DetectionObservation],
    track: &CargoTrack,
    cfg: &PerceptionConfig,
) -> (CargoTrack, Option<DetectionObservation>) {
    let mut next = track.clone();
    let best = |pool: &mut dyn Iterator<Item = &DetectionObservation>| {
        pool.fold(None::<DetectionObservation>, |acc, c| match acc {
            Some(a) if a.confidence >= c.confidence => Some(a),
            _ => Some(*c),
        })
    };

    let chosen = if track.locked {
        let roi = track.roi;
        best(&mut candidates
            .iter()
            .filter(|c| roi.is_none_or(|r| r.contains(c.center))))
    } else {
        best(&mut candidates.iter())
    };

    match chosen {
        Some(c) => {
            next.frames_since_seen = 0;
            if track.locked {
                next.roi = Some(Roi::around(&c, cfg.roi_scale));
            } else {
                let same = track
                    .target
                    .is_some_and(|t| bbox(&t).iou(&bbox(&c)) >= cfg.iou_gate);
                next.streak = if same { track.streak + 1 } else { 1 };
                if next.streak >= cfg.lock_frames {
                    next.locked = true;
                    next.roi = Some(Roi::around(&c, cfg.roi_scale));
                }
            }
            next.target = Some(c);
        }
        None => {
            next.frames_since_seen = track.frames_since_seen + 1;
            if next.frames_since_seen >= cfg.loss_frames {
                next = CargoTrack::new();
                next.frames_since_seen = cfg.loss_frames;
            }
        }
    }
    (next, chosen)
}

/// Pinhole inversion of a box of known physical diagonal, camera at the
/// origin looking down −z.
pub fn cargo_position_from_detection(
    obs: &DetectionObservation,
    focal_px: f64,
    true_diagonal: f64,
) -> Result<Vec3> {
    if !(obs.diagonal > 0.0) || !obs.diagonal.is_finite() {
        return Err(Error::Degenerate(format!("box diagonal {}", obs.diagonal)));
    }
    if !(focal_px > 0.0 && true_diagonal > 0.0) {
        return Err(Error::InvalidArgument("focal length and diagonal must be positive".into()));
    }
    let k = true_diagonal / obs.diagonal;
    Ok(Vec3::new(obs.center[0] * k, obs.center[1] * k, -focal_px * k))
}

/// Outlier gate, moving mean and velocity filter over body-frame cargo
/// positions.
#[derive(Debug, Clone)]
pub struct TrackSmoother {
    cfg: PerceptionConfig,
    gate: VecDeque<Vec3>,
    mean: VecDeque<Vec3>,
    rejected_run: usize,
    kf: [AxisKf; 3],
    last_t: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct AxisKf {
    x: [f64; 2],
    p: [[f64; 2]; 2],
    init: bool,
}

impl AxisKf {
    fn new() -> Self {
        Self {
            x: [0.0; 2],
            p: [[0.0; 2]; 2],
            init: false,
        }
    }

    fn update(&mut self, z: f64, dt: f64, q: f64, r: f64) {
        if !self.init {
            self.x = [z, 0.0];
            self.p = [[r, 0.0], [0.0, 1.0]];
            self.init = true;
            return;
        }
        let [x, v] = self.x;
        let p = self.p;
        let xp = [x + v * dt, v];
        let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
        let pp = [
            [
                p[0][0] + dt * (p[1][0] + p[0][1]) + dt2 * p[1][1] + q * dt4 / 4.0,
                p[0][1] + dt * p[1][1] + q * dt3 / 2.0,
            ],
            [
                p[1][0] + dt * p[1][1] + q * dt3 / 2.0,
                p[1][1] + q * dt2,
            ],
        ];
        let s = pp[0][0] + r;
        let k = [pp[0][0] / s, pp[1][0] / s];
        let y = z - xp[0];
        self.x = [xp[0] + k[0] * y, xp[1] + k[1] * y];
        self.p = [
            [(1.0 - k[0]) * pp[0][0], (1.0 - k[0]) * pp[0][1]],
            [pp[1][0] - k[1] * pp[0][0], pp[1][1] - k[1] * pp[0][1]],
        ];
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Result of feeding one raw position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothed {
    pub accepted: bool,
    pub position: Vec3,
    pub velocity: Vec3,
}

impl TrackSmoother {
    pub fn new(cfg: &PerceptionConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            gate: VecDeque::with_capacity(cfg.mad_window),
            mean: VecDeque::with_capacity(cfg.mean_window),
            rejected_run: 0,
            kf: [AxisKf::new(); 3],
            last_t: None,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(&self.cfg);
    }

    fn is_outlier(&self, p: &Vec3) -> bool {
        if self.gate.len() < 3 {
            return false;
        }
        (0..3).any(|axis| {
            let mut vals: Vec<f64> = self.gate.iter().map(|q| q[axis]).collect();
            let med = median(&mut vals);
            let mut dev: Vec<f64> = vals.iter().map(|v| (v - med).abs()).collect();
            let mad = 1.4826 * median(&mut dev);
            (p[axis] - med).abs() > self.cfg.mad_k * mad.max(self.cfg.mad_floor)
        })
    }

    /// Feeds one raw position taken at time `t`.
    pub fn update(&mut self, raw: Vec3, t: f64) -> Smoothed {
        let mut accepted = !self.is_outlier(&raw);
        if !accepted {
            self.rejected_run += 1;
            // A long run of "outliers" means the target really moved.
            if self.rejected_run > self.cfg.mad_window / 2 {
                self.gate.clear();
                self.mean.clear();
                self.kf = [AxisKf::new(); 3];
                accepted = true;
            }
        }
        if accepted {
            self.rejected_run = 0;
            if self.gate.len() == self.cfg.mad_window {
                self.gate.pop_front();
            }
            self.gate.push_back(raw);
            if self.mean.len() == self.cfg.mean_window {
                self.mean.pop_front();
            }
            self.mean.push_back(raw);
            let dt = self.last_t.map(|l| (t - l).max(1e-6)).unwrap_or(0.0);
            let q = self.cfg.velocity_process_noise.powi(2);
            let r = self.cfg.velocity_measurement_noise.powi(2);
            for (axis, kf) in self.kf.iter_mut().enumerate() {
                kf.update(raw[axis], dt, q, r);
            }
            self.last_t = Some(t);
        }
        let position = if self.mean.is_empty() {
            raw
        } else {
            self.mean.iter().sum::<Vec3>() / self.mean.len() as f64
        };
        Smoothed {
            accepted,
            position,
            velocity: Vec3::new(self.kf[0].x[1], self.kf[1].x[1], self.kf[2].x[1]),
        }
    }
}
