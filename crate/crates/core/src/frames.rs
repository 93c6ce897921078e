//! Attitude algebra and frame transforms.
//!
//! Every rotation in the crate uses one convention: intrinsic Z-Y-X
//! (yaw, pitch, roll), mapping body coordinates into the parent frame,
//! `R = Rz(yaw) * Ry(pitch) * Rx(roll)`. This is the only convention for
//! which the label-baseline vector `R * [0, d, 0]` has the second column
//! `[SφSθCψ − CφSψ, SφSθSψ + CφCψ, SφCθ]`, which the dual-label yaw
//! recovery in [`crate::uwb`] relies on.
//!
//! Frames that are rigidly attached to another (UWB anchors and QR panel to
//! the platform, cameras and UWB labels to the body) are folded into their
//! parent, so only world, platform and body rotations appear at runtime.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Roll, pitch, yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub const fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub const fn yaw_only(yaw: f64) -> Self {
        Self::new(0.0, 0.0, yaw)
    }

    pub fn is_finite(&self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.yaw.is_finite()
    }

    pub fn rotation(&self) -> Rotation {
        rotation_from_euler(*self)
    }
}

/// A proper orthonormal 3x3 rotation, body -> parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn about_x(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Rotation(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Rotation(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Rotation(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// The inverse rotation (parent -> body).
    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    /// Z-Y-X Euler angles. At gimbal lock (|pitch| = π/2) roll is fixed to
    /// zero and the remaining rotation is folded into yaw.
    pub fn to_euler(&self) -> EulerAngles {
        let m = &self.0;
        let s = -m[(2, 0)];
        if s.abs() >= 1.0 - 1e-12 {
            let pitch = if s > 0.0 { PI / 2.0 } else { -PI / 2.0 };
            let yaw = (-m[(0, 1)]).atan2(m[(1, 1)]);
            return EulerAngles::new(0.0, pitch, yaw);
        }
        EulerAngles::new(
            m[(2, 1)].atan2(m[(2, 2)]),
            s.asin(),
            m[(1, 0)].atan2(m[(0, 0)]),
        )
    }
}

impl std::ops::Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        self.0 * v
    }
}

impl std::ops::Mul<Rotation> for Rotation {
    type Output = Rotation;
    fn mul(self, o: Rotation) -> Rotation {
        self.compose(&o)
    }
}

/// Coordinate frames of the transport system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameId {
    World,
    Platform,
    UwbAnchor,
    QrPanel,
    Body,
    UwbLabel,
    QrCamera,
    DetectionCamera,
    Cargo,
    Deck,
}

impl FrameId {
    /// The runtime frame this one is rigidly folded into.
    pub fn canonical(self) -> FrameId {
        match self {
            FrameId::UwbAnchor | FrameId::QrPanel => FrameId::Platform,
            FrameId::UwbLabel | FrameId::QrCamera | FrameId::DetectionCamera => FrameId::Body,
            other => other,
        }
    }
}

/// Body -> parent rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rotation_from_euler(e: EulerAngles) -> Rotation {
    let (sr, cr) = e.roll.sin_cos();
    let (sp, cp) = e.pitch.sin_cos();
    let (sy, cy) = e.yaw.sin_cos();
    Rotation(Matrix3::new(
        cy * cp,
        sr * sp * cy - cr * sy,
        cr * sp * cy + sr * sy,
        sy * cp,
        sr * sp * sy + cr * cy,
        cr * sp * sy - sr * cy,
        -sp,
        sr * cp,
        cr * cp,
    ))
}

pub fn transform_point(r: &Rotation, t: &Vec3, p: &Vec3) -> Vec3 {
    r.apply(p) + t
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(a))
}

/// Infallible wrap for values already known to be finite.
pub(crate) fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Mean direction of a set of angles, wrapped into (−π, π].
pub fn circular_mean(angles: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        s += a.sin();
        c += a.cos();
        n += 1;
    }
    if n == 0 || (s == 0.0 && c == 0.0) {
        return None;
    }
    Some(wrap(s.atan2(c)))
}
