//! Pose from QR codes on the landing platform.
//!
//! The camera is a pinhole looking down the body −z axis. An observation
//! carries the code's image-plane diagonal and centre (in sensor units, the
//! same units as the focal length) and its in-image yaw. Similar triangles
//! give the code centre in the camera frame; the platform attitude and the
//! IMU roll/pitch then place the UAV in the world frame.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{circular_mean, wrap, EulerAngles, Rotation, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrMarker {
    pub label: u32,
    /// Physical diagonal of the printed code.
    pub diagonal: f64,
    /// Centre of the code on the panel, platform frame.
    pub x: f64,
    pub y: f64,
}

impl QrMarker {
    pub fn center(&self) -> Vec3 {
        Vec3::new(self.x, self.y, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrObservation {
    pub label: u32,
    /// Diagonal in the image plane.
    pub diagonal: f64,
    /// Code centre in the image plane.
    pub center: [f64; 2],
    /// Yaw of the code in the image frame.
    pub yaw: f64,
    pub focal_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoseSource {
    Qr,
    Uwb,
}

impl PoseSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PoseSource::Qr => "qr",
            PoseSource::Uwb => "uwb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub position: Vec3,
    pub yaw: f64,
    pub source: PoseSource,
    pub t: f64,
}

/// Markers indexed by label.
#[derive(Debug, Clone, Default)]
pub struct MarkerTable(HashMap<u32, QrMarker>);

impl MarkerTable {
    pub fn new(markers: &[QrMarker]) -> Self {
        MarkerTable(markers.iter().map(|m| (m.label, *m)).collect())
    }

    pub fn get(&self, label: u32) -> Option<&QrMarker> {
        self.0.get(&label)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Code centre in the camera (body) frame:
/// `z = −f d_e / d_e' − f`, `x = q_x' d_e / d_e'`, `y = q_y' d_e / d_e'`.
pub fn marker_camera_coords(obs: &QrObservation, marker: &QrMarker) -> Result<Vec3> {
    if obs.label != marker.label {
        return Err(Error::LabelMismatch {
            observation: obs.label,
            marker: marker.label,
        });
    }
    if !(obs.diagonal > 0.0) || !obs.diagonal.is_finite() {
        return Err(Error::Degenerate(format!("image diagonal {}", obs.diagonal)));
    }
    if !(obs.focal_length > 0.0) {
        return Err(Error::InvalidArgument("focal length must be positive".into()));
    }
    let scale = marker.diagonal / obs.diagonal;
    Ok(Vec3::new(
        obs.center[0] * scale,
        obs.center[1] * scale,
        -obs.focal_length * scale - obs.focal_length,
    ))
}

/// Noiseless forward model: what the camera sees of `marker` given the
/// platform attitude and the UAV pose. Returns the observation and the code
/// centre in the camera frame; `None` when the code is not in front of the
/// lens.
pub fn project_marker(
    marker: &QrMarker,
    platform: &EulerAngles,
    position: &Vec3,
    attitude: &EulerAngles,
    focal_length: f64,
) -> Option<(QrObservation, Vec3)> {
    let r_a_w = platform.rotation();
    let r_w_b = attitude.rotation().inverse();
    let c = r_w_b.apply(&(r_a_w.apply(&marker.center()) - position));
    let gap = -c.z - focal_length;
    if !(gap > 0.0) {
        return None;
    }
    let k = focal_length / gap;
    let yaw_bq = wrap(platform.yaw - attitude.yaw);
    Some((
        QrObservation {
            label: marker.label,
            diagonal: marker.diagonal * k,
            center: [c.x * k, c.y * k],
            yaw: wrap(yaw_bq - std::f64::consts::PI),
            focal_length,
        },
        c,
    ))
}

/// Position and yaw implied by one code.
pub fn single_code_pose(
    obs: &QrObservation,
    marker: &QrMarker,
    r_a_w: &Rotation,
    platform_yaw: f64,
    roll: f64,
    pitch: f64,
) -> Result<(Vec3, f64)> {
    let c = marker_camera_coords(obs, marker)?;
    let yaw_bq = obs.yaw + std::f64::consts::PI;
    let yaw = wrap(platform_yaw - yaw_bq);
    let r_b_w = EulerAngles::new(roll, pitch, yaw).rotation();
    Ok((r_a_w.apply(&marker.center()) - r_b_w.apply(&c), yaw))
}

/// Averages the single-code poses of every resolvable observation.
///
/// An empty input is "no fix" (`Ok(None)`). Observations with unknown labels
/// are skipped; if nothing is left the call fails.
pub fn estimate_pose(
    observations: &[QrObservation],
    markers: &MarkerTable,
    platform: &EulerAngles,
    roll: f64,
    pitch: f64,
    t: f64,
) -> Result<Option<PoseEstimate>> {
    if observations.is_empty() {
        return Ok(None);
    }
    let r_a_w = platform.rotation();
    let mut sum = Vec3::zeros();
    let mut yaws = Vec::with_capacity(observations.len());
    let mut last_err = None;
    for obs in observations {
        let Some(marker) = markers.get(obs.label) else {
            last_err = Some(Error::InvalidArgument(format!("unknown QR label {}", obs.label)));
            continue;
        };
        match single_code_pose(obs, marker, &r_a_w, platform.yaw, roll, pitch) {
            Ok((p, yaw)) => {
                sum += p;
                yaws.push(yaw);
            }
            Err(e) => last_err = Some(e),
        }
    }
    if yaws.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::InvalidArgument("no usable QR code".into())));
    }
    let n = yaws.len() as f64;
    let yaw = circular_mean(yaws.iter().copied()).unwrap_or(yaws[0]);
    Ok(Some(PoseEstimate {
        position: sum / n,
        yaw,
        source: PoseSource::Qr,
        t,
    }))
}
