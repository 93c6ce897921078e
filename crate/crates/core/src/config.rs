//! Scenario configuration.
//!
//! A scenario is a JSON document. All lengths are metres, times seconds,
//! masses kilograms. Angles are written in degrees in the file (fields with a
//! `_deg` suffix) and held in radians in memory. Every section has defaults,
//! so `{}` is a valid scenario equal to [`ScenarioConfig::default`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{ChannelGains, GainTable, PidGains, VelocityLimits};
use crate::error::{Error, Result};
use crate::qr::QrMarker;

/// Serde adapter: degrees on disk, radians in memory.
mod deg {
    use serde::{Deserialize, Deserializer, Serializer};

    /// Writes a degree value that converts back to exactly `v`, preferring a
    /// short decimal. Every value that was read from degrees has one.
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(to_degrees_exact(*v))
    }

    pub fn to_degrees_exact(v: f64) -> f64 {
        let d = v.to_degrees();
        if !d.is_finite() {
            return d;
        }
        let short = (1..=15).map(|p| {
            let scale = 10f64.powi(p);
            (d * scale).round() / scale
        });
        let mut near = vec![d];
        let (mut up, mut down) = (d, d);
        for _ in 0..8 {
            up = up.next_up();
            down = down.next_down();
            near.extend([up, down]);
        }
        short.chain(near).find(|c| c.to_radians() == v).unwrap_or(d)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(f64::deserialize(d)?.to_radians())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Control and simulation period.
    pub dt: f64,
    pub max_mission_time: f64,
    pub platform: PlatformConfig,
    pub uwb: UwbConfig,
    pub qr: QrConfig,
    pub detection: DetectionConfig,
    pub deck: DeckConfig,
    pub cargoes: Vec<CargoConfig>,
    pub uav: UavConfig,
    pub wind: WindConfig,
    pub hybrid: HybridConfig,
    pub perception: PerceptionConfig,
    pub mission: MissionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformConfig {
    /// Extent along the platform x axis.
    pub length: f64,
    /// Extent along the platform y axis.
    pub width: f64,
    #[serde(rename = "roll_amplitude_deg", with = "deg")]
    pub roll_amplitude: f64,
    #[serde(rename = "pitch_amplitude_deg", with = "deg")]
    pub pitch_amplitude: f64,
    pub roll_period: f64,
    pub pitch_period: f64,
    #[serde(rename = "roll_phase_deg", with = "deg")]
    pub roll_phase: f64,
    #[serde(rename = "pitch_phase_deg", with = "deg")]
    pub pitch_phase: f64,
    #[serde(rename = "initial_yaw_deg", with = "deg")]
    pub initial_yaw: f64,
    /// Heading random-walk intensity, degrees per square-root second.
    #[serde(rename = "yaw_walk_rate_deg", with = "deg")]
    pub yaw_walk_rate: f64,
    /// Take-off and landing pad of this UAV, platform frame.
    pub home_pad: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UwbConfig {
    /// Anchor positions in the platform frame.
    pub anchors: Vec<[f64; 3]>,
    /// Distance between the two body-fixed labels.
    pub label_baseline: f64,
    pub range_noise: f64,
    pub occlusion: Option<OcclusionZone>,
    pub ekf: EkfConfig,
    /// Add the rotating-platform-frame acceleration terms to the filter input.
    pub compensate_platform_motion: bool,
}

/// World-frame box in which range noise is inflated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionZone {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub noise_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    /// Jerk-noise scale entering through the D matrix, m/s^3.
    pub jerk_noise: f64,
    /// Range noise assumed by the filter.
    pub range_noise: f64,
    pub init_position_std: f64,
    pub init_velocity_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QrConfig {
    /// Physical focal length of the QR camera.
    pub focal_length: f64,
    pub image_width_px: f64,
    #[serde(rename = "h_fov_deg", with = "deg")]
    pub h_fov: f64,
    #[serde(rename = "v_fov_deg", with = "deg")]
    pub v_fov: f64,
    /// Image-plane measurement noise in pixels (corner quantisation).
    pub pixel_noise: f64,
    pub min_decode_pixels: f64,
    pub min_decode_height: f64,
    pub max_decode_height: f64,
    pub dropout: f64,
    pub markers: Vec<QrMarker>,
}

impl QrConfig {
    /// Sensor pixel pitch implied by focal length, field of view and width.
    pub fn pixel_pitch(&self) -> f64 {
        2.0 * self.focal_length * (self.h_fov / 2.0).tan() / self.image_width_px
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    #[serde(rename = "h_fov_deg", with = "deg")]
    pub h_fov: f64,
    #[serde(rename = "v_fov_deg", with = "deg")]
    pub v_fov: f64,
    pub image_width_px: f64,
    pub image_height_px: f64,
    pub frame_rate: f64,
    /// Lateral position noise per metre of depth.
    pub noise: f64,
    /// Relative noise on the bounding-box diagonal.
    pub diagonal_noise: f64,
    #[serde(rename = "angle_noise_deg", with = "deg")]
    pub angle_noise: f64,
    pub dropout: f64,
    /// Below this height above the cargo top nothing is reported.
    pub min_visible_height: f64,
    /// Smallest bounding-box diagonal the detector resolves.
    pub min_diagonal_px: f64,
    /// AR(1) coefficient and innovation of the per-cargo confidence process.
    pub confidence_memory: f64,
    pub confidence_jitter: f64,
}

impl DetectionConfig {
    pub fn focal_px(&self) -> f64 {
        self.image_width_px / 2.0 / (self.h_fov / 2.0).tan()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeckConfig {
    pub center: [f64; 2],
    #[serde(rename = "yaw_deg", with = "deg")]
    pub yaw: f64,
    /// Extents along the deck x and y axes.
    pub size: [f64; 2],
    pub height: f64,
    /// Drift of the target vessel relative to the world frame.
    pub drift_velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CargoConfig {
    /// Position in the deck frame relative to the deck centre.
    pub position: [f64; 2],
    #[serde(rename = "yaw_deg", with = "deg")]
    pub yaw: f64,
    pub size: [f64; 3],
    pub mass: f64,
    pub base_confidence: f64,
}

impl CargoConfig {
    pub fn top_diagonal(&self) -> f64 {
        self.size[0].hypot(self.size[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavConfig {
    pub mass: f64,
    /// First-order lag of the low-level velocity loop.
    pub velocity_time_constant: f64,
    /// Lag between the acceleration demand and the tilt that delivers it.
    pub attitude_time_constant: f64,
    /// Total thrust per unit sum of squared rotor speeds, N s^2.
    pub thrust_coefficient: f64,
    /// Relative per-rotor speed noise.
    pub rotor_noise: f64,
    pub accel_noise: f64,
    #[serde(rename = "attitude_noise_deg", with = "deg")]
    pub attitude_noise: f64,
    /// Heading relative to the platform at start, also the calibration value.
    #[serde(rename = "initial_yaw_deg", with = "deg")]
    pub initial_yaw: f64,
    /// Largest offset from the cargo centre at which the adhesive pad holds.
    pub grasp_radius: f64,
    /// Landing-gear radius; the UAV rests on a cargo within this distance of
    /// its footprint.
    pub footprint_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindConfig {
    pub mean_speed: f64,
    #[serde(rename = "direction_deg", with = "deg")]
    pub direction: f64,
    /// Stationary standard deviation of the gust process.
    pub gust_std: f64,
    pub gust_time_constant: f64,
    pub max_speed: f64,
    /// Wind speed to disturbance acceleration, 1/s.
    pub drag: f64,
    /// Time constant with which the low-level controller cancels steady
    /// wind; zero disables rejection.
    pub rejection_time_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    pub window: usize,
    pub qr_debounce: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub lock_frames: usize,
    pub loss_frames: usize,
    pub roi_scale: f64,
    pub iou_gate: f64,
    pub mean_window: usize,
    pub mad_window: usize,
    pub mad_k: f64,
    pub mad_floor: f64,
    pub velocity_process_noise: f64,
    pub velocity_measurement_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geofence {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Geofence {
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    /// Height above the pad at which take-off ends.
    pub takeoff_altitude: f64,
    /// Height above the pad below which only vertical motion is commanded.
    pub danger_zone_height: f64,
    /// Initial search height above the deck.
    pub search_altitude: f64,
    pub altitude_step: f64,
    pub min_search_altitude: f64,
    pub waypoint_radius: f64,
    /// Height above the cargo where the yaw is aligned.
    pub align_height: f64,
    #[serde(rename = "yaw_tolerance_deg", with = "deg")]
    pub yaw_tolerance: f64,
    pub pre_blind_height: f64,
    pub pre_blind_height_tolerance: f64,
    pub blind_threshold: f64,
    pub blind_hold_time: f64,
    pub blind_descent_speed: f64,
    /// Descent speed cap while closing in on the pre-blind height.
    pub pre_blind_descent_speed: f64,
    /// Time the cargo may stay out of view during landing before
    /// searching again.
    pub reacquire_time: f64,
    pub adsorb_action_time: f64,
    pub adsorb_settle_time: f64,
    pub adhesion_success_probability: f64,
    pub check_climb_time: f64,
    pub attach_threshold: f64,
    pub hover_window: f64,
    pub max_attempts: u32,
    /// Transit height above the pad on the way home.
    pub return_altitude: f64,
    pub return_descent_radius: f64,
    pub geofence: Geofence,
    pub gains: GainTable,
    pub limits: VelocityLimits,
    pub integral_window: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            dt: 0.02,
            max_mission_time: 600.0,
            platform: PlatformConfig::default(),
            uwb: UwbConfig::default(),
            qr: QrConfig::default(),
            detection: DetectionConfig::default(),
            deck: DeckConfig::default(),
            cargoes: vec![
                CargoConfig::default(),
                CargoConfig {
                    position: [-1.1, -0.9],
                    yaw: 25f64.to_radians(),
                    base_confidence: 0.78,
                    ..CargoConfig::default()
                },
            ],
            uav: UavConfig::default(),
            wind: WindConfig::default(),
            hybrid: HybridConfig::default(),
            perception: PerceptionConfig::default(),
            mission: MissionConfig::default(),
        }
    }
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            length: 3.5,
            width: 4.8,
            roll_amplitude: 8f64.to_radians(),
            pitch_amplitude: 10f64.to_radians(),
            roll_period: 6.0,
            pitch_period: 7.5,
            roll_phase: 0.0,
            pitch_phase: 60f64.to_radians(),
            initial_yaw: 0.0,
            yaw_walk_rate: 0.3f64.to_radians(),
            home_pad: [1.0, 2.0, 0.0],
        }
    }
}

impl Default for UwbConfig {
    fn default() -> Self {
        Self {
            anchors: vec![
                [1.7, 2.4, 0.2],
                [1.7, -2.4, 0.2],
                [-1.7, 2.4, 0.2],
                [-1.7, -2.4, 0.2],
                [-1.7, 0.8, 3.7],
                [-1.7, -0.8, 3.7],
            ],
            label_baseline: 0.8,
            range_noise: 0.10,
            occlusion: None,
            ekf: EkfConfig::default(),
            compensate_platform_motion: true,
        }
    }
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            jerk_noise: 1.0,
            range_noise: 0.10,
            init_position_std: 0.5,
            init_velocity_std: 0.5,
        }
    }
}

impl Default for QrConfig {
    fn default() -> Self {
        Self {
            focal_length: 0.004,
            image_width_px: 1280.0,
            h_fov: 81f64.to_radians(),
            v_fov: 53f64.to_radians(),
            pixel_noise: 5.0,
            min_decode_pixels: 12.0,
            min_decode_height: 0.3,
            max_decode_height: 6.0,
            dropout: 0.0,
            markers: default_markers(),
        }
    }
}

/// Two boards of 8x8 codes centred on the two UAV pads.
pub fn default_markers() -> Vec<QrMarker> {
    let mut markers = Vec::with_capacity(128);
    let mut label = 0u32;
    for pad in [[1.0, 2.0], [1.0, -2.0]] {
        for i in 0..8 {
            for j in 0..8 {
                markers.push(QrMarker {
                    label,
                    diagonal: 0.16,
                    x: pad[0] + (i as f64 - 3.5) * 0.18,
                    y: pad[1] + (j as f64 - 3.5) * 0.18,
                });
                label += 1;
            }
        }
    }
    markers
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            h_fov: 106f64.to_radians(),
            v_fov: 73f64.to_radians(),
            image_width_px: 1920.0,
            image_height_px: 1080.0,
            frame_rate: 21.3,
            noise: 0.005,
            diagonal_noise: 0.02,
            angle_noise: 2f64.to_radians(),
            dropout: 0.0,
            min_visible_height: 0.07,
            min_diagonal_px: 40.0,
            confidence_memory: 0.8,
            confidence_jitter: 0.05,
        }
    }
}

impl Default for DeckConfig {
    fn default() -> Self {
        Self {
            center: [6.5, 2.0],
            yaw: 0.0,
            size: [4.0, 4.0],
            height: 1.0,
            drift_velocity: [0.0, 0.0],
        }
    }
}

impl Default for CargoConfig {
    fn default() -> Self {
        Self {
            position: [0.8, 0.6],
            yaw: -10f64.to_radians(),
            size: [0.30, 0.22, 0.10],
            mass: 0.89,
            base_confidence: 0.8,
        }
    }
}

impl Default for UavConfig {
    fn default() -> Self {
        Self {
            mass: 7.9,
            velocity_time_constant: 0.3,
            attitude_time_constant: 0.1,
            thrust_coefficient: 1.2e-4,
            rotor_noise: 0.0,
            accel_noise: 0.0,
            attitude_noise: 0.0,
            initial_yaw: 0.0,
            grasp_radius: 0.2,
            footprint_radius: 0.3,
        }
    }
}

impl Default for WindConfig {
    fn default() -> Self {
        Self {
            mean_speed: 0.0,
            direction: 135f64.to_radians(),
            gust_std: 0.0,
            gust_time_constant: 4.0,
            max_speed: 12.0,
            drag: 0.8 / (0.3 * 12.0),
            rejection_time_constant: 1.0,
        }
    }
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            window: 25,
            qr_debounce: 2,
        }
    }
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            lock_frames: 5,
            loss_frames: 10,
            roi_scale: 2.0,
            iou_gate: 0.3,
            mean_window: 10,
            mad_window: 15,
            mad_k: 3.0,
            mad_floor: 0.01,
            velocity_process_noise: 0.5,
            velocity_measurement_noise: 0.01,
        }
    }
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            takeoff_altitude: 3.0,
            danger_zone_height: 2.0,
            search_altitude: 5.0,
            altitude_step: 1.0,
            min_search_altitude: 2.0,
            waypoint_radius: 0.2,
            align_height: 1.0,
            yaw_tolerance: 6f64.to_radians(),
            pre_blind_height: 0.10,
            pre_blind_height_tolerance: 0.03,
            blind_threshold: 0.10,
            blind_hold_time: 2.0,
            blind_descent_speed: 0.2,
            pre_blind_descent_speed: 0.1,
            reacquire_time: 1.0,
            adsorb_action_time: 10.0,
            adsorb_settle_time: 6.0,
            adhesion_success_probability: 1.0,
            check_climb_time: 2.0,
            attach_threshold: 0.05,
            hover_window: 2.0,
            max_attempts: 5,
            return_altitude: 3.0,
            return_descent_radius: 0.3,
            geofence: Geofence {
                min: [-6.0, -8.0, -2.0],
                max: [15.0, 10.0, 12.0],
            },
            gains: GainTable::default(),
            limits: VelocityLimits::default(),
            integral_window: 3.0,
        }
    }
}

impl Default for GainTable {
    fn default() -> Self {
        let phase = |kp, ki, kd| PidGains {
            x: ChannelGains::new(kp, ki, kd),
            y: ChannelGains::new(kp, ki, kd),
            z: ChannelGains::new(kp, ki, kd),
            yaw: ChannelGains::new(0.1, 0.0, 0.0),
        };
        Self {
            takeoff: phase(0.8, 0.0, 0.2),
            search: phase(0.5, 0.0, 0.0),
            land: phase(0.3, 0.001, 0.05),
            return_: phase(0.1, 0.001, 0.0),
        }
    }
}

impl Default for VelocityLimits {
    fn default() -> Self {
        Self {
            horizontal: 0.6,
            vertical: 0.3,
            yaw_rate: 0.5,
        }
    }
}

impl ScenarioConfig {
    /// The bundled scenario replicating the competition conditions:
    /// oscillating platform, gusty wind, noisy sensors.
    pub fn competition_replica() -> Self {
        let mut cfg = Self {
            name: "competition-replica".into(),
            ..Self::default()
        };
        cfg.deck.drift_velocity = [0.02, -0.01];
        cfg.wind = WindConfig {
            mean_speed: 8.0,
            gust_std: 1.5,
            ..WindConfig::default()
        };
        cfg.uav.rotor_noise = 0.005;
        cfg.uav.accel_noise = 0.05;
        cfg.uav.attitude_noise = 0.2f64.to_radians();
        cfg.detection.dropout = 0.02;
        cfg.qr.dropout = 0.02;
        cfg.uwb.occlusion = Some(OcclusionZone {
            min: [7.5, -1.0, 0.0],
            max: [9.5, 5.0, 4.0],
            noise_factor: 5.0,
        });
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| {
            Error::config(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    /// Checks every documented invariant, reporting the first violation with
    /// its field path.
    pub fn validate(&self) -> Result<()> {
        fn pos(path: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be positive, got {v}")))
            }
        }
        fn nonneg(path: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be non-negative, got {v}")))
            }
        }
        fn unit(path: &str, v: f64) -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(path, format!("must lie in [0, 1], got {v}")))
            }
        }
        fn fov(path: &str, v: f64) -> Result<()> {
            if v > 0.0 && v < std::f64::consts::PI {
                Ok(())
            } else {
                Err(Error::config(path, "must lie in (0, 180) degrees"))
            }
        }

        pos("dt", self.dt)?;
        if self.dt > 0.1 {
            return Err(Error::config("dt", "must not exceed 0.1 s"));
        }
        pos("max_mission_time", self.max_mission_time)?;

        let p = &self.platform;
        pos("platform.length", p.length)?;
        pos("platform.width", p.width)?;
        nonneg("platform.roll_amplitude_deg", p.roll_amplitude)?;
        nonneg("platform.pitch_amplitude_deg", p.pitch_amplitude)?;
        pos("platform.roll_period", p.roll_period)?;
        pos("platform.pitch_period", p.pitch_period)?;
        nonneg("platform.yaw_walk_rate_deg", p.yaw_walk_rate)?;

        let u = &self.uwb;
        if u.anchors.len() < 3 {
            return Err(Error::config("uwb.anchors", "need at least three anchors"));
        }
        let anchors: Vec<_> = u.anchors.iter().map(|a| crate::frames::Vec3::from(*a)).collect();
        crate::uwb::AnchorSet::new(anchors)
            .map_err(|e| Error::config("uwb.anchors", e.to_string()))?;
        pos("uwb.label_baseline", u.label_baseline)?;
        nonneg("uwb.range_noise", u.range_noise)?;
        if let Some(z) = &u.occlusion {
            pos("uwb.occlusion.noise_factor", z.noise_factor)?;
        }
        pos("uwb.ekf.jerk_noise", u.ekf.jerk_noise)?;
        pos("uwb.ekf.range_noise", u.ekf.range_noise)?;
        pos("uwb.ekf.init_position_std", u.ekf.init_position_std)?;
        pos("uwb.ekf.init_velocity_std", u.ekf.init_velocity_std)?;

        let q = &self.qr;
        pos("qr.focal_length", q.focal_length)?;
        pos("qr.image_width_px", q.image_width_px)?;
        fov("qr.h_fov_deg", q.h_fov)?;
        fov("qr.v_fov_deg", q.v_fov)?;
        nonneg("qr.pixel_noise", q.pixel_noise)?;
        unit("qr.dropout", q.dropout)?;
        let mut labels = std::collections::HashSet::new();
        for (i, m) in q.markers.iter().enumerate() {
            pos(&format!("qr.markers[{i}].diagonal"), m.diagonal)?;
            if !labels.insert(m.label) {
                return Err(Error::config(
                    format!("qr.markers[{i}].label"),
                    format!("duplicate label {}", m.label),
                ));
            }
        }

        let d = &self.detection;
        fov("detection.h_fov_deg", d.h_fov)?;
        fov("detection.v_fov_deg", d.v_fov)?;
        pos("detection.image_width_px", d.image_width_px)?;
        pos("detection.image_height_px", d.image_height_px)?;
        pos("detection.frame_rate", d.frame_rate)?;
        nonneg("detection.noise", d.noise)?;
        unit("detection.dropout", d.dropout)?;
        nonneg("detection.min_visible_height", d.min_visible_height)?;
        unit("detection.confidence_memory", d.confidence_memory)?;

        pos("deck.size[0]", self.deck.size[0])?;
        pos("deck.size[1]", self.deck.size[1])?;
        if self.cargoes.is_empty() {
            return Err(Error::config("cargoes", "need at least one cargo"));
        }
        for (i, c) in self.cargoes.iter().enumerate() {
            pos(&format!("cargoes[{i}].mass"), c.mass)?;
            for (k, s) in c.size.iter().enumerate() {
                pos(&format!("cargoes[{i}].size[{k}]"), *s)?;
            }
            unit(&format!("cargoes[{i}].base_confidence"), c.base_confidence)?;
        }

        pos("uav.mass", self.uav.mass)?;
        pos("uav.velocity_time_constant", self.uav.velocity_time_constant)?;
        pos("uav.attitude_time_constant", self.uav.attitude_time_constant)?;
        pos("uav.thrust_coefficient", self.uav.thrust_coefficient)?;
        nonneg("uav.rotor_noise", self.uav.rotor_noise)?;
        pos("uav.grasp_radius", self.uav.grasp_radius)?;
        nonneg("uav.footprint_radius", self.uav.footprint_radius)?;

        let w = &self.wind;
        nonneg("wind.mean_speed", w.mean_speed)?;
        nonneg("wind.gust_std", w.gust_std)?;
        pos("wind.gust_time_constant", w.gust_time_constant)?;
        nonneg("wind.max_speed", w.max_speed)?;
        nonneg("wind.drag", w.drag)?;
        nonneg("wind.rejection_time_constant", w.rejection_time_constant)?;

        if self.hybrid.window == 0 {
            return Err(Error::config("hybrid.window", "must be at least 1"));
        }
        if self.perception.lock_frames == 0 || self.perception.loss_frames == 0 {
            return Err(Error::config("perception", "lock and loss frames must be at least 1"));
        }
        if self.perception.mean_window == 0 || self.perception.mad_window == 0 {
            return Err(Error::config("perception", "windows must be at least 1"));
        }

        let m = &self.mission;
        for (name, v) in [
            ("takeoff_altitude", m.takeoff_altitude),
            ("search_altitude", m.search_altitude),
            ("altitude_step", m.altitude_step),
            ("min_search_altitude", m.min_search_altitude),
            ("waypoint_radius", m.waypoint_radius),
            ("align_height", m.align_height),
            ("yaw_tolerance_deg", m.yaw_tolerance),
            ("pre_blind_height", m.pre_blind_height),
            ("pre_blind_height_tolerance", m.pre_blind_height_tolerance),
            ("blind_threshold", m.blind_threshold),
            ("blind_hold_time", m.blind_hold_time),
            ("blind_descent_speed", m.blind_descent_speed),
            ("pre_blind_descent_speed", m.pre_blind_descent_speed),
            ("reacquire_time", m.reacquire_time),
            ("adsorb_action_time", m.adsorb_action_time),
            ("adsorb_settle_time", m.adsorb_settle_time),
            ("check_climb_time", m.check_climb_time),
            ("hover_window", m.hover_window),
            ("return_altitude", m.return_altitude),
            ("return_descent_radius", m.return_descent_radius),
            ("integral_window", m.integral_window),
        ] {
            pos(&format!("mission.{name}"), v)?;
        }
        if !(m.attach_threshold > 0.0 && m.attach_threshold < 1.0) {
            return Err(Error::config("mission.attach_threshold", "must lie in (0, 1)"));
        }
        unit("mission.adhesion_success_probability", m.adhesion_success_probability)?;
        if m.max_attempts == 0 {
            return Err(Error::config("mission.max_attempts", "must be at least 1"));
        }
        if m.pre_blind_height <= d.min_visible_height {
            return Err(Error::config(
                "mission.pre_blind_height",
                "must be above detection.min_visible_height",
            ));
        }
        for (i, v) in m.geofence.min.iter().enumerate() {
            if *v >= m.geofence.max[i] {
                return Err(Error::config(
                    format!("mission.geofence.min[{i}]"),
                    "must be below max",
                ));
            }
        }
        for (phase, g) in [
            ("takeoff", &m.gains.takeoff),
            ("search", &m.gains.search),
            ("land", &m.gains.land),
            ("return", &m.gains.return_),
        ] {
            if !g.is_valid() {
                return Err(Error::config(
                    format!("mission.gains.{phase}"),
                    "gains must be finite and non-negative",
                ));
            }
        }
        pos("mission.limits.horizontal", m.limits.horizontal)?;
        pos("mission.limits.vertical", m.limits.vertical)?;
        pos("mission.limits.yaw_rate", m.limits.yaw_rate)?;
        Ok(())
    }
}
