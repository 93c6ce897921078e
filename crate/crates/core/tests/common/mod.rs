#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seahaul::control::VelocityCommand;
use seahaul::frames::{wrap_angle, EulerAngles};
use seahaul::qr::{estimate_pose, MarkerTable, QrMarker, QrObservation};
use seahaul::sim::World;
use seahaul::uwb::{AnchorSet, EkfParams, UwbLocalizer, UwbSettings};
use seahaul::{ScenarioConfig, Vec3};

/// Forward camera model written out independently of the library.
pub fn observe(m: &QrMarker, platform: &EulerAngles, p: &Vec3, att: &EulerAngles, f: f64) -> (QrObservation, Vec3) {
    let world = platform.rotation().apply(&Vec3::new(m.x, m.y, 0.0));
    let c = att.rotation().matrix().transpose() * (world - p);
    let k = f / (-c.z - f);
    let yaw = wrap_angle(platform.yaw - att.yaw - std::f64::consts::PI).unwrap();
    (
        QrObservation {
            label: m.label,
            diagonal: m.diagonal * k,
            center: [c.x * k, c.y * k],
            yaw,
            focal_length: f,
        },
        c,
    )
}

/// Plain Gauss-Newton least squares on ranges, written independently of the
/// library solver. Stops on a tiny step.
pub fn gauss_newton(anchors: &[Vector3<f64>], ranges: &[f64], init: Vector3<f64>) -> Vector3<f64> {
    let mut x = init;
    for _ in 0..200 {
        let mut a = Matrix3::<f64>::zeros();
        let mut b = Vector3::<f64>::zeros();
        for (p, r) in anchors.iter().zip(ranges) {
            let d = x - p;
            let n = d.norm();
            let j = d / n;
            a += j * j.transpose();
            b += j * (r - n);
        }
        let step = a.lu().solve(&b).expect("well-posed geometry");
        x += step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    x
}

pub fn anchors(cfg: &ScenarioConfig) -> Vec<Vec3> {
    cfg.uwb.anchors.iter().map(|a| Vec3::from(*a)).collect()
}

pub fn localizer(cfg: &ScenarioConfig) -> UwbLocalizer {
    let settings = UwbSettings {
        baseline: cfg.uwb.label_baseline,
        params: EkfParams {
            jerk_noise: cfg.uwb.ekf.jerk_noise,
            range_noise: cfg.uwb.ekf.range_noise,
            period: cfg.dt,
        },
        init_position_std: cfg.uwb.ekf.init_position_std,
        init_velocity_std: cfg.uwb.ekf.init_velocity_std,
        compensate_platform_motion: cfg.uwb.compensate_platform_motion,
        initial_yaw: cfg.platform.initial_yaw + cfg.uav.initial_yaw,
    };
    UwbLocalizer::new(AnchorSet::new(anchors(cfg)).unwrap(), settings).unwrap()
}

pub struct HoverStats {
    pub ekf: [f64; 3],
    pub raw: [f64; 3],
}

/// Holds the UAV at `position` with zero commands and compares the EKF and
/// per-epoch multilateration against the truth over the last `scored` ticks.
pub fn hover_uwb(cfg: &ScenarioConfig, seed: u64, position: Vec3, ticks: usize, scored: usize) -> HoverStats {
    let mut world = World::new(cfg.clone(), seed).unwrap();
    world.teleport(position, cfg.platform.initial_yaw + cfg.uav.initial_yaw);
    let mut uwb = localizer(cfg);
    let anchors = anchors(cfg);
    let mut ekf = [0.0; 3];
    let mut raw = [0.0; 3];
    let mut n = 0usize;
    for k in 0..ticks {
        let t = world.time();
        let platform = world.platform_attitude();
        let imu = world.sense_imu();
        let ranges = world.sense_uwb();
        let fix = uwb
            .step(&ranges, &imu.accel_body, imu.roll, imu.pitch, &platform, t)
            .unwrap();
        let truth = world.state().position;
        if k + scored >= ticks {
            let fix = fix.expect("filter initialised");
            let mut labels = Vector3::zeros();
            for l in 0..2 {
                let r: Vec<f64> = ranges.iter().filter(|m| m.label == l).map(|m| m.range).collect();
                labels += gauss_newton(&anchors, &r, Vector3::new(0.0, 0.0, 1.0));
            }
            let direct = platform.rotation().apply(&(labels / 2.0));
            for i in 0..3 {
                ekf[i] += (fix.position[i] - truth[i]).powi(2);
                raw[i] += (direct[i] - truth[i]).powi(2);
            }
            n += 1;
        }
        world.step(&VelocityCommand::default(), cfg.dt).unwrap();
    }
    let f = |a: [f64; 3]| a.map(|s| (s / n as f64).sqrt());
    HoverStats { ekf: f(ekf), raw: f(raw) }
}

/// Median QR position error per 1 m height bucket, heights 0.3 to 5 m over
/// the landing pad. Fixed protocol: world seed 3, sampler seed 5, 6000
/// samples, platform advanced a random 1 to 19 ticks between samples.
pub fn qr_error_by_height(pixel_noise: f64) -> Vec<(usize, f64)> {
    let mut cfg = ScenarioConfig::default();
    cfg.qr.pixel_noise = pixel_noise;
    cfg.qr.dropout = 0.0;
    cfg.uav.attitude_noise = 0.0;
    let markers = MarkerTable::new(&cfg.qr.markers);
    let mut world = World::new(cfg.clone(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); 5];
    for _ in 0..6000 {
        for _ in 0..rng.random_range(1..20) {
            world.step(&VelocityCommand::default(), cfg.dt).unwrap();
        }
        let h: f64 = rng.random_range(0.3..5.0);
        let pad = world.home_pad_world();
        let p = Vec3::new(
            pad.x + rng.random_range(-0.3..0.3),
            pad.y + rng.random_range(-0.3..0.3),
            pad.z + h,
        );
        world.teleport(p, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let obs = world.sense_qr();
        let s = world.state();
        let platform = world.platform_attitude();
        let Ok(Some(est)) = estimate_pose(&obs, &markers, &platform, s.attitude.roll, s.attitude.pitch, s.t) else {
            continue;
        };
        let b = (h.floor() as usize).min(4);
        buckets[b].push((est.position - s.position).norm());
    }
    buckets
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            let median = if v.is_empty() { f64::NAN } else { v[v.len() / 2] };
            (v.len(), median)
        })
        .collect()
}
