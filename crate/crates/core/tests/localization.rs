mod common;

use std::f64::consts::PI;

use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seahaul::control::VelocityCommand;
use seahaul::frames::{wrap_angle, EulerAngles};
use seahaul::qr::{estimate_pose, marker_camera_coords, project_marker, MarkerTable, QrMarker, QrObservation};
use seahaul::sim::World;
use seahaul::uwb::{
    ekf_predict_platform, ekf_update, multilaterate, yaw_from_labels, AnchorSet, EkfParams, EkfState,
};
use seahaul::{ScenarioConfig, Vec3};

fn random_platform(rng: &mut ChaCha8Rng) -> EulerAngles {
    EulerAngles::new(
        rng.random_range(-8f64..8.0).to_radians(),
        rng.random_range(-10f64..10.0).to_radians(),
        rng.random_range(-PI..PI),
    )
}

#[test]
fn qr_roundtrip_over_random_poses() {
    let cfg = ScenarioConfig::default();
    let markers = MarkerTable::new(&cfg.qr.markers);
    let f = cfg.qr.focal_length;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut worst_p, mut worst_yaw) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let platform = random_platform(&mut rng);
        let att = EulerAngles::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(-PI..PI),
        );
        let local = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(0.3..5.0));
        let p = platform.rotation().apply(&local);
        let n = rng.random_range(1..=4);
        let obs: Vec<QrObservation> = cfg
            .qr
            .markers
            .iter()
            .filter(|m| project_marker(m, &platform, &p, &att, f).is_some())
            .take(n)
            .map(|m| {
                let (o, c) = common::observe(m, &platform, &p, &att, f);
                let lib = project_marker(m, &platform, &p, &att, f).unwrap();
                assert!((lib.1 - c).norm() < 1e-12);
                let back = marker_camera_coords(&o, m).unwrap();
                assert!((back - c).norm() < 1e-9);
                o
            })
            .collect();
        let est = estimate_pose(&obs, &markers, &platform, att.roll, att.pitch, 0.0).unwrap().unwrap();
        worst_p = worst_p.max((est.position - p).norm());
        worst_yaw = worst_yaw.max(wrap_angle(est.yaw - att.yaw).unwrap().abs());
    }
    assert!(worst_p <= 1e-6, "position error {worst_p}");
    assert!(worst_yaw <= 1e-8, "yaw error {worst_yaw}");
}

#[test]
fn simulated_codes_recover_the_true_pose() {
    let mut cfg = ScenarioConfig::default();
    cfg.qr.pixel_noise = 0.0;
    cfg.qr.dropout = 0.0;
    let markers = MarkerTable::new(&cfg.qr.markers);
    let mut world = World::new(cfg.clone(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seen = 0;
    for _ in 0..500 {
        for _ in 0..rng.random_range(1..10) {
            world.step(&VelocityCommand::default(), cfg.dt).unwrap();
        }
        let h = rng.random_range(0.5..4.5);
        let pad = world.home_pad_world();
        world.teleport(pad + Vec3::new(0.1, -0.1, h), rng.random_range(-PI..PI));
        let s = world.state();
        let obs = world.sense_qr();
        assert!(!obs.is_empty(), "no code in view at {h} m");
        let est = estimate_pose(&obs, &markers, &world.platform_attitude(), s.attitude.roll, s.attitude.pitch, s.t)
            .unwrap()
            .unwrap();
        assert!((est.position - s.position).norm() < 1e-6);
        assert!(wrap_angle(est.yaw - s.attitude.yaw).unwrap().abs() < 1e-8);
        seen += 1;
    }
    assert_eq!(seen, 500);
}

#[test]
fn averaging_codes_shrinks_the_spread() {
    let f = 0.004;
    let pitch = 3e-6;
    let sigma = 5.0 * pitch;
    let ms: Vec<QrMarker> = [(0.1, 0.1), (-0.1, -0.1), (0.1, -0.1), (-0.1, 0.1)]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| QrMarker { label: i as u32, diagonal: 0.1, x, y })
        .collect();
    let table = MarkerTable::new(&ms);
    let level = EulerAngles::new(0.0, 0.0, 0.0);
    let p = Vec3::new(0.0, 0.0, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut spread = |k: usize| {
        let trials = 4000;
        let mut sq = 0.0;
        for _ in 0..trials {
            let obs: Vec<QrObservation> = ms[..k]
                .iter()
                .map(|m| {
                    let (mut o, _) = common::observe(m, &level, &p, &level, f);
                    o.center[0] += sigma * rng.sample::<f64, _>(StandardNormal);
                    o.center[1] += sigma * rng.sample::<f64, _>(StandardNormal);
                    o.diagonal += sigma * rng.sample::<f64, _>(StandardNormal);
                    o
                })
                .collect();
            let e = estimate_pose(&obs, &table, &level, 0.0, 0.0, 0.0).unwrap().unwrap();
            sq += (e.position - p).norm_squared();
        }
        (sq / trials as f64).sqrt()
    };
    let one = spread(1);
    for k in [2usize, 4] {
        let s = spread(k);
        assert!(s <= 1.2 * one / (k as f64).sqrt(), "k={k}: {s} vs single {one}");
    }
}

fn default_anchors() -> (AnchorSet, Vec<Vector3<f64>>) {
    let a = common::anchors(&ScenarioConfig::default());
    (AnchorSet::new(a.clone()).unwrap(), a)
}

#[test]
fn noiseless_ekf_converges_to_least_squares() {
    let (set, raw) = default_anchors();
    let truth = Vec3::new(0.4, -0.3, 1.2);
    let ranges: Vec<(usize, f64)> = raw.iter().enumerate().map(|(j, a)| (j, (truth - a).norm())).collect();
    let d: Vec<f64> = ranges.iter().map(|r| r.1).collect();
    let oracle = common::gauss_newton(&raw, &d, Vector3::new(0.0, 0.0, 1.0));
    let params = EkfParams {
        jerk_noise: 1.0,
        range_noise: 1e-6,
        period: 0.02,
    };
    let mut s = EkfState::new(truth + Vec3::new(1.0, 0.0, 0.0), Vec3::zeros(), 1.0, 0.5, 0.0);
    let mut converged = None;
    for k in 1..=50 {
        s = ekf_predict_platform(&s, &Vec3::zeros(), &params).unwrap();
        s = ekf_update(&s, &ranges, &set, &params).unwrap().state;
        if converged.is_none() && (s.position() - oracle).norm() < 1e-6 {
            converged = Some(k);
        }
    }
    assert!(converged.is_some(), "gap {}", (s.position() - oracle).norm());
    assert!((s.position() - oracle).norm() < 1e-6);
}

#[test]
fn library_multilateration_matches_oracle() {
    let (set, raw) = default_anchors();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let truth = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.5..8.0));
        let d: Vec<f64> = raw
            .iter()
            .map(|a| (truth - a).norm() + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ranges: Vec<(usize, f64)> = d.iter().copied().enumerate().collect();
        let lib = multilaterate(&set, &ranges, Some(Vec3::new(0.0, 0.0, 1.0))).unwrap();
        let oracle = common::gauss_newton(&raw, &d, Vector3::new(0.0, 0.0, 1.0));
        assert!((lib - oracle).norm() < 1e-8);
    }
}

#[test]
fn collinear_anchors_are_rejected() {
    let line: Vec<Vec3> = (0..4).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
    assert!(AnchorSet::new(line.clone()).is_err());
    let mut normal = nalgebra::Matrix3::<f64>::zeros();
    let x = Vec3::new(0.3, 0.1, 1.0);
    for a in &line {
        let g = (x - a).normalize();
        normal += g * g.transpose();
    }
    assert!(normal.symmetric_eigenvalues().min() < 1e-9 * normal.norm());
}

proptest! {
    #[test]
    fn covariance_stays_symmetric_psd(
        steps in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, 0.0..6.0f64, 0usize..6), 1..80),
        q in 0.1..5.0f64,
        r in 0.01..0.5f64,
    ) {
        let (set, raw) = default_anchors();
        let params = EkfParams { jerk_noise: q, range_noise: r, period: 0.02 };
        let mut s = EkfState::new(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros(), 0.5, 0.5, 0.0);
        for (x, y, z, drop) in steps {
            s = ekf_predict_platform(&s, &Vec3::new(x, y, 0.0), &params).unwrap();
            let target = Vec3::new(x, y, z + 0.3);
            let ranges: Vec<(usize, f64)> = raw
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != drop)
                .map(|(j, a)| (j, (target - a).norm()))
                .collect();
            s = ekf_update(&s, &ranges, &set, &params).unwrap().state;
            let (min_eig, asym) = s.covariance_health();
            prop_assert!(min_eig >= -1e-9);
            prop_assert!(asym <= 1e-12 * s.p.abs().max().max(1.0));
        }
    }
}

#[test]
fn hover_rmse_within_three_times_reference() {
    let cfg = ScenarioConfig::default();
    let stats = common::hover_uwb(&cfg, 1, Vec3::new(0.0, 0.0, 1.0), 3500, 3000);
    let bound = [0.034, 0.042, 0.064];
    for i in 0..3 {
        assert!(stats.ekf[i] <= bound[i], "axis {i}: {:?}", stats.ekf);
    }
}

#[test]
fn filter_beats_raw_multilateration() {
    let cfg = ScenarioConfig::default();
    let stats = common::hover_uwb(&cfg, 2, Vec3::new(0.5, -0.5, 2.0), 1500, 1000);
    let e: f64 = stats.ekf.iter().map(|v| v * v).sum();
    let r: f64 = stats.raw.iter().map(|v| v * v).sum();
    assert!(e < r, "ekf {:?} raw {:?}", stats.ekf, stats.raw);
}

#[test]
fn dual_label_yaw_roundtrip_and_continuity() {
    let d = 0.8;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let e = EulerAngles::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(-PI..PI));
        let delta = e.rotation().apply(&Vec3::new(0.0, d, 0.0));
        let psi = yaw_from_labels(&delta, &Vec3::zeros(), e.roll, e.pitch, d).unwrap();
        worst = worst.max(wrap_angle(psi - e.yaw).unwrap().abs());
    }
    assert!(worst <= 1e-9, "roundtrip {worst}");

    let mut gap: f64 = 0.0;
    for _ in 0..10_000 {
        let roll = rng.random_range(-1.0..1.0);
        let pitch = rng.random_range(-1e-8..1e-8) * if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let yaw = rng.random_range(-PI..PI);
        let (roll, pitch) = if rng.random_bool(0.5) { (roll, pitch) } else { (pitch, roll) };
        let delta = EulerAngles::new(roll, pitch, yaw).rotation().apply(&Vec3::new(0.0, d, 0.0));
        let general = yaw_from_labels(&delta, &Vec3::zeros(), roll, pitch, d).unwrap();
        let special = (-delta.x).atan2(delta.y);
        gap = gap.max(wrap_angle(general - special).unwrap().abs());
    }
    assert!(gap < 1e-6, "branch gap {gap}");
}

#[test]
fn simulated_ranges_three_four_five() {
    let mut cfg = ScenarioConfig::default();
    cfg.platform.roll_amplitude = 0.0;
    cfg.platform.pitch_amplitude = 0.0;
    cfg.platform.yaw_walk_rate = 0.0;
    cfg.platform.initial_yaw = 0.0;
    cfg.uav.initial_yaw = 0.0;
    cfg.uwb.range_noise = 0.0;
    cfg.uwb.anchors[0] = [0.0, 0.0, 0.0];
    let half = cfg.uwb.label_baseline / 2.0;
    let mut world = World::new(cfg, 1).unwrap();
    world.teleport(Vec3::new(3.0, 4.0 - half, 0.0), 0.0);
    let r = world.sense_uwb().into_iter().find(|r| r.label == 0 && r.anchor == 0).unwrap();
    assert!((r.range - 5.0).abs() < 1e-12);
}

#[test]
fn simulated_range_noise_has_configured_spread() {
    let mut cfg = ScenarioConfig::default();
    cfg.uwb.range_noise = 0.10;
    cfg.uwb.occlusion = None;
    let mut noisy = World::new(cfg.clone(), 6).unwrap();
    let mut clean_cfg = cfg.clone();
    clean_cfg.uwb.range_noise = 0.0;
    let mut clean = World::new(clean_cfg, 6).unwrap();
    let mut residuals = Vec::with_capacity(100_008);
    while residuals.len() < 100_000 {
        let a = noisy.sense_uwb();
        let b = clean.sense_uwb();
        residuals.extend(a.iter().zip(&b).map(|(x, y)| x.range - y.range));
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let std = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((0.098..=0.102).contains(&std), "std {std}");
}
