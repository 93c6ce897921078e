//! Closed-loop mission runs, trajectory logs, Monte Carlo batches and log
//! metrics.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::control::VelocityCommand;
use crate::error::{Error, Result};
use crate::frames::{EulerAngles, Vec3};
use crate::hybrid::HybridLocalizer;
use crate::mission::{
    Action, CargoView, MissionEvent, MissionExecutive, MissionInputs, MissionPhase, PhaseDurations, Stage,
    TelemetryWindow,
};
use crate::perception::{cargo_position_from_detection, wavegate_select, CargoTrack, TrackSmoother};
use crate::qr::{estimate_pose, MarkerTable, PoseEstimate, PoseSource};
use crate::sim::{Contact, World};
use crate::uwb::{AnchorSet, EkfParams, UwbFix, UwbLocalizer, UwbSettings};

pub const LOG_VERSION: &str = "# seahaul-log v1";

pub const LOG_COLUMNS: [&str; 37] = [
    "t",
    "phase",
    "stage",
    "true_x",
    "true_y",
    "true_z",
    "true_yaw",
    "est_x",
    "est_y",
    "est_z",
    "est_yaw",
    "source",
    "uwb_x",
    "uwb_y",
    "uwb_z",
    "uwb_yaw",
    "qr_x",
    "qr_y",
    "qr_z",
    "qr_yaw",
    "qr_codes",
    "track_locked",
    "cargo_x",
    "cargo_y",
    "cargo_z",
    "cmd_vx",
    "cmd_vy",
    "cmd_vz",
    "cmd_yaw_rate",
    "rotor_sumsq",
    "platform_roll",
    "platform_pitch",
    "platform_yaw",
    "contact",
    "attached_mass",
    "height",
    "events",
];

/// Everything recorded about one control tick.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub t: f64,
    pub phase: MissionPhase,
    pub stage: Stage,
    pub truth: Vec3,
    pub true_yaw: f64,
    pub estimate: Option<PoseEstimate>,
    pub uwb: Option<UwbFix>,
    pub qr: Option<PoseEstimate>,
    pub qr_codes: usize,
    pub track_locked: bool,
    pub cargo: Option<Vec3>,
    pub command: VelocityCommand,
    pub rotor_sum_of_squares: f64,
    pub platform: EulerAngles,
    pub contact: Contact,
    pub attached_mass: f64,
    /// True height above the home pad.
    pub height: f64,
    pub events: Vec<MissionEvent>,
}

pub fn contact_label(c: &Contact) -> &'static str {
    match c {
        Contact::Airborne => "air",
        Contact::Platform(_) => "platform",
        Contact::Deck(_) => "deck",
        Contact::Cargo(..) => "cargo",
        Contact::Sea => "sea",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl TickRecord {
    fn fields(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:.6}");
        let e = self.estimate;
        let u = self.uwb;
        let q = self.qr;
        let c = self.cargo;
        let mut out = vec![
            format!("{:.2}", self.t),
            self.phase.as_str().to_string(),
            self.stage.as_str().to_string(),
            f(self.truth.x),
            f(self.truth.y),
            f(self.truth.z),
            f(self.true_yaw),
            opt(e.map(|e| e.position.x)),
            opt(e.map(|e| e.position.y)),
            opt(e.map(|e| e.position.z)),
            opt(e.map(|e| e.yaw)),
            e.map(|e| e.source.as_str()).unwrap_or("").to_string(),
            opt(u.map(|u| u.position.x)),
            opt(u.map(|u| u.position.y)),
            opt(u.map(|u| u.position.z)),
            opt(u.map(|u| u.yaw)),
            opt(q.map(|q| q.position.x)),
            opt(q.map(|q| q.position.y)),
            opt(q.map(|q| q.position.z)),
            opt(q.map(|q| q.yaw)),
            self.qr_codes.to_string(),
            u8::from(self.track_locked).to_string(),
            opt(c.map(|c| c.x)),
            opt(c.map(|c| c.y)),
            opt(c.map(|c| c.z)),
        ];
        out.extend(self.command.velocity.iter().map(|v| f(*v)));
        out.push(f(self.command.yaw_rate));
        out.push(f(self.rotor_sum_of_squares));
        out.push(f(self.platform.roll));
        out.push(f(self.platform.pitch));
        out.push(f(self.platform.yaw));
        out.push(contact_label(&self.contact).to_string());
        out.push(f(self.attached_mass));
        out.push(f(self.height));
        out.push(self.events.iter().map(|e| e.as_str()).collect::<Vec<_>>().join(";"));
        out
    }
}

/// Streams tick records as a versioned CSV.
pub struct LogWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut w: W) -> Result<Self> {
        writeln!(w, "{LOG_VERSION}")?;
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(LOG_COLUMNS).map_err(|e| Error::Log(e.to_string()))?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, rec: &TickRecord) -> Result<()> {
        self.inner.write_record(rec.fields()).map_err(|e| Error::Log(e.to_string()))
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Log(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisRmse {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub samples: usize,
}

impl AxisRmse {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RmseAcc {
    sq: [f64; 3],
    n: usize,
}

impl RmseAcc {
    fn push(&mut self, est: &Vec3, truth: &Vec3) {
        for k in 0..3 {
            self.sq[k] += (est[k] - truth[k]).powi(2);
        }
        self.n += 1;
    }

    fn finish(&self) -> Option<AxisRmse> {
        (self.n > 0).then(|| {
            let n = self.n as f64;
            AxisRmse {
                x: (self.sq[0] / n).sqrt(),
                y: (self.sq[1] / n).sqrt(),
                z: (self.sq[2] / n).sqrt(),
                samples: self.n,
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceRmse {
    pub qr: Option<AxisRmse>,
    pub uwb: Option<AxisRmse>,
    pub fused: Option<AxisRmse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub outcome: MissionPhase,
    pub abort_reason: Option<String>,
    pub mission_time: f64,
    pub durations: PhaseDurations,
    /// Horizontal distance from the cargo centre at the last touchdown on
    /// the deck.
    pub landing_error: Option<f64>,
    pub landing_errors: Vec<f64>,
    pub attach_success: bool,
    pub attempts: u32,
    pub pre_window: Option<TelemetryWindow>,
    pub post_window: Option<TelemetryWindow>,
    pub adsorb_window: Option<(f64, f64)>,
    pub rmse: SourceRmse,
    pub source_switches: usize,
}

/// The full onboard stack wired to a simulated world.
pub struct MissionRun {
    cfg: ScenarioConfig,
    seed: u64,
    world: World,
    uwb: UwbLocalizer,
    hybrid: HybridLocalizer,
    markers: MarkerTable,
    track: CargoTrack,
    smoother: TrackSmoother,
    exec: MissionExecutive,
    focal_px: f64,
    cargo_diagonal: f64,
    last_estimate: Option<PoseEstimate>,
    last_frame_attitude: Option<EulerAngles>,
    landing_errors: Vec<f64>,
    abort_reason: Option<String>,
    rmse: [RmseAcc; 3],
}

impl MissionRun {
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        let world = World::new(cfg.clone(), seed)?;
        let anchors = AnchorSet::new(cfg.uwb.anchors.iter().map(|a| Vec3::from(*a)).collect())?;
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
            initial_yaw: crate::frames::wrap(cfg.platform.initial_yaw + cfg.uav.initial_yaw),
        };
        let uwb = UwbLocalizer::new(anchors, settings)?;
        let cargo_diagonal = cfg
            .cargoes
            .first()
            .map(|c| c.top_diagonal())
            .ok_or_else(|| Error::config("cargoes", "at least one cargo is required"))?;
        Ok(Self {
            uwb,
            hybrid: HybridLocalizer::new(cfg.hybrid.window, cfg.hybrid.qr_debounce),
            markers: MarkerTable::new(&cfg.qr.markers),
            track: CargoTrack::new(),
            smoother: TrackSmoother::new(&cfg.perception),
            exec: MissionExecutive::new(
                &cfg.mission,
                cfg.dt,
                cfg.uav.velocity_time_constant,
                (cfg.detection.h_fov, cfg.detection.v_fov),
            ),
            focal_px: cfg.detection.focal_px(),
            cargo_diagonal,
            last_estimate: None,
            last_frame_attitude: None,
            landing_errors: Vec::new(),
            abort_reason: None,
            rmse: [RmseAcc::default(); 3],
            cfg: cfg.clone(),
            seed,
            world,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn executive(&self) -> &MissionExecutive {
        &self.exec
    }

    pub fn phase(&self) -> MissionPhase {
        self.exec.phase()
    }

    pub fn is_finished(&self) -> bool {
        self.exec.phase().is_terminal()
    }

    fn perceive(&mut self, roll: f64, pitch: f64, yaw: f64) -> Result<()> {
        let Some(candidates) = self.world.sense_cargo(self.cfg.dt) else {
            return Ok(());
        };
        let t = self.world.time();
        let attitude = EulerAngles::new(roll, pitch, yaw);
        if let Some(prev) = self.last_frame_attitude.replace(attitude) {
            let delta = attitude.rotation().inverse() * prev.rotation();
            self.track.compensate_rotation(&delta, self.focal_px);
        }
        let (mut next, chosen) = wavegate_select(&candidates, &self.track, &self.cfg.perception);
        if !next.locked {
            self.smoother.reset();
            next.position = None;
            next.velocity = Vec3::zeros();
            next.yaw = None;
        } else if let Some(obs) = chosen {
            let raw = cargo_position_from_detection(&obs, self.focal_px, self.cargo_diagonal)?;
            let level = EulerAngles::new(roll, pitch, 0.0).rotation().apply(&raw);
            let s = self.smoother.update(level, t);
            next.position = Some(s.position);
            next.velocity = s.velocity;
            next.yaw = Some(obs.angle);
        }
        self.track = next;
        Ok(())
    }

    fn landing_error(&self) -> Option<f64> {
        let s = self.world.state();
        let n = self.cfg.cargoes.len();
        let idx = match s.contact {
            Contact::Cargo(i, _) => Some(i),
            _ => (0..n).min_by(|&a, &b| {
                let da = (self.world.cargo_top(a) - s.position).xy().norm();
                let db = (self.world.cargo_top(b) - s.position).xy().norm();
                da.total_cmp(&db)
            }),
        }?;
        Some((self.world.cargo_top(idx) - s.position).xy().norm())
    }

    /// Sense, estimate, decide and advance the world by one tick.
    pub fn step(&mut self) -> Result<TickRecord> {
        let dt = self.cfg.dt;
        let t = self.world.time();
        let platform = self.world.platform_attitude();
        let imu = self.world.sense_imu();
        let ranges = self.world.sense_uwb();
        let qr_obs = self.world.sense_qr();

        let uwb = self
            .uwb
            .step(&ranges, &imu.accel_body, imu.roll, imu.pitch, &platform, t)?;
        let qr = estimate_pose(&qr_obs, &self.markers, &platform, imu.roll, imu.pitch, t)
            .ok()
            .flatten();
        let estimate = match uwb {
            Some(fix) => Some(self.hybrid.arbitrate(
                qr,
                PoseEstimate {
                    position: fix.position,
                    yaw: fix.yaw,
                    source: PoseSource::Uwb,
                    t,
                },
            )),
            None => qr.or(self.last_estimate),
        };
        self.last_estimate = estimate;
        let yaw = estimate.map(|e| e.yaw).unwrap_or(0.0);
        self.perceive(imu.roll, imu.pitch, yaw)?;

        let state = self.world.state();
        let airborne = !state.contact.is_grounded();
        if airborne {
            if let Some(q) = qr {
                self.rmse[0].push(&q.position, &state.position);
            }
            if let Some(u) = uwb {
                self.rmse[1].push(&u.position, &state.position);
            }
            if let Some(e) = estimate {
                self.rmse[2].push(&e.position, &state.position);
            }
        }

        let rotor_sum: f64 = state.rotors.iter().map(|w| w * w).sum();
        let mut events = Vec::new();
        if !self.is_finished() {
            if matches!(state.contact, Contact::Sea) {
                self.abort_reason = Some("fell into the sea".into());
                events.push(self.exec.notify(MissionEvent::GeofenceBreach, t));
            } else if t >= self.cfg.max_mission_time {
                self.abort_reason = Some("mission time exceeded".into());
                events.push(self.exec.notify(MissionEvent::Timeout, t));
            }
        }

        let cargo = match (self.track.locked, self.track.position, self.track.yaw) {
            (true, Some(position), Some(yaw)) => Some(CargoView {
                position,
                velocity: self.track.velocity,
                yaw,
            }),
            _ => None,
        };
        let (action, phase, stage) = match estimate {
            Some(est) => {
                let inputs = MissionInputs {
                    t,
                    estimate: est,
                    cargo_locked: self.track.locked,
                    cargo,
                    grounded: state.contact.is_grounded(),
                    on_platform: matches!(state.contact, Contact::Platform(_)),
                    rotor_sum_of_squares: rotor_sum,
                    platform,
                    deck: self.world.deck_pose(),
                };
                let out = self.exec.tick(&inputs, &Vec3::from(self.cfg.platform.home_pad));
                events.extend(out.events);
                (out.action, out.phase, out.stage)
            }
            None => (
                Action::Fly(VelocityCommand {
                    t,
                    ..Default::default()
                }),
                self.exec.phase(),
                self.exec.stage(),
            ),
        };
        if events.contains(&MissionEvent::Landed) {
            if let Some(err) = self.landing_error() {
                self.landing_errors.push(err);
            }
        }
        if events.contains(&MissionEvent::GeofenceBreach) && self.abort_reason.is_none() {
            self.abort_reason = Some("geofence breach".into());
        }
        if events.contains(&MissionEvent::AttemptsExhausted) {
            self.abort_reason = Some("attachment attempts exhausted".into());
        }
        if let Action::Adsorb(_) = action {
            self.world.adsorb(self.cfg.mission.adhesion_success_probability);
        }

        let record = TickRecord {
            t,
            phase,
            stage,
            truth: state.position,
            true_yaw: state.attitude.yaw,
            estimate,
            uwb,
            qr,
            qr_codes: qr_obs.len(),
            track_locked: self.track.locked,
            cargo: cargo.map(|c| c.position),
            command: *action.command(),
            rotor_sum_of_squares: rotor_sum,
            platform,
            contact: state.contact,
            attached_mass: state.attached_mass,
            height: state.position.z - self.world.home_pad_world().z,
            events,
        };
        self.world.step(action.command(), dt)?;
        Ok(record)
    }

    pub fn summary(&self) -> RunSummary {
        let phase = self.exec.phase();
        RunSummary {
            scenario: self.cfg.name.clone(),
            seed: self.seed,
            outcome: phase,
            abort_reason: if phase == MissionPhase::Aborted {
                self.abort_reason.clone().or(Some("aborted".into()))
            } else {
                None
            },
            mission_time: self.world.time(),
            durations: *self.exec.durations(),
            landing_error: self.landing_errors.last().copied(),
            landing_errors: self.landing_errors.clone(),
            attach_success: self.world.state().carried.is_some() && self.exec.attach_ok() == Some(true),
            attempts: self.exec.attempts(),
            pre_window: self.exec.pre_window().copied(),
            post_window: self.exec.post_window().copied(),
            adsorb_window: self.exec.adsorb_window(),
            rmse: SourceRmse {
                qr: self.rmse[0].finish(),
                uwb: self.rmse[1].finish(),
                fused: self.rmse[2].finish(),
            },
            source_switches: self.hybrid.switches().len(),
        }
    }
}

/// Runs a scenario to completion, optionally streaming the trajectory log.
pub fn run_scenario<W: Write>(cfg: &ScenarioConfig, seed: u64, log: Option<W>) -> Result<RunSummary> {
    let mut run = MissionRun::new(cfg, seed)?;
    let mut writer = log.map(LogWriter::new).transpose()?;
    loop {
        let rec = run.step()?;
        if let Some(w) = writer.as_mut() {
            w.write(&rec)?;
        }
        if run.is_finished() {
            break;
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(run.summary())
}

/// Convenience for callers that do not want a log.
pub fn run_quiet(cfg: &ScenarioConfig, seed: u64) -> Result<RunSummary> {
    run_scenario::<std::io::Sink>(cfg, seed, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub seed_base: u64,
    pub threshold: f64,
    pub done: usize,
    /// Fraction of runs that finished and landed within `threshold`.
    pub success_rate: f64,
    pub landing_error: Option<Quantiles>,
    pub mean_durations: PhaseDurations,
    pub summaries: Vec<RunSummary>,
}

/// `runs` independent missions with seeds `seed_base + i`.
pub fn monte_carlo(cfg: &ScenarioConfig, runs: usize, seed_base: u64, threshold: f64) -> Result<MonteCarloReport> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    let summaries = (0..runs as u64)
        .into_par_iter()
        .map(|i| run_quiet(cfg, seed_base.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(summaries, seed_base, threshold))
}

pub fn aggregate(summaries: Vec<RunSummary>, seed_base: u64, threshold: f64) -> MonteCarloReport {
    let runs = summaries.len();
    let done: Vec<&RunSummary> = summaries.iter().filter(|s| s.outcome == MissionPhase::Done).collect();
    let ok = done
        .iter()
        .filter(|s| s.landing_error.is_some_and(|e| e <= threshold))
        .count();
    let mut errs: Vec<f64> = summaries.iter().filter_map(|s| s.landing_error).collect();
    errs.sort_by(f64::total_cmp);
    let landing_error = (!errs.is_empty()).then(|| Quantiles {
        p50: quantile(&errs, 0.5),
        p90: quantile(&errs, 0.9),
        p95: quantile(&errs, 0.95),
        max: *errs.last().expect("non-empty"),
    });
    let mut mean = PhaseDurations::default();
    if !done.is_empty() {
        let n = done.len() as f64;
        for s in &done {
            mean.takeoff += s.durations.takeoff / n;
            mean.search += s.durations.search / n;
            mean.land += s.durations.land / n;
            mean.adsorb += s.durations.adsorb / n;
            mean.return_ += s.durations.return_ / n;
        }
    }
    MonteCarloReport {
        runs,
        seed_base,
        threshold,
        done: done.len(),
        success_rate: ok as f64 / runs.max(1) as f64,
        landing_error,
        mean_durations: mean,
        summaries,
    }
}

/// RMSE and error tables recomputed from a trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMetrics {
    pub rows: usize,
    pub duration: f64,
    pub rmse: SourceRmse,
    /// QR position error (norm) per 1 m height bucket: bucket lower edge,
    /// sample count, median, max.
    pub qr_by_height: Vec<HeightBucket>,
    pub phase_durations: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightBucket {
    pub lower: f64,
    pub samples: usize,
    pub median: f64,
    pub max: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Errors of QR estimates grouped by 1 m of height: `(height, error)` pairs.
pub fn bucket_by_height(samples: &[(f64, f64)]) -> Vec<HeightBucket> {
    let mut map: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for &(h, e) in samples {
        if h.is_finite() && e.is_finite() && h >= 0.0 {
            map.entry(h.floor() as i64).or_default().push(e);
        }
    }
    map.into_iter()
        .map(|(k, mut v)| HeightBucket {
            lower: k as f64,
            samples: v.len(),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            median: median(&mut v),
        })
        .collect()
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Log(format!("missing column {name}")))
}

fn parse_f(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<Option<f64>> {
    let s = rec.get(idx).unwrap_or("");
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Log(format!("line {line}: bad number {s:?}")))
}

fn parse_vec(rec: &csv::StringRecord, idx: [usize; 3], line: u64) -> Result<Option<Vec3>> {
    let x = parse_f(rec, idx[0], line)?;
    let y = parse_f(rec, idx[1], line)?;
    let z = parse_f(rec, idx[2], line)?;
    Ok(match (x, y, z) {
        (Some(x), Some(y), Some(z)) => Some(Vec3::new(x, y, z)),
        _ => None,
    })
}

/// Reads a trajectory log and recomputes the per-source RMSE against the
/// logged truth over airborne rows.
pub fn metrics<R: BufRead>(mut reader: R) -> Result<LogMetrics> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let first = first.trim_end();
    if first != LOG_VERSION {
        return Err(Error::Log(format!("unsupported log version line {first:?}")));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers().map_err(|e| Error::Log(e.to_string()))?.clone();
    let idx = |n: &str| column(&headers, n);
    let c_t = idx("t")?;
    let c_phase = idx("phase")?;
    let c_contact = idx("contact")?;
    let c_height = idx("height")?;
    let truth = [idx("true_x")?, idx("true_y")?, idx("true_z")?];
    let sources = [
        [idx("qr_x")?, idx("qr_y")?, idx("qr_z")?],
        [idx("uwb_x")?, idx("uwb_y")?, idx("uwb_z")?],
        [idx("est_x")?, idx("est_y")?, idx("est_z")?],
    ];
    let mut acc = [RmseAcc::default(); 3];
    let mut qr_samples = Vec::new();
    let mut phase_durations: BTreeMap<String, f64> = BTreeMap::new();
    let mut rows = 0;
    let mut t_first = None;
    let mut t_last = 0.0;
    let mut prev: Option<(f64, String)> = None;
    for (i, rec) in csv.records().enumerate() {
        let line = i as u64 + 3;
        let rec = rec.map_err(|e| Error::Log(format!("line {line}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(Error::Log(format!("line {line}: expected {} fields", headers.len())));
        }
        rows += 1;
        let t = parse_f(&rec, c_t, line)?.ok_or_else(|| Error::Log(format!("line {line}: missing t")))?;
        t_first.get_or_insert(t);
        t_last = t;
        let phase = rec.get(c_phase).unwrap_or("").to_string();
        if MissionPhase::parse(&phase).is_none() {
            return Err(Error::Log(format!("line {line}: unknown phase {phase:?}")));
        }
        if let Some((pt, pp)) = prev.take() {
            *phase_durations.entry(pp).or_default() += t - pt;
        }
        prev = Some((t, phase));
        let Some(tr) = parse_vec(&rec, truth, line)? else {
            return Err(Error::Log(format!("line {line}: missing truth")));
        };
        if rec.get(c_contact) != Some("air") {
            continue;
        }
        for (k, cols) in sources.iter().enumerate() {
            if let Some(est) = parse_vec(&rec, *cols, line)? {
                acc[k].push(&est, &tr);
                if k == 0 {
                    let h = parse_f(&rec, c_height, line)?.unwrap_or(tr.z);
                    qr_samples.push((h, (est - tr).norm()));
                }
            }
        }
    }
    Ok(LogMetrics {
        rows,
        duration: t_last - t_first.unwrap_or(t_last),
        rmse: SourceRmse {
            qr: acc[0].finish(),
            uwb: acc[1].finish(),
            fused: acc[2].finish(),
        },
        qr_by_height: bucket_by_height(&qr_samples),
        phase_durations,
    })
}
