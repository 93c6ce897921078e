use std::io::BufReader;
use std::path::Path;
use std::process::Command;

use seahaul::mission::MissionPhase;
use seahaul::runner::{metrics, monte_carlo, run_quiet, run_scenario, LOG_VERSION};
use seahaul::ScenarioConfig;

const BIN: &str = env!("CARGO_BIN_EXE_seahaul");

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

fn seahaul(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn log_of(cfg: &ScenarioConfig, seed: u64) -> String {
    let mut buf = Vec::new();
    run_scenario(cfg, seed, Some(&mut buf)).unwrap();
    String::from_utf8(buf).unwrap()
}

struct Log {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Log {
    fn parse(text: &str) -> Self {
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(LOG_VERSION));
        let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
        let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
        Log { header, rows }
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap()
    }

    fn num(&self, row: usize, name: &str) -> f64 {
        self.rows[row][self.col(name)].parse().unwrap()
    }

    fn text(&self, row: usize, name: &str) -> &str {
        &self.rows[row][self.col(name)]
    }
}

#[test]
fn same_seed_gives_identical_log_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let status = seahaul(&[
            "run",
            "--scenario",
            &scenario("competition_replica"),
            "--seed",
            "12",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    }
    let read = |p: &Path| std::fs::read(p.join("trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(
        std::fs::read(a.join("summary.json")).unwrap(),
        std::fs::read(b.join("summary.json")).unwrap()
    );
}

#[test]
fn geofence_excluding_the_deck_aborts_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::competition_replica();
    cfg.mission.geofence.max[0] = 4.0;
    let path = dir.path().join("fenced.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let out = dir.path().join("out");
    let run = seahaul(&["run", "--scenario", path.to_str().unwrap(), "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["outcome"], "Aborted");
    assert_eq!(summary["abort_reason"], "geofence breach");
}

#[test]
fn invalid_scenario_exits_sixty_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{ "dt": -0.02 }"#).unwrap();
    let run = seahaul(&["run", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&run.stderr).contains("dt"));
    std::fs::write(&path, r#"{ "mission": { "no_such_field": 1 } }"#).unwrap();
    let run = seahaul(&["run", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(64));
}

#[test]
fn plan_prints_the_deck_centre_for_the_competition_deck() {
    let run = seahaul(&["plan", "--center", "9.0,2.0", "--size", "4,4", "--altitude", "5"]);
    assert_eq!(run.status.code(), Some(0));
    let text = String::from_utf8(run.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x_m,y_m,z_m,yaw_rad");
    assert_eq!(lines.len(), 2);
    let v: Vec<f64> = lines[1].split(',').map(|s| s.parse().unwrap()).collect();
    assert!((v[0] - 9.0).abs() < 1e-9 && (v[1] - 2.0).abs() < 1e-9);
}

fn rewrite_estimates(text: &str, bias: f64) -> String {
    let log = Log::parse(text);
    let mut out = format!("{LOG_VERSION}\n{}\n", log.header.join(","));
    for r in 0..log.rows.len() {
        let mut row = log.rows[r].clone();
        for src in ["est", "uwb", "qr"] {
            if row[log.col(&format!("{src}_x"))].is_empty() {
                continue;
            }
            for axis in ["x", "y", "z"] {
                let truth = log.num(r, &format!("true_{axis}"));
                let v = if axis == "x" { truth + bias } else { truth };
                row[log.col(&format!("{src}_{axis}"))] = format!("{v}");
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[test]
fn metrics_of_perfect_and_biased_logs() {
    let text = log_of(&ScenarioConfig::competition_replica(), 3);
    let perfect = metrics(BufReader::new(rewrite_estimates(&text, 0.0).as_bytes())).unwrap();
    for r in [perfect.rmse.qr, perfect.rmse.uwb, perfect.rmse.fused] {
        let r = r.unwrap();
        assert!(r.x.abs() < 1e-12 && r.y.abs() < 1e-12 && r.z.abs() < 1e-12);
    }
    let biased = metrics(BufReader::new(rewrite_estimates(&text, 0.1).as_bytes())).unwrap();
    for r in [biased.rmse.qr, biased.rmse.uwb, biased.rmse.fused] {
        let r = r.unwrap();
        assert!((r.x - 0.1).abs() < 1e-9, "{r:?}");
        assert!(r.y.abs() < 1e-12);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    std::fs::write(&path, &text).unwrap();
    let run = seahaul(&["metrics", path.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&run.stdout).contains("uwb"));
    std::fs::write(&path, text.replacen("v1", "v9", 1)).unwrap();
    assert_ne!(seahaul(&["metrics", path.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn single_run_aggregate_equals_the_run() {
    let cfg = ScenarioConfig::competition_replica();
    let report = monte_carlo(&cfg, 1, 40, 0.15).unwrap();
    let single = run_quiet(&cfg, 40).unwrap();
    assert_eq!(report.summaries.len(), 1);
    assert_eq!(report.summaries[0], single);
    let q = report.landing_error.unwrap();
    assert_eq!(q.p50, single.landing_error.unwrap());
    assert_eq!(q.max, single.landing_error.unwrap());
    assert_eq!(report.success_rate, if single.landing_error.unwrap() <= 0.15 { 1.0 } else { 0.0 });
}

#[test]
fn calm_runs_all_land_within_two_centimetres() {
    let cfg = ScenarioConfig::load(Path::new(&scenario("calm"))).unwrap();
    let report = monte_carlo(&cfg, 30, 0, 0.02).unwrap();
    for s in &report.summaries {
        assert_eq!(s.outcome, MissionPhase::Done, "seed {}", s.seed);
    }
    assert_eq!(report.success_rate, 1.0, "{:?}", report.landing_error);
}

#[test]
fn blind_entry_follows_a_steady_hold() {
    let cfg = ScenarioConfig::competition_replica();
    let hold = cfg.mission.blind_hold_time;
    for seed in 0..5 {
        let log = Log::parse(&log_of(&cfg, seed));
        let entries: Vec<usize> = (0..log.rows.len())
            .filter(|&r| log.text(r, "events").contains("blind-entry"))
            .collect();
        assert!(!entries.is_empty(), "seed {seed} never went blind");
        for &r in &entries {
            let t_entry = log.num(r, "t");
            let mut k = r;
            while k > 0 && log.num(k - 1, "t") >= t_entry - hold - 1e-9 {
                k -= 1;
                let horizontal = log.num(k, "cargo_x").hypot(log.num(k, "cargo_y"));
                let height = -log.num(k, "cargo_z");
                assert_eq!(log.text(k, "stage"), "pre-blind", "seed {seed} t {}", log.num(k, "t"));
                assert!(horizontal < cfg.mission.blind_threshold);
                assert!((height - cfg.mission.pre_blind_height).abs() < cfg.mission.pre_blind_height_tolerance);
            }
            assert!(t_entry - log.num(k, "t") >= hold - cfg.dt - 1e-9);
        }
    }
}

#[test]
fn phases_follow_the_mission_graph_and_windows_avoid_the_action() {
    let cfg = ScenarioConfig::competition_replica();
    let report = monte_carlo(&cfg, 12, 100, 0.15).unwrap();
    for s in &report.summaries {
        let log = Log::parse(&log_of(&cfg, s.seed));
        let mut phases: Vec<String> = Vec::new();
        for r in 0..log.rows.len() {
            let p = log.text(r, "phase");
            if phases.last().map(String::as_str) != Some(p) {
                phases.push(p.to_owned());
            }
        }
        if s.outcome == MissionPhase::Done {
            assert_eq!(&phases[..5], ["takeoff", "search", "land", "adsorb", "return"]);
            assert_eq!(phases.last().unwrap(), "done");
            let middle = &phases[5..phases.len() - 1];
            assert_eq!(middle.len() % 3, 0, "{phases:?}");
            for cycle in middle.chunks(3) {
                assert_eq!(cycle, ["land", "adsorb", "return"]);
            }
        }
        if let (Some(pre), Some(post), Some((a0, a1))) = (&s.pre_window, &s.post_window, s.adsorb_window) {
            for w in [pre, post] {
                assert!(w.end <= a0 + 1e-9 || w.start >= a1 - 1e-9, "{w:?} overlaps {a0}..{a1}");
            }
        }
    }
}

#[test]
fn scenario_json_roundtrip_is_exact() {
    for cfg in [ScenarioConfig::default(), ScenarioConfig::competition_replica()] {
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
    let shipped = ScenarioConfig::load(Path::new(&scenario("competition_replica"))).unwrap();
    assert_eq!(shipped, ScenarioConfig::competition_replica());
}
