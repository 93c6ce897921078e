use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seahaul::mission::MissionPhase;
use seahaul::planner::{plan_search, DeckPose};
use seahaul::runner::{metrics, monte_carlo, run_scenario};
use seahaul::{Error, ScenarioConfig};

const EXIT_ABORTED: u8 = 2;
const EXIT_CONFIG: u8 = 64;
const EXIT_FAILURE: u8 = 1;

/// Simulated UAV cargo transfer between moving vessels.
///
/// Every flag can also be set through an environment variable with the
/// `SEAHAUL_` prefix, e.g. `SEAHAUL_SEED=7`.
#[derive(Parser, Debug)]
#[command(name = "seahaul", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fly one mission and write its trajectory log and summary.
    Run {
        /// Scenario JSON; the built-in competition replica when omitted.
        #[arg(long, env = "SEAHAUL_SCENARIO")]
        scenario: Option<PathBuf>,
        #[arg(long, env = "SEAHAUL_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "SEAHAUL_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Many seeded missions in parallel with aggregate statistics.
    Montecarlo {
        #[arg(long, env = "SEAHAUL_SCENARIO")]
        scenario: Option<PathBuf>,
        #[arg(long, env = "SEAHAUL_RUNS", default_value_t = 100)]
        runs: usize,
        /// First seed; run i uses seed + i.
        #[arg(long, env = "SEAHAUL_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "SEAHAUL_WORKERS")]
        workers: Option<usize>,
        /// Landing error counted as a success, metres.
        #[arg(long, default_value_t = 0.15)]
        threshold: f64,
        #[arg(long, env = "SEAHAUL_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// RMSE and QR error-vs-height tables from a trajectory log.
    Metrics {
        log: PathBuf,
    },
    /// Coverage waypoints for a deck, as CSV on stdout.
    Plan {
        #[arg(long, value_delimiter = ',', default_value = "6.5,2.0")]
        center: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        yaw_deg: f64,
        #[arg(long, value_delimiter = ',', default_value = "4.0,4.0")]
        size: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        deck_height: f64,
        #[arg(long, default_value_t = 5.0)]
        altitude: f64,
        #[arg(long, default_value_t = 106.0)]
        h_fov_deg: f64,
        #[arg(long, default_value_t = 73.0)]
        v_fov_deg: f64,
    },
}

fn load(path: Option<&Path>) -> seahaul::Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::competition_replica()),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> seahaul::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Log(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config { .. } => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_FAILURE),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn run(cli: Cli) -> seahaul::Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, seed, out } => {
            let cfg = load(scenario.as_deref())?;
            let seed = seed.unwrap_or(cfg.seed);
            std::fs::create_dir_all(&out)?;
            let log = BufWriter::new(File::create(out.join("trajectory.csv"))?);
            let summary = run_scenario(&cfg, seed, Some(log))?;
            write_json(&out.join("summary.json"), &summary)?;
            println!(
                "{}: {} after {:.1} s, landing error {}",
                cfg.name,
                summary.outcome.as_str(),
                summary.mission_time,
                summary
                    .landing_error
                    .map(|e| format!("{e:.3} m"))
                    .unwrap_or_else(|| "n/a".into())
            );
            if let Some(reason) = &summary.abort_reason {
                println!("abort reason: {reason}");
            }
            Ok(if summary.outcome == MissionPhase::Done {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ABORTED)
            })
        }
        Command::Montecarlo {
            scenario,
            runs,
            seed,
            workers,
            threshold,
            out,
        } => {
            let cfg = load(scenario.as_deref())?;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(w) = workers {
                pool = pool.num_threads(w);
            }
            let pool = pool.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let report = pool.install(|| monte_carlo(&cfg, runs, seed, threshold))?;
            std::fs::create_dir_all(&out)?;
            write_json(&out.join("montecarlo.json"), &report)?;
            println!(
                "{} runs, {} done, {:.1}% landed within {:.2} m",
                report.runs,
                report.done,
                100.0 * report.success_rate,
                threshold
            );
            if let Some(q) = &report.landing_error {
                println!(
                    "landing error p50 {:.3} p90 {:.3} p95 {:.3} max {:.3} m",
                    q.p50, q.p90, q.p95, q.max
                );
            }
            let d = report.mean_durations;
            println!(
                "mean durations takeoff {:.1} search {:.1} land {:.1} adsorb {:.1} return {:.1} s",
                d.takeoff, d.search, d.land, d.adsorb, d.return_
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics { log } => {
            let m = metrics(BufReader::new(File::open(&log)?))?;
            let stdout = std::io::stdout();
            let mut o = stdout.lock();
            writeln!(o, "rows {} duration {:.2} s", m.rows, m.duration)?;
            for (name, r) in [("qr", m.rmse.qr), ("uwb", m.rmse.uwb), ("fused", m.rmse.fused)] {
                match r {
                    Some(r) => writeln!(
                        o,
                        "{name:<6} rmse x {:.4} y {:.4} z {:.4} m ({} samples)",
                        r.x, r.y, r.z, r.samples
                    )?,
                    None => writeln!(o, "{name:<6} no samples")?,
                }
            }
            writeln!(o, "height_m,samples,median_m,max_m")?;
            for b in &m.qr_by_height {
                writeln!(o, "{}-{},{},{:.4},{:.4}", b.lower, b.lower + 1.0, b.samples, b.median, b.max)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan {
            center,
            yaw_deg,
            size,
            deck_height,
            altitude,
            h_fov_deg,
            v_fov_deg,
        } => {
            if center.len() != 2 || size.len() != 2 {
                return Err(Error::InvalidArgument("--center and --size take two values".into()));
            }
            let deck = DeckPose {
                center: [center[0], center[1]],
                yaw: yaw_deg.to_radians(),
                size: [size[0], size[1]],
                height: deck_height,
            };
            let plan = plan_search(&deck, altitude, v_fov_deg.to_radians(), h_fov_deg.to_radians())?;
            let stdout = std::io::stdout();
            let mut w = csv::Writer::from_writer(stdout.lock());
            let io = |e: csv::Error| Error::Log(e.to_string());
            w.write_record(["x_m", "y_m", "z_m", "yaw_rad"]).map_err(io)?;
            for p in &plan.waypoints {
                w.write_record([p.x, p.y, p.z, p.yaw].map(|v| format!("{v:.6}"))).map_err(io)?;
            }
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
