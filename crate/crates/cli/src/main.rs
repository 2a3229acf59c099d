use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use twinsync_core::latency::{export_stats, format_table};
use twinsync_core::live::{loopback_self_test, LiveBridge, LiveOptions};
use twinsync_core::replay::{ReplayLog, ReplayMode, ReplayOptions, SimClock, WallClock};
use twinsync_core::robot_model::{forward_kinematics, parse_urdf_file, RobotModel};
use twinsync_core::scenario::ScenarioConfig;
use twinsync_core::sim::{measure_latency, replay_log, simulate, write_outputs};

#[derive(Parser)]
#[command(
    name = "twinsync",
    version,
    about = "Digital-twin sync engine and teleoperation testbed"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario TOML; the bundled default scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut s = match &self.config {
            Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ScenarioConfig::builtin_default(),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(d) = self.duration {
            s.duration_s = d;
        }
        s.validate().context("invalid scenario")?;
        Ok(s)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario on simulated time and write its trace, stats and log.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Run a scenario and report only the staged latency statistics.
    MeasureLatency {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Stats output; overrides the scenario's path.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Rebuild the twin from a recorded log and print its final state hash.
    Replay {
        log: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Keep the recorded gaps between records.
        #[arg(long)]
        timed: bool,
        #[arg(long)]
        skip_undecodable: bool,
    },
    /// Print the joints and links of a URDF file.
    ParseUrdf { model: PathBuf },
    /// Print every link pose for the given joint positions.
    Fk {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated, one per movable joint, in file order.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        positions: Vec<f64>,
    },
    /// Run the twin over real sockets.
    Live {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "127.0.0.1:9870")]
        telemetry: SocketAddr,
        #[arg(long, default_value = "127.0.0.1:9871")]
        mocap: SocketAddr,
        #[arg(long, default_value = "127.0.0.1:9872")]
        command: SocketAddr,
        /// Record inbound traffic to this log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Send this many telemetry packets over loopback and check them.
        #[arg(long, value_name = "PACKETS")]
        self_test: Option<usize>,
    },
}

fn load_model(path: &Path) -> Result<RobotModel> {
    parse_urdf_file(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Simulate { scenario } => {
            let config = scenario.load()?;
            let report = simulate(&config)?;
            for path in write_outputs(&config, &report)? {
                log::info!("wrote {}", path.display());
            }
            println!("{}", report.summary());
        }
        Cmd::MeasureLatency { scenario, stats } => {
            let config = scenario.load()?;
            let s = measure_latency(&config)?;
            if let Some(p) = stats.or_else(|| config.outputs.stats.as_ref().map(|p| config.resolve(p))) {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                export_stats(&s, &p)?;
                log::info!("wrote {}", p.display());
            }
            print!("{}", format_table(&s));
        }
        Cmd::Replay {
            log,
            scenario,
            timed,
            skip_undecodable,
        } => {
            let config = scenario.load()?;
            let recorded = ReplayLog::read(&log).with_context(|| format!("reading {}", log.display()))?;
            let options = ReplayOptions {
                mode: if timed {
                    ReplayMode::Timed
                } else {
                    ReplayMode::Immediate
                },
                skip_undecodable,
            };
            let report = if timed {
                replay_log(&config, &recorded, options, &mut WallClock::default())?
            } else {
                replay_log(&config, &recorded, options, &mut SimClock::default())?
            };
            println!(
                "records {} heartbeats {} skipped {}\nmerge ticks {}\nstate {}\ntrace {}",
                report.summary.delivered,
                report.summary.heartbeats,
                report.summary.skipped,
                report.state.ticks,
                report.state_hash(),
                report.trace_hash(),
            );
        }
        Cmd::ParseUrdf { model } => {
            let m = load_model(&model)?;
            println!(
                "robot {}  root {}  links {}  joints {}",
                m.name,
                m.root_link(),
                m.links.len(),
                m.joints.len()
            );
            for j in &m.joints {
                println!(
                    "{:<24} {:<10} {} -> {}  limits [{}, {}]",
                    j.name,
                    format!("{:?}", j.kind).to_lowercase(),
                    j.parent,
                    j.child,
                    j.limits.lower,
                    j.limits.upper
                );
            }
        }
        Cmd::Fk { model, positions } => {
            let m = load_model(&model)?;
            let poses = forward_kinematics(&m, &positions)?;
            for (name, p) in &poses {
                let t = p.translation;
                let [w, x, y, z] = p.wxyz();
                println!("{name} {} {} {} {w} {x} {y} {z}", t.x, t.y, t.z);
            }
        }
        Cmd::Live {
            scenario,
            telemetry,
            mocap,
            command,
            log,
            self_test,
        } => {
            let config = scenario.load()?;
            let (_, _, twin) = config.build()?;
            if let Some(packets) = self_test {
                let r = loopback_self_test(twin, packets, 100)?;
                println!(
                    "sent {} malformed {} accepted {} applied {} malformed counted {} final state {}",
                    r.sent,
                    r.malformed_sent,
                    r.live.telemetry_accepted,
                    r.live.counters.telemetry_applied,
                    r.live.counters.telemetry_malformed,
                    if r.final_state_matches { "ok" } else { "mismatch" },
                );
                if !r.passed(0.99) {
                    bail!("loopback self-test failed");
                }
                return Ok(());
            }
            let options = LiveOptions {
                telemetry,
                mocap,
                command,
                duration: scenario.duration.map(Duration::from_secs_f64),
                log,
            };
            let bridge = LiveBridge::bind(twin, options)?;
            let addrs = bridge.addrs()?;
            println!(
                "listening: telemetry udp {} mocap udp {} commands tcp {}",
                addrs.telemetry, addrs.mocap, addrs.command
            );
            let r = bridge.run(|_| false)?;
            println!(
                "merge ticks {} telemetry received {} applied {} malformed {} commands sent {} unsent {}",
                r.state.ticks,
                r.counters.telemetry_received,
                r.counters.telemetry_applied,
                r.counters.telemetry_malformed,
                r.commands_sent,
                r.commands_unsent
            );
            if let Some(s) = &r.stats {
                print!("{}", format_table(s));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
