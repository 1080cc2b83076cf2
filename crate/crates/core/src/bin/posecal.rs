use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use posecal::geometry::{decompose_pose, Pose};
use posecal::session::{format_number, instructions, server, SessionConfig};
use posecal::simulator::{run_experiment, write_outputs, ExperimentConfig};

#[derive(Parser)]
#[command(name = "posecal", version, about = "Guided camera calibration with pose search")]
struct Cli {
    /// Log more (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulated pose-selection experiment and write CSVs and a summary.
    Simulate {
        /// JSON experiment config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for repetitions.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the four guidance steps for a pose (degrees, mm).
    #[command(allow_negative_numbers = true)]
    Decompose {
        xr: f64,
        yr: f64,
        zr: f64,
        xt: f64,
        yt: f64,
        zt: f64,
    },
    /// Serve the session protocol over TCP, one simulated session per client.
    Serve {
        #[arg(long)]
        port: u16,
        /// JSON session config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// User errors exit with 1, internal failures with 2.
enum Failure {
    User(String),
    Internal(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format(|buf, record| {
            use std::io::Write;
            writeln!(buf, "level={} target={} {}", record.level(), record.target(), record.args())
        })
        .init();
    let result = match cli.command {
        Command::Simulate { config, out, seed, jobs } => simulate(config.as_deref(), &out, seed, jobs),
        Command::Decompose { xr, yr, zr, xt, yt, zt } => decompose([xr, yr, zr, xt, yt, zt]),
        Command::Serve { port, config } => serve(port, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(m)) => {
            error!("event=error kind=user message={m:?}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(m)) => {
            error!("event=error kind=internal message={m:?}");
            ExitCode::from(2)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::User(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::User(format!("{}: {e}", path.display())))
}

fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>, jobs: usize) -> Result<(), Failure> {
    let mut cfg: ExperimentConfig = match config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Failure::User(e.to_string()))?;
    info!(
        "event=simulate_start strategies={} repetitions={} seed={} jobs={jobs}",
        cfg.strategies.len(),
        cfg.repetitions,
        cfg.seed
    );
    let result = run_experiment(&cfg, jobs).map_err(|e| Failure::Internal(e.to_string()))?;
    write_outputs(&result, out).map_err(|e| Failure::User(e.to_string()))?;
    info!("event=simulate_done out={:?}", out.display().to_string());
    Ok(())
}

fn decompose(values: [f64; 6]) -> Result<(), Failure> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Failure::User("pose components must be finite".into()));
    }
    let target = Pose::from_degrees(values[0], values[1], values[2], values[3], values[4], values[5]);
    for (i, (pose, instruction)) in decompose_pose(&target).iter().zip(instructions(&target)).enumerate() {
        let d = pose.to_degrees();
        let parts = [("xr", d.xr), ("yr", d.yr), ("zr", d.zr), ("xt", d.xt), ("yt", d.yt), ("zt", d.zt)];
        let fields: Vec<String> = parts.iter().map(|(k, v)| format!("{k}={}", format_number(*v))).collect();
        println!("step {}: {}", i + 1, fields.join(" "));
        println!("  {}", instruction.text());
    }
    Ok(())
}

fn serve(port: u16, config: Option<&Path>) -> Result<(), Failure> {
    let cfg: SessionConfig = match config {
        Some(p) => read_json(p)?,
        None => SessionConfig::default(),
    };
    cfg.validate().map_err(|e| Failure::User(e.to_string()))?;
    let listener = std::net::TcpListener::bind(("127.0.0.1", port))
        .map_err(|e| Failure::User(format!("cannot listen on port {port}: {e}")))?;
    server::serve(listener, cfg).map_err(|e| Failure::Internal(e.to_string()))
}
