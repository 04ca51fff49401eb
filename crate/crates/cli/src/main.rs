//! `gpsloran`: capture, classify, convert and inspect GPS/Loran receiver logs.

mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use gpsloran::convert::ExportFormat;
use gpsloran::orchestrate::RotationPolicy;
use gpsloran::parse::StationId;
use gpsloran::record::SourceEndpoint;
use gpsloran::simulate::Pacing;

#[derive(Parser)]
#[command(
    name = "gpsloran",
    version,
    about = "GPS/Loran receiver capture and conversion"
)]
struct Cli {
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capture a receiver stream into rotating raw segments.
    Record(RecordArgs),
    /// Split one raw segment into per-sentence stores.
    Classify(ClassifyArgs),
    /// Parse a classified segment and export its timeline.
    Convert(ConvertArgs),
    /// Unattended capture with processing of every closed segment.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// SNR and fix series plus a summary for a processed session.
    Stats(StatsArgs),
    /// Finish an interrupted session.
    Recover {
        /// Session directory holding the state file.
        #[arg(long = "state")]
        state: PathBuf,
        /// Start a fresh capture with this config once recovery is done.
        #[arg(long)]
        resume_with: Option<PathBuf>,
    },
    /// Synthetic receiver streams.
    #[command(subcommand)]
    Simulate(SimulateCommand),
}

#[derive(Args)]
struct RecordArgs {
    /// `serial:<device>`, `tcp:<host:port>` or `replay:<file>`.
    #[arg(long)]
    source: SourceEndpoint,
    #[arg(long)]
    out: PathBuf,
    /// `utc-midnight` or a fixed interval such as `24h`.
    #[arg(long, default_value = "utc-midnight")]
    rotate: RotationPolicy,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "1s")]
    flush_interval: Duration,
    /// fsync after every flush.
    #[arg(long)]
    sync_on_flush: bool,
    /// Replay pacing multiplier; 0 replays as fast as possible.
    #[arg(long)]
    replay_speed: Option<f64>,
    /// Reconnect attempts after the link drops.
    #[arg(long, default_value_t = 8)]
    retries: u32,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    segment: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Route lines with a bad checksum to their class store instead of quarantine.
    #[arg(long)]
    keep_invalid_checksums: bool,
    #[arg(long)]
    max_line_len: Option<usize>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    classified: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `columns` (CSV) or `lines` (JSON lines); repeat or comma-separate for both.
    #[arg(long, value_delimiter = ',', default_value = "columns")]
    format: Vec<ExportFormat>,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "5m")]
    gap_threshold: Duration,
}

#[derive(Args)]
struct StatsArgs {
    /// A session directory, or one converted directory.
    #[arg(long)]
    session: PathBuf,
    /// Only this station, e.g. `9930M`.
    #[arg(long)]
    station: Option<StationId>,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "5m")]
    gap_threshold: Duration,
    /// Where the series go; defaults to `<session>/stats`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Serve a scenario over TCP to one client at a time.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "127.0.0.1:4001")]
        listen: String,
        /// `real-time`, `unpaced`, or `accelerated:<factor>`.
        #[arg(long, default_value = "real-time")]
        pace: Pacing,
        /// Write the ground-truth timeline here.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Write a scenario's byte stream to a file.
    Generate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // usage errors are configuration errors; clap's own code 2 means partial here
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { cmd::FATAL } else { cmd::OK });
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(false)
        .with_target(false)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();

    let exec = if cli.sequential {
        gpsloran::Execution::Sequential
    } else {
        gpsloran::Execution::Parallel
    };
    let result = match cli.command {
        Command::Record(a) => cmd::record(a),
        Command::Classify(a) => cmd::classify(a, exec),
        Command::Convert(a) => cmd::convert(a, exec),
        Command::Run { config } => cmd::run(&config, cli.sequential),
        Command::Stats(a) => cmd::stats(a),
        Command::Recover { state, resume_with } => {
            cmd::recover(&state, resume_with.as_deref(), exec, cli.sequential)
        }
        Command::Simulate(SimulateCommand::Serve {
            scenario,
            listen,
            pace,
            truth,
        }) => cmd::serve(&scenario, &listen, pace, truth.as_deref()),
        Command::Simulate(SimulateCommand::Generate {
            scenario,
            out,
            truth,
        }) => cmd::generate(&scenario, &out, truth.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            tracing::error!("{}", error_chain(&e));
            ExitCode::from(cmd::FATAL)
        }
    }
}

/// Causes joined with `: `, skipping any already spelled out by the one above.
fn error_chain(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}
