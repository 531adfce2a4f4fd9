use std::io::{BufRead, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use ami_cli::{chat, simulate};
use ami_core::irr::{self, KappaWeights};
use ami_core::SystemClock;
use ami_server::{AppState, Config};
use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ami", version, about = "Indoor air monitoring server and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API, chat and MCP endpoint until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Post synthetic sensor readings to a running server.
    SimulateSensors {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        #[arg(long, default_value_t = 2)]
        devices: usize,
        /// Seconds between readings.
        #[arg(long, default_value_t = 60)]
        interval: u64,
        /// Seconds of simulated time.
        #[arg(long, default_value_t = 3600)]
        duration: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Timestamp of the first reading (RFC 3339); defaults to now.
        #[arg(long)]
        start: Option<DateTime<Utc>>,
        /// Wait `interval` seconds between ticks instead of posting at once.
        #[arg(long)]
        realtime: bool,
        #[arg(long, env = "AMI_DEVICE_KEY", hide_env_values = true)]
        device_key: Option<String>,
    },
    /// Chat with the assistant from the terminal.
    Chat {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        #[arg(long)]
        user: String,
        /// Read from the first line of stdin when neither this nor AMI_PASSWORD is set.
        #[arg(long, env = "AMI_PASSWORD", hide_env_values = true)]
        password: Option<String>,
    },
    /// Inter-rater reliability table for a ratings CSV.
    EvalIrr {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = KappaWeights::Quadratic)]
        scheme: KappaWeights,
        #[arg(long, default_value_t = 5)]
        scale_max: u8,
        #[arg(long)]
        json: bool,
    },
    /// Print a password hash for a config `seed_users` entry.
    HashPassword {
        /// Read from stdin when omitted.
        #[arg(long)]
        password: Option<String>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ami: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Serve { config } => serve(config),
        Command::SimulateSensors {
            url,
            devices,
            interval,
            duration,
            seed,
            start,
            realtime,
            device_key,
        } => {
            let plan = simulate::SimulationPlan {
                devices,
                interval: Duration::from_secs(interval),
                duration: Duration::from_secs(duration),
                start: start.unwrap_or_else(Utc::now),
                seed,
            };
            let report = simulate::run(&url, &plan, device_key.as_deref(), realtime)?;
            println!("posted {} readings, {} failed", report.posted, report.failed);
            if report.too_many_failures() {
                bail!("{} of {} posts failed", report.failed, report.posted);
            }
            Ok(())
        }
        Command::Chat { url, user, password } => {
            let stdin = std::io::stdin();
            let mut input = stdin.lock();
            let password = match password {
                Some(p) => p,
                None => first_line(&mut input).context("no password given")?,
            };
            let client = chat::ChatClient::login(&url, &user, &password)?;
            let echo = !std::io::stdin().is_terminal();
            let result = chat::run(&client, input, std::io::stdout().lock(), echo);
            client.logout();
            result
        }
        Command::EvalIrr {
            csv,
            scheme,
            scale_max,
            json,
        } => {
            let reports = irr::evaluate_csv(&csv, scale_max, scheme).with_context(|| csv.display().to_string())?;
            let mut out = std::io::stdout().lock();
            if json {
                serde_json::to_writer_pretty(&mut out, &reports)?;
                writeln!(out)?;
            } else {
                write!(out, "{}", irr::render_table(&reports))?;
            }
            Ok(())
        }
        Command::HashPassword { password } => {
            let password = match password {
                Some(p) => p,
                None => first_line(&mut std::io::stdin().lock())?,
            };
            if password.is_empty() {
                bail!("empty password");
            }
            println!("{}", ami_core::auth::hash_password(&password));
            Ok(())
        }
    }
}

fn first_line(input: &mut impl BufRead) -> anyhow::Result<String> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        bail!("unexpected end of input");
    }
    Ok(line.trim_end_matches(['\r', '\n']).to_owned())
}

fn serve(path: PathBuf) -> anyhow::Result<()> {
    let config = Config::load(&path).with_context(|| format!("invalid config {}", path.display()))?;
    let addr = config.bind_addr()?;
    let state = Arc::new(AppState::from_config(&config, Arc::new(SystemClock))?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        ami_server::serve(listener, state, config.static_dir.as_deref(), shutdown_signal()).await?;
        tracing::info!("stopped");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
