use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use wheelsim::analytics::{accuracy_table, bland_altman, emit_report, PairedReadings, Report, ReportFormat};
use wheelsim::arbitration::MotionDirection;
use wheelsim::calibration::VitalKind;
use wheelsim::detectors::DetectorConfig;
use wheelsim::monitor::http::{serve, AppState};
use wheelsim::monitor::{MonitorService, ServiceConfig, SystemClock};
use wheelsim::sim::trials::{parse_modality, run_trials, NoiseFixture};
use wheelsim::sim::{run_scenario, LiveConfig, LiveSession, RunOptions, Scenario};
use wheelsim::telemetry::{parse_key_hex, read_key_file, Key};

type Error = Box<dyn std::error::Error + Send + Sync>;

#[derive(Parser)]
#[command(name = "wheelsim", version, about = "Assistive wheelchair controller twin")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file (or a bundled scenario name) and write its artifacts.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        realtime: bool,
        /// Upload frames to a running service instead of the in-process one.
        #[arg(long)]
        upload: Option<String>,
    },
    /// Command-accuracy trials for one cell, or every cell of a noise fixture.
    Trials {
        #[arg(long, required_unless_present = "fixture")]
        modality: Option<String>,
        #[arg(long, required_unless_present = "fixture")]
        command: Option<MotionDirection>,
        #[arg(long, default_value_t = 100)]
        n: u32,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Named noise profile ("paper") covering the whole table.
        #[arg(long, conflicts_with_all = ["modality", "command"])]
        fixture: Option<String>,
        /// Also write the accuracy report and per-trial log here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monitoring service with HTTP API, stream, and a live drive session.
    Serve {
        #[arg(long, env = "WHEELSIM_PORT", default_value_t = 8080)]
        port: u16,
        /// Key file (32 hex characters) or the hex key itself.
        #[arg(long, env = "WHEELSIM_KEY")]
        key: String,
        #[arg(long, env = "WHEELSIM_DATA", default_value = "wheelsim-data")]
        data: PathBuf,
        #[arg(long, env = "WHEELSIM_OUTBOX")]
        outbox: Option<PathBuf>,
        #[arg(long, env = "WHEELSIM_WEBHOOK")]
        webhook: Option<String>,
        #[arg(long, env = "WHEELSIM_DETECTORS")]
        detectors: Option<PathBuf>,
        /// Serve the API only, without a drive session.
        #[arg(long)]
        no_drive: bool,
        #[arg(long, default_value_t = 1)]
        device_id: u64,
    },
    /// Ask a running service to clear the safe-halt latch.
    ClearSafehalt {
        #[arg(long, env = "WHEELSIM_URL", default_value = "http://127.0.0.1:8080")]
        url: String,
    },
    /// Agreement statistics for a module,reference CSV.
    Analyze {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        kind: VitalKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,json,plotdata")]
        format: Vec<ReportFormat>,
    },
}

fn load_key(arg: &str) -> Result<Key, Error> {
    let p = Path::new(arg);
    Ok(if p.exists() { read_key_file(p)? } else { parse_key_hex(arg)? })
}

fn load_scenario(arg: &str) -> Result<Scenario, Error> {
    let p = Path::new(arg);
    if !p.exists() {
        if let Some(s) = Scenario::bundled(arg) {
            return Ok(s);
        }
    }
    Ok(Scenario::from_json(&std::fs::read_to_string(p)?)?)
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Run { scenario, out, realtime, upload } => {
            let s = load_scenario(&scenario)?;
            let r = run_scenario(&s, &out, &RunOptions { realtime, upload_url: upload })?;
            println!("{}", serde_json::to_string_pretty(&r.metrics)?);
        }
        Cmd::Trials { modality, command, n, noise, seed, fixture, out } => {
            let log = match fixture {
                Some(name) => NoiseFixture::by_name(&name).ok_or_else(|| format!("unknown noise fixture `{name}`"))?.run()?,
                None => {
                    let m = parse_modality(modality.as_deref().expect("clap requires modality"))?;
                    run_trials(m, command.expect("clap requires command"), n, noise, seed)?
                }
            };
            let report = accuracy_table(&log)?;
            print!("{}", report.to_table_csv());
            println!("{}", report.note);
            if let Some(dir) = out {
                emit_report(&Report::Accuracy(report), &[ReportFormat::Csv, ReportFormat::Json, ReportFormat::PlotData], &dir)?;
                std::fs::write(dir.join("trials.csv"), log.to_trials_csv())?;
            }
        }
        Cmd::Serve { port, key, data, outbox, webhook, detectors, no_drive, device_id } => {
            let key = load_key(&key)?;
            let mut cfg = ServiceConfig::new(data);
            if let Some(o) = outbox {
                cfg.outbox_dir = o;
            }
            cfg.webhook_url = webhook;
            if let Some(p) = detectors {
                cfg.detectors = DetectorConfig::from_json(&std::fs::read_to_string(p)?)?;
            }
            let detectors = cfg.detectors.clone();
            let service = Arc::new(MonitorService::open(cfg, key, Box::new(SystemClock))?);
            let session = (!no_drive).then(|| {
                let live = LiveConfig { device_id, detectors, ..LiveConfig::new(key) };
                Arc::new(LiveSession::start(service.clone(), live))
            });
            let state = AppState { service, console: session.clone().map(|s| s as Arc<dyn wheelsim::monitor::http::DriveConsole>) };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
                tracing::info!("listening on {}", listener.local_addr()?);
                serve(listener, state, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
            })?;
        }
        Cmd::ClearSafehalt { url } => {
            let url = format!("{}/safehalt/clear", url.trim_end_matches('/'));
            match ureq::post(&url).send_empty() {
                Ok(mut resp) => println!("{}", resp.body_mut().read_to_string()?),
                Err(ureq::Error::StatusCode(409)) => return Err("refused: a hazard is still active".into()),
                Err(e) => return Err(e.into()),
            }
        }
        Cmd::Analyze { pairs, kind, out, format } => {
            let p = PairedReadings::from_csv(&std::fs::read_to_string(pairs)?, Some(kind))?;
            let report = bland_altman(&p)?;
            print!("{}", report.to_csv());
            for path in emit_report(&Report::Agreement(report), &format, &out)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).init();
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
