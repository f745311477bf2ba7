//! The `sovgate` command. Exit codes: 0 success, 1 operation failure,
//! 2 broken audit chain, 64 usage error, 66 unreadable or malformed input.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use sovgate::audit::{parse_ndjson, reconstruct_trace, verify_chain, verify_ndjson, AuditEvent};
use sovgate::gateway::api::Api;
use sovgate::threat_sim::{concentration_metric, routed_sequence, score_sovereignty, ThreatScenario};
use sovgate::{compare_architectures, run_scenario, ChainVerdict, Gateway, GatewayConfig, TaskId};

pub mod http;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_BROKEN: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_NOINPUT: u8 = 66;

#[derive(Debug, Parser)]
#[command(name = "sovgate", version, about = "Sovereign decision-support gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve the gateway API over HTTP.
    Serve {
        config: PathBuf,
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run one scenario file and print its scorecard.
    RunScenario {
        file: PathBuf,
        /// Write the run's audit log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run every scenario in a directory and write the comparison report.
    Compare {
        suite_dir: PathBuf,
        #[arg(long, default_value = "comparison_report.json")]
        out: PathBuf,
    },
    /// Check an audit log's hash chain.
    VerifyLog { path: PathBuf },
    /// Reconstruct one task's decision trace from a log.
    Trace { task_id: String, log: PathBuf },
    /// Score a log on the six sovereignty axes.
    Score { log: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Display) -> Self {
        Failure { code, message: message.to_string() }
    }

    fn input(path: &Path, e: impl Display) -> Self {
        Failure::new(EXIT_NOINPUT, format!("{}: {e}", path.display()))
    }
}

type Outcome = Result<(), Failure>;

pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sovgate: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Serve { config, listen } => serve(&config, listen),
        Command::RunScenario { file, log } => run_one(&file, log.as_deref()),
        Command::Compare { suite_dir, out } => compare(&suite_dir, &out),
        Command::VerifyLog { path } => verify(&path),
        Command::Trace { task_id, log } => trace(&task_id, &log),
        Command::Score { log } => score(&log),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(path, e))
}

fn write(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::new(EXIT_FAILURE, format!("{}: {e}", path.display())))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn serve(path: &Path, listen: Option<String>) -> Outcome {
    let mut cfg = GatewayConfig::load(path).map_err(|e| Failure::input(path, e))?;
    cfg.apply_env(std::env::vars()).map_err(|e| Failure::new(EXIT_USAGE, e))?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    let gateway = Gateway::from_config(&cfg).map_err(|e| Failure::input(path, e))?;
    let api = Arc::new(Api::new(Arc::new(gateway)));
    let tick = cfg.review_timeout.map(|_| Duration::from_secs(1));
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_FAILURE, e))?;
    rt.block_on(http::serve(api, &cfg.listen, tick)).map_err(|e| Failure::new(EXIT_FAILURE, e))
}

fn load_scenario(path: &Path) -> Result<ThreatScenario, Failure> {
    ThreatScenario::parse(&read(path)?).map_err(|e| Failure::input(path, e))
}

fn run_one(file: &Path, log: Option<&Path>) -> Outcome {
    let s = load_scenario(file)?;
    let report = run_scenario(&s).map_err(|e| Failure::new(EXIT_FAILURE, e))?;
    if let Some(log) = log {
        write(log, &report.ndjson())?;
    }
    println!("{}", pretty(&report.to_json()));
    Ok(())
}

fn compare(dir: &Path, out: &Path) -> Outcome {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::input(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    let suite = files.iter().map(|f| load_scenario(f)).collect::<Result<Vec<_>, _>>()?;
    let report = compare_architectures(&suite).map_err(|e| Failure::input(dir, e))?;
    write(out, &report.to_json())?;
    print!("{}", report.render());
    Ok(())
}

fn verify(path: &Path) -> Outcome {
    let bytes = std::fs::read(path).map_err(|e| Failure::input(path, e))?;
    let verdict = verify_ndjson(&bytes);
    println!("{verdict}");
    match verdict {
        ChainVerdict::Valid => Ok(()),
        ChainVerdict::BrokenAt(_) => Err(Failure::new(EXIT_BROKEN, format!("{}: {verdict}", path.display()))),
    }
}

/// Loads a log that must verify; analysis of a broken chain is refused.
fn load_log(path: &Path) -> Result<Vec<AuditEvent>, Failure> {
    let text = read(path)?;
    let verdict = verify_ndjson(text.as_bytes());
    if verdict != ChainVerdict::Valid {
        return Err(Failure::new(EXIT_BROKEN, format!("{}: {verdict}", path.display())));
    }
    let events = parse_ndjson(&text).map_err(|e| Failure::input(path, e))?;
    debug_assert_eq!(verify_chain(&events), ChainVerdict::Valid);
    Ok(events)
}

fn trace(task: &str, log: &Path) -> Outcome {
    let events = load_log(log)?;
    let t = reconstruct_trace(&TaskId::new(task), &events).map_err(|e| Failure::new(EXIT_FAILURE, e))?;
    println!("{}", pretty(&serde_json::to_value(&t).expect("serializable")));
    Ok(())
}

fn score(log: &Path) -> Outcome {
    let events = load_log(log)?;
    let card = score_sovereignty(&events).map_err(|e| Failure::new(EXIT_BROKEN, e))?;
    let window = (routed_sequence(&events).len() / 4).max(1);
    let out = serde_json::json!({
        "scorecard": card,
        "mean": card.mean(),
        "concentration": concentration_metric(&events, window),
    });
    println!("{}", pretty(&out));
    Ok(())
}
