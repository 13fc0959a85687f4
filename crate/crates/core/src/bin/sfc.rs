use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sfc::auditlog::{self, EventKind, Filter};
use sfc::engine::replay_log;
use sfc::escrow::ContractId;
use sfc::ledger::AccountId;
use sfc::scenario::run_scenario;

#[derive(Parser)]
#[command(name = "sfc", version, about = "Standing Forest Coin protocol engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and print the resulting report
    Run {
        scenario: PathBuf,
        /// Write the audit log as newline-delimited JSON
        #[arg(long, value_name = "PATH")]
        export_log: Option<PathBuf>,
    },
    /// Check the hash chain of an exported log
    Verify { log: PathBuf },
    /// List events of an exported log matching every given filter
    Explore {
        log: PathBuf,
        #[arg(long)]
        account: Option<String>,
        #[arg(long)]
        contract: Option<String>,
        #[arg(long)]
        kind: Option<EventKind>,
        /// First sequence number (inclusive)
        #[arg(long)]
        from_seq: Option<u64>,
        /// Last sequence number (exclusive)
        #[arg(long)]
        to_seq: Option<u64>,
    },
    /// Reconstruct balances and contract states by replaying a log
    Report { log: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &PathBuf) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_verified(path: &PathBuf) -> Result<Vec<auditlog::AuditEvent>, String> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| "log is not valid UTF-8".to_string())?;
    let events = auditlog::parse_export(&text).map_err(|e| e.to_string())?;
    if !auditlog::verify_chain(&events) {
        return Err("log failed hash-chain verification".into());
    }
    Ok(events)
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run {
            scenario,
            export_log,
        } => {
            let run = run_scenario(&scenario).map_err(|e| e.to_string())?;
            println!("{}", run.report);
            if let Some(path) = export_log {
                std::fs::write(&path, run.engine.export_log())
                    .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(run.report.passed())
        }
        Command::Verify { log } => {
            let bytes = read(&log)?;
            if auditlog::verify_export(&bytes) {
                let events =
                    auditlog::parse_export(std::str::from_utf8(&bytes).unwrap_or_default())
                        .map_err(|e| e.to_string())?;
                let head = events
                    .last()
                    .map(|e| e.hash.clone())
                    .unwrap_or_else(auditlog::genesis_hash);
                println!("valid: {} events, head {head}", events.len());
                Ok(true)
            } else {
                println!("INVALID");
                Ok(false)
            }
        }
        Command::Explore {
            log,
            account,
            contract,
            kind,
            from_seq,
            to_seq,
        } => {
            let events = load_verified(&log)?;
            let mut filters = Vec::new();
            if let Some(a) = account {
                filters.push(Filter::Account(
                    AccountId::new(a).map_err(|e| e.to_string())?,
                ));
            }
            if let Some(c) = contract {
                filters.push(Filter::Contract(ContractId::new(c)));
            }
            if let Some(k) = kind {
                filters.push(Filter::Kind(k));
            }
            if from_seq.is_some() || to_seq.is_some() {
                filters.push(Filter::SeqRange {
                    from: from_seq.unwrap_or(0),
                    to: to_seq.unwrap_or(u64::MAX),
                });
            }
            for event in events
                .iter()
                .filter(|e| filters.iter().all(|f| f.matches(e)))
            {
                println!("{}", event.to_line());
            }
            Ok(true)
        }
        Command::Report { log } => {
            let events = load_verified(&log)?;
            let replay = replay_log(&events).map_err(|e| e.to_string())?;
            let d = replay.decimals;
            println!("events: {}", replay.events);
            println!("last event at: {}", replay.last_at);
            println!("total supply: {}", replay.total_supply.display(d));
            println!("balances:");
            for (id, balance) in &replay.balances {
                println!("  {id:<20} {:>16}", balance.display(d).to_string());
            }
            if !replay.contracts.is_empty() {
                println!("contracts:");
                for (id, c) in &replay.contracts {
                    println!("  {id:<8} landowner={} state={}", c.landowner, c.state);
                }
            }
            Ok(true)
        }
    }
}
