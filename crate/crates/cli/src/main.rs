//! `acgsim`: run scenarios and benchmarks, inspect multilogs, and edit
//! dictionaries stored on disk.
//!
//! Exit codes: 0 success, 1 failed assertion, 2 usage error, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use acg_replica::apps::{Attrs, SrdaError};
use acg_replica::harness::{
    bench_commit, bench_schedule, dump, run_scenario, run_scenario_text, srda_command, CommitBench, DriverConfig,
    HarnessError, SrdaVerb, CALENDAR_SCRIPT,
};
use acg_replica::multilog::MultilogError;
use acg_replica::site::SiteError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "acgsim",
    version,
    about = "Deterministic simulator for the replication engine"
)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Storage directory.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    /// Give up if the simulation is still busy at this tick.
    #[arg(long, global = true)]
    ticks: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario script and check its expectations.
    Run {
        /// Script file.
        script: Option<PathBuf>,
        /// Run a bundled script instead (`calendar`).
        #[arg(long, conflicts_with = "script")]
        builtin: Option<String>,
    },
    /// Time schedule computation on a random graph.
    BenchSched { actions: usize, constraints: usize },
    /// Measure simulated commit latency.
    BenchCommit {
        sites: usize,
        /// Actions per simulated second per site.
        rate: f64,
        /// Ticks during which actions are issued.
        duration: u64,
    },
    /// List the records of a document, log directory or chunk file.
    Dump { path: PathBuf },
    /// Operate on a dictionary stored under --root.
    Srda {
        /// Participant name of this site.
        #[arg(long, default_value = "local")]
        site: String,
        #[command(subcommand)]
        verb: SrdaCmd,
    },
}

#[derive(Subcommand)]
enum SrdaCmd {
    Insert {
        doc: String,
        tid: String,
        attrs: Vec<String>,
    },
    Modify {
        doc: String,
        tid: String,
        attrs: Vec<String>,
    },
    Remove {
        doc: String,
        tid: String,
    },
    Read {
        doc: String,
        tid: String,
    },
    Dump {
        doc: String,
    },
}

fn attrs(words: &[String]) -> Result<Attrs, HarnessError> {
    words
        .iter()
        .map(|w| {
            w.split_once('=')
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .ok_or_else(|| HarnessError::Usage(format!("expected name=value, got {w:?}")))
        })
        .collect()
}

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Usage(_) | HarnessError::Parse(_) => 2,
        HarnessError::Io(_) => 3,
        HarnessError::Site(SiteError::Storage(MultilogError::IoFailure(_)))
        | HarnessError::Srda(SrdaError::Site(SiteError::Storage(MultilogError::IoFailure(_)))) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<u8, HarnessError> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Run { script, builtin } => {
            let outcome = match (script, builtin.as_deref()) {
                (Some(path), _) => run_scenario(&path, cli.seed, cli.ticks)?,
                (None, Some("calendar")) => run_scenario_text(CALENDAR_SCRIPT, cli.seed, cli.ticks)?,
                (None, Some(other)) => return Err(HarnessError::Usage(format!("no bundled script {other:?}"))),
                (None, None) => return Err(HarnessError::Usage("give a script or --builtin".into())),
            };
            print!("{}", outcome.report);
            for f in &outcome.failures {
                eprintln!("failed: {f}");
            }
            Ok(if outcome.passed() { 0 } else { 1 })
        }
        Command::BenchSched { actions, constraints } => {
            print!("{}", bench_schedule(actions, constraints, seed)?);
            Ok(0)
        }
        Command::BenchCommit { sites, rate, duration } => {
            let mut b = CommitBench {
                sites,
                rate,
                duration,
                driver: DriverConfig {
                    seed,
                    ..DriverConfig::default()
                },
                ..CommitBench::default()
            };
            if let Some(t) = cli.ticks {
                b.max_ticks = t;
            }
            print!("{}", bench_commit(&b)?);
            Ok(0)
        }
        Command::Dump { path } => {
            let d = dump(&path)?;
            print!("{}", d.text);
            println!("records={} flagged={}", d.records, d.flagged);
            Ok(0)
        }
        Command::Srda { site, verb } => {
            let root = cli
                .root
                .ok_or_else(|| HarnessError::Usage("srda needs --root".into()))?;
            let verb = match verb {
                SrdaCmd::Insert { doc, tid, attrs: a } => SrdaVerb::Insert {
                    doc,
                    tid,
                    attrs: attrs(&a)?,
                },
                SrdaCmd::Modify { doc, tid, attrs: a } => SrdaVerb::Modify {
                    doc,
                    tid,
                    attrs: attrs(&a)?,
                },
                SrdaCmd::Remove { doc, tid } => SrdaVerb::Remove { doc, tid },
                SrdaCmd::Read { doc, tid } => SrdaVerb::Read { doc, tid },
                SrdaCmd::Dump { doc } => SrdaVerb::Dump { doc },
            };
            print!("{}", srda_command(&root, &site, &verb)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("acgsim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
