use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use disentangle::manifest::{RunManifest, RunOutcome};
use disentangle::par::{self, Execution};
use disentangle::{verify, Error};

/// Exit status: 1 for bad input, 2 for a failed run, 3 for a failed check.
const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "disentangle", version, about = "Decentralized QP control simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one manifest and write its artifacts.
    Run {
        manifest: PathBuf,
        /// Override the manifest's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in correctness suites.
    Verify,
    /// Run a manifest once per value of one parameter, concurrently.
    Sweep {
        manifest: PathBuf,
        /// `key=v1,v2,...`; a bare key resolves in `[sim]`, then the scenario block.
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn status(e: &Error) -> u8 {
    match e {
        Error::Manifest { .. } | Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn load(path: &Path, out: Option<PathBuf>) -> Result<RunManifest, Error> {
    let mut m = RunManifest::from_path(path).map_err(|e| match e {
        Error::Io(m) => Error::Config(format!("{}: {m}", path.display())),
        e => e,
    })?;
    if let Some(dir) = out {
        m.output_dir = dir;
    }
    Ok(m)
}

fn summary(m: &RunManifest, o: &RunOutcome) -> String {
    let x = &o.metrics;
    format!(
        "{}: V0 {:.3e}, V(end) {:.3e}, envelope violations {}, switches {}, -> {}",
        m.scenario.name(),
        x.initial_v,
        x.final_v,
        x.envelope_violations.map_or("n/a".to_string(), |v| v.to_string()),
        x.switches,
        m.output_dir.display()
    )
}

fn run_one(m: &RunManifest) -> Result<String, Error> {
    let outcome = m.execute()?;
    m.write_outputs(&outcome)?;
    Ok(summary(m, &outcome))
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("DISENTANGLE_THREADS").ok().and_then(|s| s.parse().ok()) {
        par::init_thread_pool(n);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { manifest, out } => load(&manifest, out).and_then(|m| run_one(&m)).map(|s| println!("{s}")),
        Command::Verify => {
            let reports = verify::run_all();
            for r in &reports {
                println!("{:<12} {} {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
            }
            if reports.iter().any(|r| !r.passed) {
                return ExitCode::from(EXIT_VERIFY);
            }
            Ok(())
        }
        Command::Sweep { manifest, param, out } => sweep(&manifest, &param, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(status(&e))
        }
    }
}

fn sweep(path: &Path, param: &str, out: Option<PathBuf>) -> Result<(), Error> {
    let (key, values) = param
        .split_once('=')
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| Error::Config(format!("--param expects key=v1,v2,..., got {param:?}")))?;
    let values: Vec<&str> = values.split(',').map(str::trim).collect();
    let runs = load(path, out)?.sweep(key, &values)?;
    // Runs share nothing but the pool; each writes its own directory.
    let results = par::map_slice(Execution::Parallel, &runs, run_one);
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => println!("{s}"),
            Err(e) => {
                eprintln!("error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}
