//! `histlab run <NAME>` or `histlab run --config PATH`.
//!
//! Exit status: 0 success, 2 parse/validation, 3 numerical failure, 4 I/O.
//! Failures print one JSON object on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use histlab::scenario::{golden_scenario, parse_scenario, run, OutputFormat, RunOptions, GOLDEN_SCENARIOS};
use histlab::Error;

#[derive(Parser, Debug)]
#[command(name = "histlab", version, about = "Decoherent-histories scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a shipped scenario by name, or a scenario file.
    Run {
        /// Name of a shipped scenario (see `list`).
        name: Option<String>,
        #[arg(long, value_name = "PATH", conflicts_with = "name")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        /// Decoherence tolerance override.
        #[arg(long, value_name = "FLOAT")]
        tolerance: Option<f64>,
        #[arg(long, value_name = "INT")]
        seed: Option<u64>,
        #[arg(long, value_name = "INT")]
        threads: Option<usize>,
    },
    /// List shipped scenarios.
    List,
    /// Print a shipped scenario in canonical form.
    Show { name: String },
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut v = serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    });
    match e {
        Error::Parse { line, column, .. } => {
            v["line"] = (*line).into();
            v["column"] = (*column).into();
        }
        Error::Validation { key, .. } => v["key"] = key.as_str().into(),
        Error::Io { path, .. } => v["path"] = path.as_str().into(),
        _ => {}
    }
    v
}

fn unknown(name: &str) -> Error {
    Error::Validation {
        key: "name".into(),
        message: format!("no shipped scenario `{name}`"),
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::List => {
            for (name, _) in GOLDEN_SCENARIOS {
                println!("{name}");
            }
        }
        Command::Show { name } => print!("{}", golden_scenario(&name).ok_or_else(|| unknown(&name))?.to_toml()?),
        Command::Run {
            name,
            config,
            out,
            format,
            tolerance,
            seed,
            threads,
        } => {
            if let Some(n) = threads {
                // only fails if a global pool already exists
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            let scenario = match (name, config) {
                (_, Some(path)) => parse_scenario(&path)?,
                (Some(name), None) => golden_scenario(&name).ok_or_else(|| unknown(&name))?,
                (None, None) => {
                    return Err(Error::Validation {
                        key: "config".into(),
                        message: "give a scenario name or --config PATH".into(),
                    })
                }
            };
            let options = RunOptions {
                out_dir: out.clone(),
                format,
                tolerance,
                seed,
            };
            let report = run(&scenario, &options)?;
            println!(
                "{}: {} in {:.3}s",
                report.scenario,
                if report.passed() { "pass" } else { "FAIL" },
                report.wall_time.as_secs_f64()
            );
            for (k, v) in &report.defects {
                println!("  {k} = {v:e}");
            }
            for f in &report.outputs {
                println!("  wrote {}", out.join(f).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
