use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use gfm_core::harness::{
    builtin, builtin_names, load_scenario, read_telemetry, run_scenario, summarize,
    write_telemetry, Abort, CloseRecord, LoadedScenario, RunReport, TransitionRecord,
};
use gfm_core::{Result, SimError};

#[derive(Parser)]
#[command(name = "gfm-sim", version, about = "Grid-forming PV feeder simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write `<name>.csv` and `<name>.report.json`.
    Run {
        /// Built-in scenario name or path to a JSON scenario file.
        scenario: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Seed for measurement noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recompute the run report from a telemetry CSV.
    Summarize { csv: PathBuf },
    /// List built-in scenarios.
    List,
    /// Parse and validate a scenario without running it.
    Validate { scenario: String },
}

#[derive(Serialize)]
struct RunDocument<'a> {
    scenario: &'a str,
    seed: u64,
    report: Option<&'a RunReport>,
    aborted: Option<&'a Abort>,
    transitions: &'a [TransitionRecord],
    closures: &'a [CloseRecord],
    event_log: &'a [(f64, String)],
}

fn resolve(arg: &str) -> Result<LoadedScenario> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        load_scenario(&text)
    } else {
        builtin(arg)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    std::fs::write(path, text + "\n").map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run {
            scenario,
            out,
            seed,
        } => {
            let loaded = resolve(&scenario)?;
            let s = &loaded.scenario;
            std::fs::create_dir_all(&out).map_err(|source| SimError::Io {
                path: out.clone(),
                source,
            })?;
            let result = run_scenario(s, seed)?;
            let csv = out.join(format!("{}.csv", s.name));
            write_telemetry(&result.telemetry, &csv)?;
            let doc = RunDocument {
                scenario: &s.name,
                seed,
                report: result.report.as_ref(),
                aborted: result.aborted.as_ref(),
                transitions: &result.transitions,
                closures: &result.closures,
                event_log: &result.event_log,
            };
            let json = out.join(format!("{}.report.json", s.name));
            write_json(&json, &doc)?;
            println!("wrote {} and {}", csv.display(), json.display());
            if let Some(r) = &result.report {
                println!(
                    "max |RoCoF| {:.3} Hz/s, f range {:.4}..{:.4} Hz",
                    r.max_rocof, r.f_nadir_hz, r.f_zenith_hz
                );
            }
            match &result.aborted {
                Some(a) => {
                    eprintln!("run aborted at t = {:.4} s: {}", a.time, a.reason);
                    Ok(ExitCode::from(2))
                }
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::Summarize { csv } => {
            let tel = read_telemetry(&csv)?;
            let report = summarize(&tel)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::List => {
            for name in builtin_names() {
                let s = builtin(name)?.scenario;
                println!("{name:<18} {}", s.description);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario } => {
            let loaded = resolve(&scenario)?;
            for d in &loaded.defaults {
                println!("default {d}");
            }
            println!("{}: ok", loaded.scenario.name);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
