//! Command-line entry point: runs or validates scenario files.
//!
//! Usage:
//!   tsymlab run <file> [--out <dir>] [--seed <int>] [--quiet]
//!   tsymlab validate <file>
//!
//! Exit codes: 0 ok, 2 validation failure, 3 runtime failure, 4 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use tsymlab::scenario::{parse_scenario, print_scenario, run_scenario, Scenario};

struct Args {
    command: String,
    file: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
}

const USAGE: &str = "usage: tsymlab run <file> [--out <dir>] [--seed <int>] [--quiet]
       tsymlab validate <file>";

fn parse_args(argv: &[String]) -> Result<Args, String> {
    let mut it = argv.iter();
    let command = it.next().ok_or(USAGE)?.clone();
    if command != "run" && command != "validate" {
        return Err(format!("unknown command `{command}`\n{USAGE}"));
    }
    let mut file: Option<PathBuf> = None;
    let mut out = None;
    let mut seed = None;
    let mut quiet = false;
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--out" => {
                let v = it.next().ok_or("--out requires a directory")?;
                out = Some(PathBuf::from(v));
            }
            "--seed" => {
                let v = it.next().ok_or("--seed requires an integer")?;
                seed = Some(
                    v.parse::<u64>()
                        .map_err(|_| format!("--seed: expected a nonnegative integer, got `{v}`"))?,
                );
            }
            "--quiet" => quiet = true,
            other if file.is_none() && !other.starts_with('-') => {
                file = Some(PathBuf::from(other));
            }
            other => return Err(format!("unexpected argument `{other}`\n{USAGE}")),
        }
    }
    let file = file.ok_or_else(|| format!("missing scenario file\n{USAGE}"))?;
    Ok(Args { command, file, out, seed, quiet })
}

fn load(args: &Args) -> Result<Scenario, ExitCode> {
    let text = std::fs::read_to_string(&args.file).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", args.file.display());
        ExitCode::from(4)
    })?;
    let mut scenario = parse_scenario(&text).map_err(|issues| {
        for i in &issues {
            eprintln!("error: {}: {i}", args.file.display());
        }
        ExitCode::from(2)
    })?;
    if let Some(out) = &args.out {
        scenario.out = out.clone();
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match parse_args(&argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let scenario = match load(&args) {
        Ok(s) => s,
        Err(code) => return code,
    };

    if args.command == "validate" {
        if !args.quiet {
            print!("{}", print_scenario(&scenario));
        }
        return ExitCode::SUCCESS;
    }

    match run_scenario(&scenario) {
        Ok(report) => {
            if !args.quiet {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report.summary).expect("serializable summary")
                );
                for f in &report.files {
                    eprintln!("wrote {}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
