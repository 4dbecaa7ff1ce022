use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tenderbft_sim::fuzz::fuzz;
use tenderbft_sim::{check_some, replay, run_scenario, Checker, ReplayOutcome, Scenario, Trace};

/// Run, check, replay and fuzz consensus scenarios.
#[derive(Parser, Debug)]
#[command(name = "tenderbft", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Trace file to write. Defaults to `<out>/<scenario>-<seed>.trace`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
        /// Also check the trace with these checkers.
        #[arg(long, value_delimiter = ',', value_parser = parse_checker)]
        checkers: Option<Vec<Checker>>,
    },
    /// Check a recorded trace against its scenario.
    Check {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated subset; all checkers by default.
        #[arg(long, value_delimiter = ',', value_parser = parse_checker)]
        checkers: Option<Vec<Checker>>,
    },
    /// Re-run a scenario and compare with a recorded trace.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run a scenario under many seeds and aggregate the verdicts.
    Fuzz {
        #[arg(long)]
        scenario: PathBuf,
        /// `N` (seeds 0..N), `A..B`, or a comma-separated list.
        #[arg(long, default_value = "100", value_parser = parse_seeds)]
        seeds: SeedList,
        #[arg(long, value_delimiter = ',', value_parser = parse_checker)]
        checkers: Option<Vec<Checker>>,
        /// Write traces of failing seeds to the output directory.
        #[arg(long)]
        keep_failures: bool,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Args, Debug)]
struct OutDir {
    /// Output directory.
    #[arg(long = "out", env = "TENDERBFT_OUT_DIR", default_value = ".")]
    dir: PathBuf,
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn parse_checker(s: &str) -> Result<Checker, String> {
    Checker::parse(s).ok_or_else(|| {
        let names: Vec<_> = Checker::ALL.iter().map(|c| c.name()).collect();
        format!("unknown checker `{s}` (expected one of {})", names.join(", "))
    })
}

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    // scenario files store seeds as TOML integers
    let num = |x: &str| {
        x.trim()
            .parse::<i64>()
            .ok()
            .and_then(|n| u64::try_from(n).ok())
            .ok_or_else(|| format!("bad seed `{x}` (expected 0..={})", i64::MAX))
    };
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a >= b {
            return Err(format!("empty seed range {s}"));
        }
        (a..b).collect()
    } else if s.contains(',') {
        s.split(',').map(num).collect::<Result<_, _>>()?
    } else {
        (0..num(s)?).collect()
    };
    Ok(SeedList(seeds))
}

fn load(path: &Path) -> Result<Scenario, String> {
    Scenario::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_trace(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn trace_name(scenario_path: &Path, seed: u64) -> String {
    let stem = scenario_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    format!("{stem}-{seed}.trace")
}

/// Prints verdicts and returns whether any failed.
fn report(checkers: &[Checker], trace: &Trace, scenario: &Scenario) -> bool {
    let mut failed = false;
    for (c, v) in check_some(checkers, trace, scenario) {
        println!("{:<16} {v}", c.name());
        failed |= v.is_fail();
    }
    failed
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run {
            scenario: path,
            trace,
            out,
            checkers,
        } => {
            let scenario = load(&path)?;
            let result = run_scenario(&scenario).map_err(|e| e.to_string())?;
            let dest = trace.unwrap_or_else(|| out.dir.join(trace_name(&path, scenario.seed)));
            write(&dest, &result.trace.to_text())?;
            println!(
                "{}: {} records, status {}",
                dest.display(),
                result.trace.records.len(),
                result.status.as_str()
            );
            let mut failed = result.status.is_liveness_failure();
            if let Some(cs) = checkers {
                failed |= report(&cs, &result.trace, &scenario);
            }
            Ok(!failed)
        }
        Command::Check {
            scenario,
            trace,
            checkers,
        } => {
            let scenario = load(&scenario)?;
            let text = read_trace(&trace)?;
            let parsed = Trace::parse(&text).map_err(|e| format!("{}: {e}", trace.display()))?;
            let cs = checkers.unwrap_or_else(|| Checker::ALL.to_vec());
            Ok(!report(&cs, &parsed, &scenario))
        }
        Command::Replay { scenario, trace } => {
            let scenario = load(&scenario)?;
            let text = read_trace(&trace)?;
            match replay(&scenario, &text).map_err(|e| e.to_string())? {
                ReplayOutcome::Identical { records } => {
                    println!("identical: {records} records");
                    Ok(true)
                }
                ReplayOutcome::Diverged {
                    line,
                    recorded,
                    replayed,
                } => {
                    println!("diverged at line {line}");
                    println!("  recorded: {}", recorded.as_deref().unwrap_or("<end of trace>"));
                    println!("  replayed: {}", replayed.as_deref().unwrap_or("<end of trace>"));
                    Ok(false)
                }
            }
        }
        Command::Fuzz {
            scenario: path,
            seeds,
            checkers,
            keep_failures,
            out,
        } => {
            let scenario = load(&path)?;
            let cs = checkers.unwrap_or_else(|| Checker::ALL.to_vec());
            let cases = fuzz(&scenario, &seeds.0, &cs);
            let mut any_failed = false;
            for (i, c) in cs.iter().enumerate() {
                let (mut pass, mut na, mut fail) = (0, 0, Vec::new());
                for case in &cases {
                    match &case.verdicts[i].1 {
                        v if v.is_fail() => fail.push(case.seed),
                        v if v.is_pass() => pass += 1,
                        _ => na += 1,
                    }
                }
                println!(
                    "{:<16} pass {pass}  n/a {na}  fail {}{}",
                    c.name(),
                    fail.len(),
                    if fail.is_empty() {
                        String::new()
                    } else {
                        format!("  seeds {fail:?}")
                    }
                );
                any_failed |= !fail.is_empty();
            }
            let stalled = cases.iter().filter(|c| c.status.is_liveness_failure()).count();
            println!("{} runs, {stalled} hit the liveness cap", cases.len());
            if keep_failures {
                for case in cases.iter().filter(|c| c.failed()) {
                    let mut s = scenario.clone();
                    s.seed = case.seed;
                    let trace = run_scenario(&s).map_err(|e| e.to_string())?.trace;
                    let dest = out.dir.join(trace_name(&path, case.seed));
                    write(&dest, &trace.to_text())?;
                    println!("wrote {}", dest.display());
                }
            }
            Ok(!any_failed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
