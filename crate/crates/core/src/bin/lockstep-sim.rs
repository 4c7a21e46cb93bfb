use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lockstep_sim::audit;
use lockstep_sim::scenario::load_scenario_file;
use lockstep_sim::sweep::{load_sweep, run_sweep, SweepMode};
use lockstep_sim::{emit_trace, run, SimError, TraceFormat};

const EXIT_SAFE_STATE: u8 = 2;
const EXIT_SCENARIO: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "lockstep-sim", version, about = "Simulate on-demand MooN dynamic lockstep")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report (stdout unless --report).
    Run {
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario cycle budget.
        #[arg(long)]
        max_cycles: Option<u64>,
        /// Write the event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Trace format: jsonl or csv.
        #[arg(long, default_value = "jsonl")]
        format: TraceFormat,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
    /// Run every point of a sweep spec and report failing points.
    Sweep {
        spec: PathBuf,
        /// Print every point, not just failures.
        #[arg(long)]
        all: bool,
    },
}

fn write_to(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}

fn sim_error(e: SimError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        SimError::ScenarioInvalid(_) => ExitCode::from(EXIT_SCENARIO),
        _ => ExitCode::from(EXIT_INTERNAL),
    }
}

fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    max_cycles: Option<u64>,
    trace: Option<&Path>,
    format: TraceFormat,
    report: Option<&Path>,
) -> ExitCode {
    let mut scenario = match load_scenario_file(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(EXIT_SCENARIO);
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let budget = max_cycles.unwrap_or(scenario.max_cycles);
    let out = match run(&scenario, budget) {
        Ok(out) => out,
        Err(e) => return sim_error(e),
    };
    if let Some(p) = trace {
        if let Err(e) = write_to(p, |w| emit_trace(&out.trace, format, w)) {
            eprintln!("error: writing trace to {}: {e}", p.display());
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    let json = out.report.to_json();
    let written = match report {
        Some(p) => write_to(p, |w| w.write_all(json.as_bytes())),
        None => io::stdout().write_all(json.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: writing report: {e}");
        return ExitCode::from(EXIT_INTERNAL);
    }
    if let Err(e) = audit::check_all(&out.trace) {
        eprintln!("error: trace audit failed: {e}");
        return ExitCode::from(EXIT_INTERNAL);
    }
    let r = &out.report;
    eprintln!(
        "{}: {} after {} cycles ({} sessions, {} accepted, {} rejected)",
        r.scenario, r.final_state, r.cycles, r.tallies.sessions_started, r.tallies.accepted, r.tallies.rejected
    );
    if r.exit_code == i32::from(EXIT_SAFE_STATE) {
        ExitCode::from(EXIT_SAFE_STATE)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_validate(path: &Path) -> ExitCode {
    match load_scenario_file(path) {
        Ok(s) => {
            println!("{}: ok ({} blocks, {}, hash {})", s.name, s.n_blocks(), s.moon.label(), s.hash());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            ExitCode::from(EXIT_SCENARIO)
        }
    }
}

fn cmd_sweep(path: &Path, all: bool) -> ExitCode {
    let spec = match load_sweep(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(EXIT_SCENARIO);
        }
    };
    let summary = match run_sweep(&spec) {
        Ok(s) => s,
        Err(e) => return sim_error(e),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for r in &summary.results {
        if all || !r.passed {
            let verdict = if r.passed { "pass" } else { "FAIL" };
            let _ = writeln!(out, "{:>6} {verdict} exit={} {}: {}", r.index, r.exit_code, r.label, r.note);
        }
    }
    let mode = match spec.mode {
        SweepMode::Arrivals { .. } => "arrivals",
        SweepMode::Faults { .. } => "faults",
    };
    let _ = writeln!(
        out,
        "{} sweep of {}: {} points, {} passed, {} failed",
        mode,
        spec.scenario.name,
        summary.results.len(),
        summary.passed(),
        summary.failed()
    );
    if summary.failed() == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INTERNAL)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_SCENARIO) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run { scenario, seed, max_cycles, trace, format, report } => {
            cmd_run(&scenario, seed, max_cycles, trace.as_deref(), format, report.as_deref())
        }
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Sweep { spec, all } => cmd_sweep(&spec, all),
    }
}
