//! Parameter sweeps over arrival timings and fault placements.
//!
//! Points run in parallel; results are reported in point-index order so the
//! output does not depend on scheduling.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::block::Instruction;
use crate::fault::{FaultKind, FaultSpec, FaultWindow};
use crate::scenario::{line_col, load_scenario_file, Scenario, ScenarioError};
use crate::system::{run_with, RunOutcome, SimError};
use crate::trace::EventKind;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SweepMode {
    /// Every assignment of irq latencies `0..window` to the blocks, plus
    /// "never answers" when `include_no_show` is set.
    Arrivals { window: u32, include_no_show: bool },
    /// Every placement of up to `max_faults` faults on distinct blocks.
    Faults { max_faults: usize },
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub scenario: Scenario,
    pub mode: SweepMode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    scenario: PathBuf,
    mode: String,
    #[serde(default = "default_window")]
    window: u32,
    #[serde(default)]
    include_no_show: bool,
    max_faults: Option<usize>,
}

fn default_window() -> u32 {
    4
}

pub fn load_sweep(path: &Path) -> Result<SweepSpec, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let file: SweepFile = toml::from_str(&text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(&text, s.start));
        ScenarioError::Parse { line, column, message: e.message().to_owned() }
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = load_scenario_file(&base.join(&file.scenario))?;
    let mode = match file.mode.as_str() {
        "arrivals" => {
            if file.window < 1 {
                return Err(ScenarioError::Validation { path: "window".into(), message: "must be at least 1".into() });
            }
            SweepMode::Arrivals { window: file.window, include_no_show: file.include_no_show }
        }
        "faults" => SweepMode::Faults { max_faults: file.max_faults.unwrap_or(scenario.moon.tolerated_faults()) },
        other => {
            return Err(ScenarioError::Validation {
                path: "mode".into(),
                message: format!("expected `arrivals` or `faults`, not `{other}`"),
            })
        }
    };
    Ok(SweepSpec { scenario, mode })
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub label: String,
    pub scenario: Scenario,
    /// Number of faults placed on blocks (fault sweeps only).
    pub faulty_blocks: usize,
}

/// Irq latency used for "this block never answers".
pub const NO_SHOW: Option<u32> = None;

pub fn arrival_points(base: &Scenario, window: u32, include_no_show: bool) -> Vec<SweepPoint> {
    let mut options: Vec<Option<u32>> = (0..window).map(Some).collect();
    if include_no_show {
        options.push(NO_SHOW);
    }
    let n = base.n_blocks();
    let total = options.len().pow(n as u32);
    (0..total)
        .map(|index| {
            let mut rest = index;
            let mut s = base.clone();
            s.faults.retain(|f| f.kind != FaultKind::NoShow);
            let mut label = Vec::with_capacity(n);
            for b in 0..n {
                let choice = options[rest % options.len()];
                rest /= options.len();
                match choice {
                    Some(lat) => {
                        s.blocks[b].irq_latency = lat;
                        label.push(lat.to_string());
                    }
                    None => {
                        s.faults.push(FaultSpec {
                            target: b,
                            kind: FaultKind::NoShow,
                            window: FaultWindow::AtCycle(1),
                        });
                        label.push("-".into());
                    }
                }
            }
            SweepPoint { index, label: format!("arrivals[{}]", label.join(",")), scenario: s, faulty_blocks: 0 }
        })
        .collect()
}

/// Alternate safe stream used for divergent-program faults: the remaining
/// instructions with every write payload inverted, followed by one extra
/// cycle of work so the faulty block also leaves late.
pub fn divergent_tail(safe: &[Instruction], from: usize) -> Vec<Instruction> {
    let mut alt: Vec<Instruction> = safe[from.min(safe.len())..]
        .iter()
        .map(|i| match i {
            Instruction::Write(a, d) => Instruction::Write(*a, !d),
            other => other.clone(),
        })
        .collect();
    alt.push(Instruction::Compute(1));
    alt
}

/// Every single-fault placement on `target`: each output fault at each safe
/// instruction, plus the entry-time faults.
pub fn fault_catalog(base: &Scenario, target: usize) -> Vec<FaultSpec> {
    let mut out = Vec::new();
    for k in 0..base.safe_program.len() {
        let window = FaultWindow::AtSafeInstruction(k);
        for kind in [
            FaultKind::BitFlipData { bit: 0 },
            FaultKind::BitFlipData { bit: 31 },
            FaultKind::BitFlipAddress { bit: 0 },
            FaultKind::DivergentProgram { alternate: divergent_tail(&base.safe_program, k) },
            FaultKind::StuckSilent,
        ] {
            out.push(FaultSpec { target, kind, window });
        }
    }
    out.push(FaultSpec { target, kind: FaultKind::NoShow, window: FaultWindow::AtCycle(1) });
    out.push(FaultSpec { target, kind: FaultKind::StartJitter { delay: 2 }, window: FaultWindow::AtCycle(1) });
    out
}

fn describe(f: &FaultSpec) -> String {
    let at = match f.window {
        FaultWindow::AtCycle(c) => format!("cycle {c}"),
        FaultWindow::AtSafeInstruction(k) => format!("instr {k}"),
    };
    let kind = match &f.kind {
        FaultKind::BitFlipData { bit } | FaultKind::BitFlipAddress { bit } => format!("{}({bit})", f.kind.name()),
        FaultKind::StartJitter { delay } => format!("{}({delay})", f.kind.name()),
        other => other.name().to_owned(),
    };
    format!("{kind}@block{}:{at}", f.target)
}

/// All placements of `1..=max_faults` faults on pairwise distinct blocks.
pub fn fault_points(base: &Scenario, max_faults: usize) -> Vec<SweepPoint> {
    let catalogs: Vec<Vec<FaultSpec>> = (0..base.n_blocks()).map(|b| fault_catalog(base, b)).collect();
    let mut combos: Vec<Vec<FaultSpec>> = Vec::new();
    fn extend(
        catalogs: &[Vec<FaultSpec>],
        from_block: usize,
        left: usize,
        acc: &mut Vec<FaultSpec>,
        out: &mut Vec<Vec<FaultSpec>>,
    ) {
        if !acc.is_empty() {
            out.push(acc.clone());
        }
        if left == 0 {
            return;
        }
        for b in from_block..catalogs.len() {
            for f in &catalogs[b] {
                acc.push(f.clone());
                extend(catalogs, b + 1, left - 1, acc, out);
                acc.pop();
            }
        }
    }
    extend(&catalogs, 0, max_faults, &mut Vec::new(), &mut combos);
    combos
        .into_iter()
        .enumerate()
        .map(|(index, faults)| {
            let mut s = base.clone();
            let label = faults.iter().map(describe).collect::<Vec<_>>().join(" + ");
            let faulty_blocks = faults.len();
            s.faults.extend(faults);
            SweepPoint { index, label, scenario: s, faulty_blocks }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointResult {
    pub index: usize,
    pub label: String,
    pub passed: bool,
    pub exit_code: i32,
    pub note: String,
}

#[derive(Clone, Debug, Default)]
pub struct SweepSummary {
    pub results: Vec<PointResult>,
}

impl SweepSummary {
    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.passed).count()
    }

    pub fn failed(&self) -> usize {
        self.results.len() - self.passed()
    }
}

/// Entry-read bookkeeping extracted from one session of a trace.
fn check_rendezvous(point: &SweepPoint, out: &RunOutcome) -> Result<String, String> {
    let n = point.scenario.moon.n_required;
    let accepts: Vec<_> = out.trace.iter().filter(|e| e.kind == EventKind::Accept).collect();
    let Some(lockstep_cycle) = accepts.first().map(|e| e.cycle) else {
        return if out.report.final_state == "safe_state" {
            Ok("timeout".into())
        } else {
            Err("no lockstep and no safe state".into())
        };
    };
    if accepts.len() != n {
        return Err(format!("{} accepts, expected {n}", accepts.len()));
    }
    let mut arrivals: Vec<(u64, usize)> = out
        .trace
        .iter()
        .filter(|e| e.kind == EventKind::SyncRead && e.cycle <= lockstep_cycle)
        .filter_map(|e| e.block().map(|b| (e.cycle, b)))
        .collect();
    arrivals.sort_unstable();
    if arrivals.len() < n {
        return Err(format!("{n} accepts but only {} entry reads", arrivals.len()));
    }
    let got: BTreeSet<usize> = accepts.iter().filter_map(|e| e.block()).collect();
    let cutoff = arrivals[n - 1].0;
    let earlier: BTreeSet<usize> = arrivals.iter().filter(|a| a.0 < cutoff).map(|a| a.1).collect();
    let tied: BTreeSet<usize> = arrivals.iter().filter(|a| a.0 == cutoff).map(|a| a.1).collect();
    let fits = if point.scenario.flags.random_selection {
        got.is_superset(&earlier) && got.iter().all(|b| earlier.contains(b) || tied.contains(b))
    } else {
        got == arrivals.iter().take(n).map(|&(_, b)| b).collect()
    };
    if !fits {
        return Err(format!("accepted {got:?} from arrivals {arrivals:?}"));
    }
    let reads = out.trace.iter().filter(|e| e.kind == EventKind::SyncRead).count();
    let rejects = out.trace.iter().filter(|e| e.kind == EventKind::Reject).count();
    if reads != n + rejects {
        return Err(format!("{reads} entry reads but {n} accepts and {rejects} rejects"));
    }
    if out.report.end_reason == crate::system::EndReason::MaxCycles {
        return Err("did not finish within max_cycles".into());
    }
    Ok(format!("accepted {got:?}"))
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepSummary, SimError> {
    let max_cycles = spec.scenario.max_cycles;
    match spec.mode {
        SweepMode::Arrivals { window, include_no_show } => {
            let points = arrival_points(&spec.scenario, window, include_no_show);
            let results = points
                .par_iter()
                .map(|p| {
                    let out = run_with(&p.scenario, max_cycles, true)?;
                    let (passed, note) = match check_rendezvous(p, &out) {
                        Ok(note) => (true, note),
                        Err(note) => (false, note),
                    };
                    Ok(PointResult {
                        index: p.index,
                        label: p.label.clone(),
                        passed,
                        exit_code: out.report.exit_code,
                        note,
                    })
                })
                .collect::<Result<Vec<_>, SimError>>()?;
            Ok(SweepSummary { results })
        }
        SweepMode::Faults { max_faults } => {
            let mut clean = spec.scenario.clone();
            clean.faults.clear();
            clean.flags.flip_ppm = 0;
            let reference = run_with(&clean, max_cycles, false)?;
            let tolerated = clean.moon.tolerated_faults();
            let points = fault_points(&clean, max_faults);
            let results = points
                .par_iter()
                .map(|p| {
                    let out = run_with(&p.scenario, max_cycles, false)?;
                    let same = out.memory.ls_ram == reference.memory.ls_ram
                        && out.memory.io_device == reference.memory.io_device;
                    let t = &out.report.tallies;
                    let (passed, note) = if p.faulty_blocks <= tolerated {
                        (same, if same { "masked".to_owned() } else { "output differs from reference".to_owned() })
                    } else if t.no_majority_cycles > 0 || t.availability_errors > 0 {
                        (true, "detected".to_owned())
                    } else {
                        (true, if same { "masked".to_owned() } else { "undetected".to_owned() })
                    };
                    Ok(PointResult {
                        index: p.index,
                        label: p.label.clone(),
                        passed,
                        exit_code: out.report.exit_code,
                        note,
                    })
                })
                .collect::<Result<Vec<_>, SimError>>()?;
            Ok(SweepSummary { results })
        }
    }
}
