//! Scenario files: loading, validation and canonical serialization.
//!
//! Scenarios are TOML documents. Instructions are written as short strings:
//!
//! ```text
//! compute 3            # 3 cycles of internal work
//! read 0x100           # word read
//! write 0x8000 42      # word write (address, data)
//! trigger app_triggered
//! halt
//! ```
//!
//! See `scenarios/` in this crate for complete examples.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::Spanned;

use crate::block::{Instruction, TriggerSource};
use crate::bus::{Address, BusPort, Region};
use crate::fault::{FaultKind, FaultSpec, FaultWindow};
use crate::monitor::MoonConfig;

pub const MAX_BLOCKS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl ScenarioError {
    fn invalid(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ScenarioError::Validation { path: path.into(), message: message.to_string() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BootCheck {
    #[default]
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: String,
    pub program: Vec<Instruction>,
    /// Cycles from taking the interrupt to issuing the entry read.
    pub irq_latency: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduledTrigger {
    pub cycle: u64,
    pub source: TriggerSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Flags {
    /// Seeded random tie-break among same-cycle arrivals.
    pub random_selection: bool,
    /// Stochastic data-bit flips per block per safe fetch, in parts per million.
    pub flip_ppm: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MemoryImage {
    pub system_ram: Vec<(Address, u32)>,
    pub ls_ram: Vec<(Address, u32)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub moon: MoonConfig,
    pub boot_check: BootCheck,
    pub blocks: Vec<BlockSpec>,
    pub safe_program: Vec<Instruction>,
    pub triggers: Vec<ScheduledTrigger>,
    pub faults: Vec<FaultSpec>,
    pub max_cycles: u64,
    pub flags: Flags,
    pub memory: MemoryImage,
}

impl Scenario {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() {
            return Err(ScenarioError::invalid("name", "must not be empty"));
        }
        self.moon.mode().map_err(|e| ScenarioError::invalid("moon", e))?;
        if self.n_blocks() < self.moon.n_required {
            return Err(ScenarioError::invalid(
                "n_blocks",
                format!("{} blocks cannot supply n_required = {}", self.n_blocks(), self.moon.n_required),
            ));
        }
        if self.n_blocks() > MAX_BLOCKS {
            return Err(ScenarioError::invalid("n_blocks", format!("at most {MAX_BLOCKS} blocks are supported")));
        }
        if self.max_cycles < 1 {
            return Err(ScenarioError::invalid("max_cycles", "must be at least 1"));
        }
        for (i, block) in self.blocks.iter().enumerate() {
            for (j, instr) in block.program.iter().enumerate() {
                check_normal(instr).map_err(|m| ScenarioError::invalid(format!("blocks[{i}].program[{j}]"), m))?;
            }
        }
        if self.safe_program.is_empty() {
            return Err(ScenarioError::invalid("safe_program", "must contain at least one instruction"));
        }
        for (j, instr) in self.safe_program.iter().enumerate() {
            check_safe(instr).map_err(|m| ScenarioError::invalid(format!("safe_program[{j}]"), m))?;
        }
        for (i, t) in self.triggers.iter().enumerate() {
            if t.cycle < 1 {
                return Err(ScenarioError::invalid(format!("triggers[{i}].cycle"), "cycles start at 1"));
            }
        }
        for (i, f) in self.faults.iter().enumerate() {
            let path = |field: &str| format!("faults[{i}].{field}");
            if f.target >= self.n_blocks() {
                return Err(ScenarioError::invalid(path("target"), format!("no block {}", f.target)));
            }
            match &f.kind {
                FaultKind::BitFlipData { bit } | FaultKind::BitFlipAddress { bit } if *bit >= 32 => {
                    return Err(ScenarioError::invalid(path("bit"), "bit index must be < 32"));
                }
                FaultKind::StartJitter { delay } if *delay < 1 => {
                    return Err(ScenarioError::invalid(path("delay"), "delay must be at least 1"));
                }
                FaultKind::DivergentProgram { alternate } => {
                    for (j, instr) in alternate.iter().enumerate() {
                        check_safe(instr)
                            .map_err(|m| ScenarioError::invalid(format!("faults[{i}].alternate[{j}]"), m))?;
                    }
                }
                _ => {}
            }
            match f.window {
                FaultWindow::AtCycle(0) => {
                    return Err(ScenarioError::invalid(path("at_cycle"), "cycles start at 1"));
                }
                FaultWindow::AtSafeInstruction(k) if k >= self.safe_program.len() => {
                    return Err(ScenarioError::invalid(
                        path("at_safe_instruction"),
                        format!("safe program has {} instructions", self.safe_program.len()),
                    ));
                }
                _ => {}
            }
        }
        if self.flags.flip_ppm > 1_000_000 {
            return Err(ScenarioError::invalid("flags.flip_ppm", "must be at most 1000000"));
        }
        for (i, (a, _)) in self.memory.system_ram.iter().enumerate() {
            if Region::of(*a) != Some(Region::SystemRam) {
                return Err(ScenarioError::invalid(
                    format!("memory.system_ram[{i}]"),
                    format!("{a} is not system RAM"),
                ));
            }
        }
        for (i, (a, _)) in self.memory.ls_ram.iter().enumerate() {
            if Region::of(*a) != Some(Region::LsRam) {
                return Err(ScenarioError::invalid(format!("memory.ls_ram[{i}]"), format!("{a} is not ls RAM")));
            }
        }
        Ok(())
    }

    /// Canonical TOML text. `load_scenario` of the output yields `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(&ScenarioFile::<String>::from(self)).expect("scenario serializes")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

fn check_normal(instr: &Instruction) -> Result<(), String> {
    match instr {
        Instruction::Compute(0) => Err("compute duration must be at least 1".into()),
        Instruction::Read(a) | Instruction::Write(a, _) => match Region::of(*a) {
            Some(r) if BusPort::System.reaches(r) => Ok(()),
            Some(Region::LsRam | Region::IoDevice) => {
                Err(format!("normal code cannot reach {a}; it belongs to the safe region"))
            }
            Some(Region::LockstepSync) => Err(format!("{a} is reserved for the interrupt handler")),
            _ => Err(format!("{a} is not mapped")),
        },
        _ => Ok(()),
    }
}

fn check_safe(instr: &Instruction) -> Result<(), String> {
    match instr {
        Instruction::Compute(0) => Err("compute duration must be at least 1".into()),
        Instruction::Compute(_) => Ok(()),
        Instruction::Read(a) | Instruction::Write(a, _) => match Region::of(*a) {
            Some(r) if BusPort::Safe.reaches(r) => Ok(()),
            _ => Err(format!("safe code can only reach ls RAM and the I/O device, not {a}")),
        },
        Instruction::TriggerSp(_) | Instruction::Halt => Err(format!("`{instr}` is not allowed in safe code")),
    }
}

fn parse_number(tok: &str) -> Result<u32, String> {
    let parsed = match tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(&hex.replace('_', ""), 16),
        None => tok.replace('_', "").parse::<u32>(),
    };
    parsed.map_err(|_| format!("`{tok}` is not a 32-bit number"))
}

pub fn parse_instruction(text: &str) -> Result<Instruction, String> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let arity = |n: usize| {
        if toks.len() == n + 1 {
            Ok(())
        } else {
            Err(format!("`{}` takes {n} operand(s)", toks[0]))
        }
    };
    let Some(op) = toks.first() else {
        return Err("empty instruction".into());
    };
    match op.to_ascii_lowercase().as_str() {
        "compute" => {
            arity(1)?;
            Ok(Instruction::Compute(parse_number(toks[1])?))
        }
        "read" => {
            arity(1)?;
            Ok(Instruction::Read(Address(parse_number(toks[1])?)))
        }
        "write" => {
            arity(2)?;
            Ok(Instruction::Write(Address(parse_number(toks[1])?), parse_number(toks[2])?))
        }
        "trigger" => {
            arity(1)?;
            TriggerSource::parse(toks[1])
                .map(Instruction::TriggerSp)
                .ok_or_else(|| format!("unknown trigger source `{}`", toks[1]))
        }
        "halt" => {
            arity(0)?;
            Ok(Instruction::Halt)
        }
        other => Err(format!("unknown instruction `{other}`")),
    }
}

// ---- file representation ----------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
struct ScenarioFile<S> {
    name: String,
    #[serde(default)]
    seed: SeedRepr,
    n_blocks: usize,
    max_cycles: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boot_check: Option<S>,
    moon: MoonConfig,
    #[serde(default)]
    flags: FlagsFile,
    safe_program: Vec<S>,
    blocks: Vec<BlockFile<S>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    triggers: Vec<TriggerFile<S>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    faults: Vec<FaultFile<S>>,
    #[serde(default)]
    memory: MemoryFile,
}

/// TOML integers are signed; seeds beyond `i64::MAX` are written as strings.
#[derive(Serialize, Deserialize, Default)]
#[serde(untagged)]
enum SeedRepr {
    #[default]
    Zero,
    Int(u64),
    Str(String),
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FlagsFile {
    #[serde(default)]
    random_selection: bool,
    #[serde(default)]
    flip_ppm: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
struct BlockFile<S> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default)]
    irq_latency: u32,
    program: Vec<S>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
struct TriggerFile<S> {
    cycle: u64,
    source: S,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
struct FaultFile<S> {
    target: usize,
    kind: S,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bit: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delay: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alternate: Option<Vec<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    at_cycle: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    at_safe_instruction: Option<usize>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MemoryFile {
    #[serde(default)]
    system_ram: Vec<(u32, u32)>,
    #[serde(default)]
    ls_ram: Vec<(u32, u32)>,
}

impl From<&Scenario> for ScenarioFile<String> {
    fn from(s: &Scenario) -> Self {
        let prog = |p: &[Instruction]| p.iter().map(|i| i.to_string()).collect::<Vec<_>>();
        ScenarioFile {
            name: s.name.clone(),
            seed: if s.seed <= i64::MAX as u64 { SeedRepr::Int(s.seed) } else { SeedRepr::Str(s.seed.to_string()) },
            n_blocks: s.n_blocks(),
            max_cycles: s.max_cycles,
            boot_check: Some(match s.boot_check {
                BootCheck::Pass => "pass".into(),
                BootCheck::Fail => "fail".into(),
            }),
            moon: s.moon,
            flags: FlagsFile { random_selection: s.flags.random_selection, flip_ppm: s.flags.flip_ppm },
            safe_program: prog(&s.safe_program),
            blocks: s
                .blocks
                .iter()
                .map(|b| BlockFile {
                    name: Some(b.name.clone()),
                    irq_latency: b.irq_latency,
                    program: prog(&b.program),
                })
                .collect(),
            triggers: s
                .triggers
                .iter()
                .map(|t| TriggerFile { cycle: t.cycle, source: t.source.as_str().to_owned() })
                .collect(),
            faults: s
                .faults
                .iter()
                .map(|f| {
                    let mut out = FaultFile {
                        target: f.target,
                        kind: f.kind.name().to_owned(),
                        bit: None,
                        delay: None,
                        alternate: None,
                        at_cycle: None,
                        at_safe_instruction: None,
                    };
                    match &f.kind {
                        FaultKind::BitFlipData { bit } | FaultKind::BitFlipAddress { bit } => out.bit = Some(*bit),
                        FaultKind::StartJitter { delay } => out.delay = Some(*delay),
                        FaultKind::DivergentProgram { alternate } => out.alternate = Some(prog(alternate)),
                        FaultKind::StuckSilent | FaultKind::NoShow => {}
                    }
                    match f.window {
                        FaultWindow::AtCycle(c) => out.at_cycle = Some(c),
                        FaultWindow::AtSafeInstruction(k) => out.at_safe_instruction = Some(k),
                    }
                    out
                })
                .collect(),
            memory: MemoryFile {
                system_ram: s.memory.system_ram.iter().map(|(a, v)| (a.0, *v)).collect(),
                ls_ram: s.memory.ls_ram.iter().map(|(a, v)| (a.0, *v)).collect(),
            },
        }
    }
}

// ---- loading -----------------------------------------------------------------

pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    (line, column)
}

struct Loader<'a> {
    text: &'a str,
}

impl Loader<'_> {
    fn parse_error(&self, span: Option<Range<usize>>, message: impl fmt::Display) -> ScenarioError {
        let (line, column) = span.map_or((1, 1), |s| line_col(self.text, s.start));
        ScenarioError::Parse { line, column, message: message.to_string() }
    }

    fn spanned<T>(&self, s: &Spanned<String>, f: impl FnOnce(&str) -> Result<T, String>) -> Result<T, ScenarioError> {
        f(s.get_ref()).map_err(|m| self.parse_error(Some(s.span()), m))
    }

    fn program(&self, p: &[Spanned<String>]) -> Result<Vec<Instruction>, ScenarioError> {
        p.iter().map(|s| self.spanned(s, parse_instruction)).collect()
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let loader = Loader { text };
    if text.trim().is_empty() {
        return Err(loader.parse_error(None, "empty scenario"));
    }
    let file: ScenarioFile<Spanned<String>> =
        toml::from_str(text).map_err(|e| loader.parse_error(e.span(), e.message()))?;

    let seed = match file.seed {
        SeedRepr::Zero => 0,
        SeedRepr::Int(v) => v,
        SeedRepr::Str(s) => s.parse().map_err(|_| ScenarioError::invalid("seed", "not a 64-bit unsigned integer"))?,
    };
    let boot_check = match &file.boot_check {
        None => BootCheck::Pass,
        Some(b) => loader.spanned(b, |s| match s {
            "pass" => Ok(BootCheck::Pass),
            "fail" => Ok(BootCheck::Fail),
            other => Err(format!("boot_check must be `pass` or `fail`, not `{other}`")),
        })?,
    };

    let mut blocks = Vec::with_capacity(file.blocks.len());
    for (i, b) in file.blocks.iter().enumerate() {
        blocks.push(BlockSpec {
            name: b.name.clone().unwrap_or_else(|| format!("core_{}", i + 1)),
            program: loader.program(&b.program)?,
            irq_latency: b.irq_latency,
        });
    }
    let safe_program = loader.program(&file.safe_program)?;

    let mut triggers = Vec::with_capacity(file.triggers.len());
    for t in &file.triggers {
        let source = loader
            .spanned(&t.source, |s| TriggerSource::parse(s).ok_or_else(|| format!("unknown trigger source `{s}`")))?;
        triggers.push(ScheduledTrigger { cycle: t.cycle, source });
    }

    let mut faults = Vec::with_capacity(file.faults.len());
    for (i, f) in file.faults.iter().enumerate() {
        let path = |field: &str| format!("faults[{i}].{field}");
        let need_bit = || f.bit.ok_or_else(|| ScenarioError::invalid(path("bit"), "required for bit flips"));
        let kind =
            match f.kind.get_ref().as_str() {
                "bit_flip_data" => FaultKind::BitFlipData { bit: need_bit()? },
                "bit_flip_address" => FaultKind::BitFlipAddress { bit: need_bit()? },
                "divergent_program" => FaultKind::DivergentProgram {
                    alternate: loader.program(f.alternate.as_deref().ok_or_else(|| {
                        ScenarioError::invalid(path("alternate"), "required for divergent_program")
                    })?)?,
                },
                "stuck_silent" => FaultKind::StuckSilent,
                "no_show" => FaultKind::NoShow,
                "start_jitter" => FaultKind::StartJitter {
                    delay: f.delay.ok_or_else(|| ScenarioError::invalid(path("delay"), "required for start_jitter"))?,
                },
                other => return Err(loader.parse_error(Some(f.kind.span()), format!("unknown fault kind `{other}`"))),
            };
        let window = match (f.at_cycle, f.at_safe_instruction) {
            (Some(c), None) => FaultWindow::AtCycle(c),
            (None, Some(k)) => FaultWindow::AtSafeInstruction(k),
            _ => {
                return Err(ScenarioError::invalid(
                    path("at_cycle"),
                    "exactly one of at_cycle or at_safe_instruction is required",
                ))
            }
        };
        faults.push(FaultSpec { target: f.target, kind, window });
    }

    if file.n_blocks < file.moon.n_required {
        return Err(ScenarioError::invalid(
            "n_blocks",
            format!("{} blocks cannot supply n_required = {}", file.n_blocks, file.moon.n_required),
        ));
    }
    if file.blocks.len() != file.n_blocks {
        return Err(ScenarioError::invalid(
            "blocks",
            format!("n_blocks = {} but {} blocks are listed", file.n_blocks, file.blocks.len()),
        ));
    }

    let scenario = Scenario {
        name: file.name,
        seed,
        moon: file.moon,
        boot_check,
        blocks,
        safe_program,
        triggers,
        faults,
        max_cycles: file.max_cycles,
        flags: Flags { random_selection: file.flags.random_selection, flip_ppm: file.flags.flip_ppm },
        memory: MemoryImage {
            system_ram: file.memory.system_ram.into_iter().map(|(a, v)| (Address(a), v)).collect(),
            ls_ram: file.memory.ls_ram.into_iter().map(|(a, v)| (Address(a), v)).collect(),
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    load_scenario(&text)
}
