#![allow(dead_code)]

use std::path::PathBuf;

use lockstep_sim::block::TriggerSource;
use lockstep_sim::scenario::{BlockSpec, BootCheck, Flags, MemoryImage, ScheduledTrigger};
use lockstep_sim::{load_scenario_file, Address, EventKind, Instruction, MoonConfig, Scenario, TraceEvent};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn bundled(name: &str) -> Scenario {
    load_scenario_file(&scenario_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every bundled scenario that is expected to load.
pub fn all_bundled() -> Vec<(String, Scenario)> {
    let mut names: Vec<String> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".scn") && n != "broken.scn")
        .collect();
    names.sort();
    names.into_iter().map(|n| (n.clone(), bundled(&n))).collect()
}

/// `n_blocks` blocks that are at an instruction boundary every cycle, one
/// external trigger at `trigger`.
pub fn uniform(n_blocks: usize, n: usize, m: usize, t_gather: u64, t_exec: u64, trigger: u64) -> Scenario {
    Scenario {
        name: format!("uniform_{n_blocks}_{m}oo{n}"),
        seed: 7,
        moon: MoonConfig::new(n, m, t_gather, t_exec).unwrap(),
        boot_check: BootCheck::Pass,
        blocks: (0..n_blocks)
            .map(|i| BlockSpec {
                name: format!("core_{}", i + 1),
                program: vec![Instruction::Compute(1); 6].into_iter().chain([Instruction::Halt]).collect(),
                irq_latency: 0,
            })
            .collect(),
        safe_program: vec![
            Instruction::Read(Address(0x8000)),
            Instruction::Write(Address(0x8001), 0x1234),
            Instruction::Compute(2),
            Instruction::Write(Address(0x8002), 0xbeef),
            Instruction::Write(Address(0xc000), 9),
        ],
        triggers: vec![ScheduledTrigger { cycle: trigger, source: TriggerSource::ExternalInScope }],
        faults: vec![],
        max_cycles: 500,
        flags: Flags::default(),
        memory: MemoryImage { system_ram: vec![], ls_ram: vec![(Address(0x8000), 3)] },
    }
}

pub fn of_kind(trace: &[TraceEvent], kind: EventKind) -> Vec<&TraceEvent> {
    trace.iter().filter(|e| e.kind == kind).collect()
}

pub type Words = Vec<(Address, u32)>;

/// Plain sequential interpretation of a safe program against an initial
/// ls_ram image: the final ls_ram contents and the I/O write log.
pub fn interpret_safe(program: &[Instruction], ls_ram: &[(Address, u32)]) -> (Words, Words) {
    let mut ram = std::collections::BTreeMap::new();
    for &(a, v) in ls_ram {
        ram.insert(a.0, v);
    }
    let mut io = Vec::new();
    for i in program {
        if let Instruction::Write(a, d) = i {
            if (0x8000..0xc000).contains(&a.0) {
                ram.insert(a.0, *d);
            } else {
                io.push((*a, *d));
            }
        }
    }
    (ram.into_iter().filter(|&(_, v)| v != 0).map(|(a, v)| (Address(a), v)).collect(), io)
}

/// Cycles a safe instruction occupies.
pub fn cost(i: &Instruction) -> u64 {
    match i {
        Instruction::Compute(n) => *n as u64,
        _ => 1,
    }
}
