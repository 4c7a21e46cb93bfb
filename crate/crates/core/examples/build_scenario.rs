//! Scenarios can be built in code and written out in the file format.
//!
//!     cargo run --example build_scenario > my.scn

use lockstep_sim::block::TriggerSource;
use lockstep_sim::scenario::{BlockSpec, BootCheck, Flags, MemoryImage, ScheduledTrigger};
use lockstep_sim::{Address, FaultKind, FaultSpec, FaultWindow, Instruction, MoonConfig, Scenario};

fn main() {
    let blocks = (0..5)
        .map(|i| BlockSpec {
            name: format!("cpu{i}"),
            program: vec![Instruction::Compute(3), Instruction::Write(Address(0x40 + i), i), Instruction::Halt],
            irq_latency: i % 2,
        })
        .collect();
    let scenario = Scenario {
        name: "built".into(),
        seed: 99,
        moon: MoonConfig::new(5, 3, 20, 50).expect("valid MooN"),
        boot_check: BootCheck::Pass,
        blocks,
        safe_program: vec![Instruction::Read(Address(0x8000)), Instruction::Write(Address(0xc000), 1)],
        triggers: vec![ScheduledTrigger { cycle: 2, source: TriggerSource::ExternalOutOfScope }],
        faults: vec![FaultSpec { target: 4, kind: FaultKind::StuckSilent, window: FaultWindow::AtSafeInstruction(1) }],
        max_cycles: 300,
        flags: Flags::default(),
        memory: MemoryImage::default(),
    };
    scenario.validate().expect("scenario is valid");
    print!("{}", scenario.to_toml());
    eprintln!("hash {}", scenario.hash());
}
