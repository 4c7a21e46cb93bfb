//! Blocks can drive the monitor through its control registers: one block
//! narrows the configuration to 2oo2 and then requests a session itself.
//!
//!     cargo run --example control_bus

use lockstep_sim::bus::{MONITOR_CTRL_MOON, MONITOR_CTRL_REQUEST};
use lockstep_sim::scenario::{load_scenario, BlockSpec};
use lockstep_sim::{run, Instruction};

fn main() {
    let mut s = load_scenario(include_str!("../scenarios/rendezvous.scn")).expect("scenario loads");
    s.triggers.clear();
    s.blocks[0] = BlockSpec {
        name: "supervisor".into(),
        program: vec![
            Instruction::Write(MONITOR_CTRL_MOON, (2 << 8) | 2),
            Instruction::Write(MONITOR_CTRL_REQUEST, 1),
            Instruction::Compute(4),
            Instruction::Halt,
        ],
        irq_latency: 2,
    };
    let out = run(&s, s.max_cycles).expect("run");
    for e in &out.trace {
        let detail: Vec<String> = e.detail.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{:>4} {:<8} {:<14} {}", e.cycle, e.entity.to_string(), e.kind, detail.join(" "));
    }
    println!("\nconfiguration at the end: {}", out.report.moon);
}
