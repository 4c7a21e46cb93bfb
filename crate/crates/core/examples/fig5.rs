//! The two-of-three-available race: core_1 asks for safe processing but is
//! slow to answer its own interrupt, so core_2 and core_n run the safe code
//! in 2oo2 lockstep while core_1 is turned away.
//!
//!     cargo run --example fig5

use std::path::Path;

use lockstep_sim::{load_scenario_file, run, Entity, EventKind};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/fig5.scn");
    let scenario = load_scenario_file(&path).expect("bundled scenario loads");
    let names: Vec<&str> = scenario.blocks.iter().map(|b| b.name.as_str()).collect();
    let out = run(&scenario, scenario.max_cycles).expect("run");

    for e in &out.trace {
        let who = match e.entity {
            Entity::Block(b) => names[b],
            Entity::Monitor => "monitor",
            Entity::System => "system",
        };
        let detail: Vec<String> = e.detail.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{:>4}  {:<8} {:<18} {}", e.cycle, who, e.kind, detail.join(" "));
    }

    let rejected = out.trace.iter().filter(|e| e.kind == EventKind::Reject).count();
    println!();
    println!(
        "final state {}, {} session(s), {rejected} rejection(s)",
        out.report.final_state,
        out.report.sessions.len()
    );
}
