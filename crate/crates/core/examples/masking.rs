//! Faulty blocks are outvoted: the safe bus sees the same traffic and the
//! lockstep RAM ends up identical to a fault-free run.
//!
//!     cargo run --example masking

use std::path::Path;

use lockstep_sim::{load_scenario_file, run, EventKind};

fn main() {
    for name in ["masking_2oo3.scn", "masking_3oo5.scn"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
        let faulty = load_scenario_file(&path).expect("bundled scenario loads");
        let mut clean = faulty.clone();
        clean.faults.clear();

        let a = run(&faulty, faulty.max_cycles).expect("run");
        let b = run(&clean, clean.max_cycles).expect("run");
        println!("{} ({} faults, {})", faulty.name, faulty.faults.len(), faulty.moon.label());
        for e in a.trace.iter().filter(|e| matches!(e.kind, EventKind::FaultApplied | EventKind::Vote)) {
            let detail: Vec<String> = e.detail.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("  cycle {:>3} {:<14} {} {}", e.cycle, e.kind, e.entity, detail.join(" "));
        }
        let same = a.memory.ls_ram == b.memory.ls_ram && a.memory.io_device == b.memory.io_device;
        println!(
            "  masked cycles {}, final state {}, outputs {} the fault-free run",
            a.report.tallies.masked_cycles,
            a.report.final_state,
            if same { "match" } else { "DIFFER from" }
        );
    }
}
