//! Gathering never completes when too few blocks are willing; the observer
//! puts the system in the safe state one cycle after `t_gather` runs out.
//!
//!     cargo run --example timeout

use std::path::Path;

use lockstep_sim::{load_scenario_file, run, EventKind};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/timeout.scn");
    let base = load_scenario_file(&path).expect("bundled scenario loads");
    println!("{:>8} {:>10} {:>8}", "t_gather", "requested", "error");
    for t_gather in [1, 5, 10, 25] {
        let mut s = base.clone();
        s.moon.t_gather = t_gather;
        let out = run(&s, s.max_cycles).expect("run");
        let requested = out.report.sessions[0].requested_at;
        let err = out.trace.iter().find(|e| e.kind == EventKind::AvailabilityError).map(|e| e.cycle);
        println!(
            "{t_gather:>8} {requested:>10} {:>8}  -> {} (exit {})",
            err.unwrap_or(0),
            out.report.final_state,
            out.report.exit_code
        );
    }
}
