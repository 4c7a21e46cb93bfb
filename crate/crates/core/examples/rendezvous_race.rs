//! Every combination of interrupt latencies for four blocks gathered at
//! 2oo3: who gets in, who is turned away, and when the timeout fires.
//!
//!     cargo run --example rendezvous_race

use std::collections::BTreeMap;
use std::path::Path;

use lockstep_sim::scenario::load_scenario_file;
use lockstep_sim::sweep::{arrival_points, load_sweep, run_sweep};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let spec = load_sweep(&dir.join("rendezvous.sweep.toml")).expect("sweep spec loads");
    let summary = run_sweep(&spec).expect("sweep runs");

    let mut by_outcome: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &summary.results {
        *by_outcome.entry(if r.note == "timeout" { "gather timeout" } else { "session completed" }).or_default() += 1;
    }
    println!("{} arrival assignments, {} passed", summary.results.len(), summary.passed());
    for (k, v) in by_outcome {
        println!("  {k}: {v}");
    }

    // A few individual points.
    let base = load_scenario_file(&dir.join("rendezvous.scn")).expect("scenario loads");
    let points = arrival_points(&base, 4, true);
    for r in summary.results.iter().step_by(97) {
        println!("  {:<18} {}", points[r.index].label, r.note);
    }
}
