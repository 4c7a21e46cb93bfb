//! When more blocks arrive in one cycle than lockstep needs, random
//! selection lets the seed pick who is turned away.
//!
//!     cargo run --example random_selection

use std::collections::BTreeMap;
use std::path::Path;

use lockstep_sim::{load_scenario_file, run, EventKind};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/random_selection.scn");
    let base = load_scenario_file(&path).expect("bundled scenario loads");
    let mut counts: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
    for seed in 0..200 {
        let mut s = base.clone();
        s.seed = seed;
        let out = run(&s, s.max_cycles).expect("run");
        let accepted: Vec<usize> =
            out.trace.iter().filter(|e| e.kind == EventKind::Accept).filter_map(|e| e.block()).collect();
        *counts.entry(accepted).or_default() += 1;
    }
    println!("accepted set   seeds (of 200)");
    for (set, n) in counts {
        println!("{:<14} {n}", format!("{set:?}"));
    }

    let mut fixed = base.clone();
    fixed.flags.random_selection = false;
    let out = run(&fixed, fixed.max_cycles).expect("run");
    let accepted: Vec<usize> =
        out.trace.iter().filter(|e| e.kind == EventKind::Accept).filter_map(|e| e.block()).collect();
    println!("without random selection: {accepted:?}");
}
