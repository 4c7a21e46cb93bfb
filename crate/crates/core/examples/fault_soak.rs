//! Random single-bit upsets on the safe bus over many seeds. Most sessions
//! are masked. When two blocks are hit in the same cycle the system fails
//! safe, unless both took the identical flip and outvote the healthy one.
//!
//!     cargo run --release --example fault_soak [ppm] [runs]

use std::path::Path;

use lockstep_sim::{load_scenario_file, run};

fn main() {
    let mut args = std::env::args().skip(1);
    let ppm: u32 = args.next().map_or(150_000, |a| a.parse().expect("ppm is a number"));
    let runs: u64 = args.next().map_or(500, |a| a.parse().expect("runs is a number"));

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/masking_2oo3.scn");
    let mut base = load_scenario_file(&path).expect("bundled scenario loads");
    base.faults.clear();
    base.flags.flip_ppm = ppm;
    let mut clean = base.clone();
    clean.flags.flip_ppm = 0;
    let reference = run(&clean, clean.max_cycles).expect("run");

    let (mut quiet, mut masked, mut failed_safe, mut corrupted) = (0, 0, 0, 0);
    let mut flips = 0;
    for seed in 0..runs {
        let mut s = base.clone();
        s.seed = seed;
        let out = run(&s, s.max_cycles).expect("run");
        let t = &out.report.tallies;
        flips += t.faults_applied;
        let same = out.memory.ls_ram == reference.memory.ls_ram && out.memory.io_device == reference.memory.io_device;
        if out.report.exit_code == 2 {
            failed_safe += 1;
        } else if !same {
            corrupted += 1;
        } else if t.masked_cycles > 0 {
            masked += 1;
        } else {
            quiet += 1;
        }
    }
    println!("{runs} runs at {ppm} ppm per block per safe cycle, {flips} flips injected");
    println!("  no visible effect   {quiet}");
    println!("  masked by the voter {masked}");
    println!("  failed safe         {failed_safe}");
    println!("  silently corrupted  {corrupted}");
}
