//! The compare matrix and majority selection on a few hand-made inputs.
//!
//!     cargo run --example voter

use lockstep_sim::voter::vote;
use lockstep_sim::{Address, BusTransaction};

fn show(title: &str, inputs: &[Option<BusTransaction>], m: usize) {
    let considered = vec![true; inputs.len()];
    let r = vote(inputs, &considered, m);
    println!("{title} (M = {m})");
    for (p, row) in r.matrix.iter().enumerate() {
        let input = match &inputs[p] {
            Some(tx) => format!("{} {} {:#x}", tx.kind, tx.address, tx.data),
            None => "idle".to_owned(),
        };
        let cells: String = row.iter().map(|&eq| if eq { " 1" } else { " ." }).collect();
        println!("  port {p}: {cells}   {input}");
    }
    match r.selected {
        Some(p) => println!("  -> port {p} selected, agreement {}\n", r.agreement(p, &considered)),
        None => println!("  -> no majority, safe bus stays idle\n"),
    }
}

fn main() {
    let w = |d: u32| Some(BusTransaction::write(0, 1, Address(0x8000), d));
    show("one flipped bit", &[w(7), w(5), w(7)], 2);
    show("two corrupted copies", &[w(7), w(5), w(3)], 2);
    show("3oo5 with an idle port", &[w(1), None, w(1), w(9), w(1)], 3);
    show("majority idle", &[None, None, w(4)], 2);
}
