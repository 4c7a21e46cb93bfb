//! Scheduled perturbations of block outputs.
//!
//! Faults act on the pre-vote side only: a block's outgoing transaction, its
//! safe-program stream, or its willingness to answer the irq. The monitor and
//! the stores are never corrupted directly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::block::{Instruction, ProcessingBlock};
use crate::bus::{Address, BusTransaction};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FaultKind {
    BitFlipData { bit: u8 },
    BitFlipAddress { bit: u8 },
    DivergentProgram { alternate: Vec<Instruction> },
    StuckSilent,
    NoShow,
    StartJitter { delay: u32 },
}

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::BitFlipData { .. } => "bit_flip_data",
            FaultKind::BitFlipAddress { .. } => "bit_flip_address",
            FaultKind::DivergentProgram { .. } => "divergent_program",
            FaultKind::StuckSilent => "stuck_silent",
            FaultKind::NoShow => "no_show",
            FaultKind::StartJitter { .. } => "start_jitter",
        }
    }
}

/// When a fault fires. Each fault fires at most once.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultWindow {
    AtCycle(u64),
    /// When the target is about to fetch this safe-program instruction.
    AtSafeInstruction(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultSpec {
    pub target: usize,
    pub kind: FaultKind,
    pub window: FaultWindow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Flip {
    Data(u8),
    Address(u8),
}

#[derive(Clone, Debug, Default)]
struct BlockFaults {
    silent: bool,
    armed: Option<Flip>,
}

/// Record of a fault that fired this cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Activation {
    pub target: usize,
    pub kind: &'static str,
    /// Index into the scenario's fault list; `None` for stochastic flips.
    pub spec: Option<usize>,
    pub bit: Option<u8>,
}

/// How a transaction was altered on its way to the bus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Perturbation {
    Flipped { before: BusTransaction },
    Suppressed,
}

#[derive(Clone, Debug)]
pub struct FaultInjector {
    specs: Vec<FaultSpec>,
    fired: Vec<bool>,
    blocks: Vec<BlockFaults>,
    flip_ppm: u32,
}

impl FaultInjector {
    pub fn new(specs: Vec<FaultSpec>, n_blocks: usize, flip_ppm: u32) -> Self {
        FaultInjector {
            fired: vec![false; specs.len()],
            specs,
            blocks: vec![BlockFaults::default(); n_blocks],
            flip_ppm,
        }
    }

    pub fn specs(&self) -> &[FaultSpec] {
        &self.specs
    }

    pub fn is_silent(&self, block: usize) -> bool {
        self.blocks[block].silent
    }

    /// Fires every fault whose window matches this cycle, in list order.
    pub fn activate<R: Rng>(
        &mut self,
        cycle: u64,
        blocks: &mut [ProcessingBlock],
        safe_program: &[Instruction],
        rng: &mut R,
    ) -> Vec<Activation> {
        let mut fired = Vec::new();
        for (i, spec) in self.specs.iter().enumerate() {
            if self.fired[i] {
                continue;
            }
            let block = &mut blocks[spec.target];
            let at = match spec.window {
                FaultWindow::AtCycle(c) if c == cycle => block.next_safe_fetch(safe_program).unwrap_or(0),
                FaultWindow::AtSafeInstruction(k) if block.next_safe_fetch(safe_program) == Some(k) => k,
                _ => continue,
            };
            self.fired[i] = true;
            apply(spec, block, &mut self.blocks[spec.target], safe_program, at);
            fired.push(Activation {
                target: spec.target,
                kind: spec.kind.name(),
                spec: Some(i),
                bit: match spec.kind {
                    FaultKind::BitFlipData { bit } | FaultKind::BitFlipAddress { bit } => Some(bit),
                    _ => None,
                },
            });
        }
        if self.flip_ppm > 0 {
            for block in blocks.iter() {
                if block.next_safe_fetch(safe_program).is_none() {
                    continue;
                }
                if rng.random_range(0..1_000_000u32) < self.flip_ppm {
                    let bit = rng.random_range(0..32u8);
                    self.blocks[block.id].armed = Some(Flip::Data(bit));
                    fired.push(Activation { target: block.id, kind: "bit_flip_data", spec: None, bit: Some(bit) });
                }
            }
        }
        fired
    }

    /// Passes a block's output through its active faults. Armed flips are
    /// consumed whether or not the block drove the bus this cycle.
    pub fn perturb(
        &mut self,
        block: usize,
        tx: Option<BusTransaction>,
    ) -> (Option<BusTransaction>, Option<Perturbation>) {
        let state = &mut self.blocks[block];
        let armed = state.armed.take();
        let Some(mut tx) = tx else {
            return (None, None);
        };
        if state.silent {
            return (None, Some(Perturbation::Suppressed));
        }
        match armed {
            Some(flip) => {
                let before = tx.clone();
                match flip {
                    Flip::Data(bit) => tx.data ^= 1 << bit,
                    Flip::Address(bit) => tx.address = Address(tx.address.0 ^ (1 << bit)),
                }
                (Some(tx), Some(Perturbation::Flipped { before }))
            }
            None => (Some(tx), None),
        }
    }
}

fn apply(spec: &FaultSpec, block: &mut ProcessingBlock, state: &mut BlockFaults, safe: &[Instruction], at: usize) {
    match &spec.kind {
        FaultKind::BitFlipData { bit } => state.armed = Some(Flip::Data(*bit)),
        FaultKind::BitFlipAddress { bit } => state.armed = Some(Flip::Address(*bit)),
        FaultKind::DivergentProgram { alternate } => block.diverge_safe_stream(safe, at, alternate),
        FaultKind::StuckSilent => state.silent = true,
        FaultKind::NoShow => block.ignore_interrupts(),
        FaultKind::StartJitter { delay } => block.delay_next_sync(*delay),
    }
}
