//! One processing block: an abstract instruction interpreter plus the
//! interrupt service routine that joins a lockstep session.
//!
//! The ISR follows the two-read protocol on [`LOCKSTEP_SYNC_ADDRESS`]. The
//! first read blocks until the monitor answers: a nonzero low byte means the
//! block was accepted and jumps to [`SAFECODE_START`], zero means it was
//! surplus and resumes where it was interrupted. When the safe code ends a
//! second read blocks until every participant has left.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bus::{Address, BusTransaction, LOCKSTEP_SYNC_ADDRESS, SAFECODE_START};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerSource {
    MonitorTimed,
    MonitorTriggered,
    AppTimed,
    AppTriggered,
    ExternalInScope,
    ExternalOutOfScope,
}

impl TriggerSource {
    pub const ALL: [TriggerSource; 6] = [
        TriggerSource::MonitorTimed,
        TriggerSource::MonitorTriggered,
        TriggerSource::AppTimed,
        TriggerSource::AppTriggered,
        TriggerSource::ExternalInScope,
        TriggerSource::ExternalOutOfScope,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TriggerSource::MonitorTimed => "monitor_timed",
            TriggerSource::MonitorTriggered => "monitor_triggered",
            TriggerSource::AppTimed => "app_timed",
            TriggerSource::AppTriggered => "app_triggered",
            TriggerSource::ExternalInScope => "external_in_scope",
            TriggerSource::ExternalOutOfScope => "external_out_of_scope",
        }
    }

    pub fn parse(s: &str) -> Option<TriggerSource> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for TriggerSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instruction {
    /// Internal work taking `n >= 1` cycles, no bus traffic.
    Compute(u32),
    Read(Address),
    Write(Address, u32),
    TriggerSp(TriggerSource),
    Halt,
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Compute(n) => write!(f, "compute {n}"),
            Instruction::Read(a) => write!(f, "read {a}"),
            Instruction::Write(a, d) => write!(f, "write {a} {d}"),
            Instruction::TriggerSp(s) => write!(f, "trigger {s}"),
            Instruction::Halt => f.write_str("halt"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockState {
    NormalProcessing,
    /// Stalled on the entry read of the sync address.
    AwaitingSync,
    SafeProcessing {
        safe_pc: usize,
    },
    /// Stalled on the exit read of the sync address.
    AwaitingExit,
    Halted,
}

impl BlockState {
    pub fn name(&self) -> &'static str {
        match self {
            BlockState::NormalProcessing => "normal_processing",
            BlockState::AwaitingSync => "awaiting_sync",
            BlockState::SafeProcessing { .. } => "safe_processing",
            BlockState::AwaitingExit => "awaiting_exit",
            BlockState::Halted => "halted",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncPurpose {
    Entry,
    Exit,
}

/// State change worth recording, reported by [`ProcessingBlock::tick`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockEvent {
    SyncIssued(SyncPurpose),
    EnteredSafe,
    Rejected { resume_pc: usize },
    Released { resume_pc: usize },
    Halted,
}

pub struct TickInput<'a> {
    pub cycle: u64,
    /// Level of the monitor's irq line as seen by this block.
    pub irq: bool,
    /// Reply to a stalled sync read, released by the monitor last cycle.
    pub sync_response: Option<u32>,
    pub safe_program: &'a [Instruction],
}

#[derive(Debug, Default)]
pub struct TickOutput {
    pub tx: Option<BusTransaction>,
    pub trigger: Option<TriggerSource>,
    pub irq_latched: bool,
    pub event: Option<BlockEvent>,
}

#[derive(Clone, Debug)]
pub struct ProcessingBlock {
    pub id: usize,
    pub state: BlockState,
    pub pc: usize,
    pub program: Vec<Instruction>,
    /// Resume point while inside the ISR.
    pub saved_pc: Option<usize>,
    pub pending_irq: bool,
    /// Cycles between taking the interrupt and issuing the entry read.
    pub irq_latency: u32,
    compute_left: u32,
    isr_countdown: Option<u32>,
    extra_delay: u32,
    ignore_irq: bool,
    safe_override: Option<Vec<Instruction>>,
}

impl ProcessingBlock {
    pub fn new(id: usize, program: Vec<Instruction>, irq_latency: u32) -> Self {
        ProcessingBlock {
            id,
            state: BlockState::NormalProcessing,
            pc: 0,
            program,
            saved_pc: None,
            pending_irq: false,
            irq_latency,
            compute_left: 0,
            isr_countdown: None,
            extra_delay: 0,
            ignore_irq: false,
            safe_override: None,
        }
    }

    pub fn is_halted(&self) -> bool {
        self.state == BlockState::Halted
    }

    /// True between instructions (no multi-cycle Compute in flight).
    pub fn at_boundary(&self) -> bool {
        self.compute_left == 0
    }

    /// Latches the interrupt; it is taken at the next instruction boundary.
    pub fn raise_irq(&mut self) -> bool {
        if self.state != BlockState::NormalProcessing || self.ignore_irq || self.pending_irq {
            return false;
        }
        self.pending_irq = true;
        true
    }

    /// Index of the safe instruction this block fetches on its next tick.
    pub fn next_safe_fetch(&self, shared: &[Instruction]) -> Option<usize> {
        match self.state {
            BlockState::SafeProcessing { safe_pc }
                if self.at_boundary() && safe_pc < self.safe_stream(shared).len() =>
            {
                Some(safe_pc)
            }
            _ => None,
        }
    }

    pub fn ignore_interrupts(&mut self) {
        self.ignore_irq = true;
    }

    pub fn delay_next_sync(&mut self, cycles: u32) {
        self.extra_delay += cycles;
    }

    /// Replaces the safe stream from instruction `from` onwards with `alt`
    /// for the remainder of the current (or next) session.
    pub fn diverge_safe_stream(&mut self, shared: &[Instruction], from: usize, alt: &[Instruction]) {
        let base = self.safe_stream(shared);
        let mut stream: Vec<Instruction> = base[..from.min(base.len())].to_vec();
        stream.extend_from_slice(alt);
        self.safe_override = Some(stream);
    }

    fn safe_stream<'a>(&'a self, shared: &'a [Instruction]) -> &'a [Instruction] {
        self.safe_override.as_deref().unwrap_or(shared)
    }

    fn sync_read(&self, cycle: u64) -> BusTransaction {
        BusTransaction::read(self.id, cycle, LOCKSTEP_SYNC_ADDRESS)
    }

    /// Advances the block by one cycle.
    pub fn tick(&mut self, input: TickInput<'_>) -> TickOutput {
        let mut out = TickOutput::default();

        if let Some(resp) = input.sync_response {
            match self.state {
                BlockState::AwaitingSync => {
                    if resp & 0xff != 0 {
                        self.state = BlockState::SafeProcessing { safe_pc: 0 };
                        out.event = Some(BlockEvent::EnteredSafe);
                    } else {
                        let resume_pc = self.resume();
                        out.event = Some(BlockEvent::Rejected { resume_pc });
                    }
                    return out;
                }
                BlockState::AwaitingExit => {
                    self.safe_override = None;
                    let resume_pc = self.resume();
                    out.event = Some(BlockEvent::Released { resume_pc });
                    return out;
                }
                _ => {}
            }
        }

        match self.state {
            BlockState::Halted | BlockState::AwaitingSync | BlockState::AwaitingExit => {}
            BlockState::NormalProcessing => {
                if input.irq {
                    out.irq_latched = self.raise_irq();
                }
                if self.compute_left > 0 {
                    self.compute_left -= 1;
                    if self.compute_left == 0 {
                        self.pc += 1;
                    }
                    return out;
                }
                if self.pending_irq {
                    let countdown = self
                        .isr_countdown
                        .get_or_insert_with(|| self.irq_latency + std::mem::take(&mut self.extra_delay));
                    if *countdown > 0 {
                        *countdown -= 1;
                        return out;
                    }
                    self.isr_countdown = None;
                    self.pending_irq = false;
                    self.saved_pc = Some(self.pc);
                    self.state = BlockState::AwaitingSync;
                    out.tx = Some(self.sync_read(input.cycle));
                    out.event = Some(BlockEvent::SyncIssued(SyncPurpose::Entry));
                    return out;
                }
                let Some(instr) = self.program.get(self.pc).cloned() else {
                    self.state = BlockState::Halted;
                    out.event = Some(BlockEvent::Halted);
                    return out;
                };
                match instr {
                    Instruction::Halt => {
                        self.state = BlockState::Halted;
                        out.event = Some(BlockEvent::Halted);
                    }
                    Instruction::TriggerSp(source) => {
                        out.trigger = Some(source);
                        self.pc += 1;
                    }
                    other => {
                        out.tx = self.execute(&other, input.cycle);
                        if self.compute_left == 0 {
                            self.pc += 1;
                        }
                    }
                }
            }
            BlockState::SafeProcessing { safe_pc } => {
                if self.compute_left > 0 {
                    self.compute_left -= 1;
                    if self.compute_left == 0 {
                        self.state = BlockState::SafeProcessing { safe_pc: safe_pc + 1 };
                    }
                    return out;
                }
                let instr = self.safe_stream(input.safe_program).get(safe_pc).cloned();
                match instr {
                    None | Some(Instruction::Halt) => {
                        self.state = BlockState::AwaitingExit;
                        out.tx = Some(self.sync_read(input.cycle));
                        out.event = Some(BlockEvent::SyncIssued(SyncPurpose::Exit));
                    }
                    Some(Instruction::TriggerSp(source)) => {
                        out.trigger = Some(source);
                        self.state = BlockState::SafeProcessing { safe_pc: safe_pc + 1 };
                    }
                    Some(other) => {
                        out.tx = self.execute(&other, input.cycle);
                        if self.compute_left == 0 {
                            self.state = BlockState::SafeProcessing { safe_pc: safe_pc + 1 };
                        }
                    }
                }
            }
        }
        out
    }

    fn execute(&mut self, instr: &Instruction, cycle: u64) -> Option<BusTransaction> {
        match *instr {
            Instruction::Compute(n) => {
                self.compute_left = n.max(1) - 1;
                None
            }
            Instruction::Read(a) => Some(BusTransaction::read(self.id, cycle, a)),
            Instruction::Write(a, d) => Some(BusTransaction::write(self.id, cycle, a, d)),
            Instruction::TriggerSp(_) | Instruction::Halt => None,
        }
    }

    fn resume(&mut self) -> usize {
        let resume_pc = self.saved_pc.take().unwrap_or(self.pc);
        self.pc = resume_pc;
        self.state = BlockState::NormalProcessing;
        resume_pc
    }

    /// Code address of the next fetch, for diagnostics.
    pub fn fetch_address(&self) -> u64 {
        match self.state {
            BlockState::SafeProcessing { safe_pc } => SAFECODE_START.0 as u64 + safe_pc as u64,
            _ => self.pc as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::TxKind;

    fn tick(b: &mut ProcessingBlock, cycle: u64, irq: bool, resp: Option<u32>) -> TickOutput {
        b.tick(TickInput { cycle, irq, sync_response: resp, safe_program: &SAFE })
    }

    const SAFE: [Instruction; 2] = [Instruction::Write(Address(0x8000), 1), Instruction::Compute(2)];

    #[test]
    fn compute_takes_its_duration() {
        let mut b = ProcessingBlock::new(0, vec![Instruction::Compute(3), Instruction::Halt], 0);
        for c in 1..=3 {
            assert_eq!(b.pc, 0, "cycle {c}");
            assert!(tick(&mut b, c, false, None).tx.is_none());
        }
        assert_eq!(b.pc, 1);
    }

    #[test]
    fn irq_at_boundary_issues_entry_read() {
        let mut prog = vec![Instruction::Compute(1); 5];
        prog.push(Instruction::Compute(1));
        let mut b = ProcessingBlock::new(0, prog, 0);
        for c in 1..=5 {
            tick(&mut b, c, false, None);
        }
        assert_eq!(b.pc, 5);
        let out = tick(&mut b, 6, true, None);
        assert_eq!(b.state, BlockState::AwaitingSync);
        assert_eq!(b.saved_pc, Some(5));
        let tx = out.tx.unwrap();
        assert_eq!((tx.kind, tx.address), (TxKind::Read, LOCKSTEP_SYNC_ADDRESS));
    }

    #[test]
    fn halted_block_ignores_irq() {
        let mut b = ProcessingBlock::new(0, vec![Instruction::Halt], 0);
        tick(&mut b, 1, false, None);
        assert!(b.is_halted());
        assert!(!b.raise_irq());
        let out = tick(&mut b, 2, true, None);
        assert!(out.tx.is_none());
        assert!(b.is_halted());
        assert!(!b.pending_irq);
    }

    #[test]
    fn irq_mid_compute_waits_for_boundary() {
        let mut b = ProcessingBlock::new(0, vec![Instruction::Compute(10), Instruction::Halt], 0);
        for c in 1..=4 {
            tick(&mut b, c, false, None);
        }
        assert!(b.raise_irq());
        for c in 5..=10 {
            let out = tick(&mut b, c, false, None);
            assert!(out.tx.is_none(), "no read before the boundary (cycle {c})");
        }
        let out = tick(&mut b, 11, false, None);
        assert!(out.tx.unwrap().is_sync_read());
        assert_eq!(b.saved_pc, Some(1));
    }

    #[test]
    fn irq_latency_delays_entry_read() {
        let mut b = ProcessingBlock::new(0, vec![Instruction::Compute(1); 20], 3);
        let mut read_at = None;
        for c in 1..=10 {
            // Line drops after one cycle; the latched interrupt is still taken.
            if tick(&mut b, c, c == 1, None).tx.is_some() {
                read_at = Some(c);
                break;
            }
        }
        assert_eq!(read_at, Some(4));
    }

    #[test]
    fn accepted_block_runs_safe_code_then_exits() {
        let mut b = ProcessingBlock::new(0, vec![Instruction::Compute(1); 4], 0);
        tick(&mut b, 1, true, None);
        assert_eq!(b.state, BlockState::AwaitingSync);
        assert!(tick(&mut b, 2, false, None).tx.is_none(), "stalled");
        let out = tick(&mut b, 3, false, Some(1));
        assert_eq!(out.event, Some(BlockEvent::EnteredSafe));
        assert_eq!(b.state, BlockState::SafeProcessing { safe_pc: 0 });
        assert_eq!(b.fetch_address(), SAFECODE_START.0 as u64);

        let w = tick(&mut b, 4, false, None).tx.unwrap();
        assert_eq!(w.address, Address(0x8000));
        assert!(tick(&mut b, 5, false, None).tx.is_none());
        assert!(tick(&mut b, 6, false, None).tx.is_none());
        let exit = tick(&mut b, 7, false, None);
        assert!(exit.tx.unwrap().is_sync_read());
        assert_eq!(exit.event, Some(BlockEvent::SyncIssued(SyncPurpose::Exit)));
        let out = tick(&mut b, 8, false, Some(1));
        assert_eq!(out.event, Some(BlockEvent::Released { resume_pc: 0 }));
        assert_eq!(b.state, BlockState::NormalProcessing);
        assert_eq!(b.pc, 0);
        assert_eq!(b.saved_pc, None);
    }

    #[test]
    fn rejected_block_resumes_at_saved_pc() {
        let mut b = ProcessingBlock::new(0, vec![Instruction::Compute(1); 4], 0);
        tick(&mut b, 1, false, None);
        tick(&mut b, 2, true, None);
        assert_eq!(b.saved_pc, Some(1));
        let out = tick(&mut b, 3, false, Some(0));
        assert_eq!(out.event, Some(BlockEvent::Rejected { resume_pc: 1 }));
        assert_eq!(b.state, BlockState::NormalProcessing);
        assert_eq!(b.pc, 1);
    }

    #[test]
    fn accept_tests_only_the_low_byte() {
        let mut b = ProcessingBlock::new(0, vec![Instruction::Compute(1)], 0);
        tick(&mut b, 1, true, None);
        tick(&mut b, 2, false, Some(0x100));
        assert_eq!(b.state, BlockState::NormalProcessing);
    }

    #[test]
    fn trigger_does_not_enter_the_isr() {
        let mut b = ProcessingBlock::new(
            0,
            vec![Instruction::TriggerSp(TriggerSource::AppTriggered), Instruction::Compute(1)],
            0,
        );
        let out = tick(&mut b, 1, false, None);
        assert_eq!(out.trigger, Some(TriggerSource::AppTriggered));
        assert_eq!(b.state, BlockState::NormalProcessing);
        assert!(out.tx.is_none());
    }

    #[test]
    fn divergent_stream_replaces_the_tail() {
        let mut b = ProcessingBlock::new(0, vec![], 0);
        b.diverge_safe_stream(&SAFE, 1, &[Instruction::Write(Address(0x8001), 9)]);
        assert_eq!(
            b.safe_override.as_deref(),
            Some(&[Instruction::Write(Address(0x8000), 1), Instruction::Write(Address(0x8001), 9)][..])
        );
    }

    #[test]
    fn program_end_is_an_implicit_halt() {
        let mut b = ProcessingBlock::new(0, vec![Instruction::Write(Address(1), 1)], 0);
        assert!(tick(&mut b, 1, false, None).tx.is_some());
        assert_eq!(tick(&mut b, 2, false, None).event, Some(BlockEvent::Halted));
        assert_eq!(b.pc, 1);
    }
}
