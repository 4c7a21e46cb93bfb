//! System state machine and the deterministic cycle engine.
//!
//! Every cycle runs seven phases in a fixed order:
//!
//! 1. apply scheduled faults
//! 2. deliver external triggers
//! 3. tick blocks in ascending id order, commit system-bus traffic
//! 4. monitor rendezvous: control writes, trigger requests, sync reads
//! 5. vote and commit the forwarded transaction to ls_ram / I/O
//! 6. observer
//! 7. system-state transitions
//!
//! Events of one cycle are ordered by `(phase, entity)`, with blocks before
//! the monitor before the system.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::block::{BlockEvent, BlockState, Instruction, ProcessingBlock, SyncPurpose, TickInput};
use crate::bus::{
    Address, BusError, BusPort, BusTransaction, MemoryMap, TxKind, MONITOR_CTRL_MOON, MONITOR_CTRL_REQUEST,
    SYNC_ACCEPT, SYNC_REJECT,
};
use crate::fault::FaultInjector;
use crate::monitor::{AvailabilityError, EntryOutcome, ExitOutcome, LockstepMonitor, MoonConfig, SyncState};
use crate::scenario::{BootCheck, Scenario, ScenarioError, ScheduledTrigger};
use crate::trace::{Entity, EventKind, TraceEvent, Value};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemState {
    Boot,
    /// Permanent; no outgoing transitions.
    SafeState,
    NormalProcessing,
    Synchronizing,
    SafeProcessingMode,
}

impl SystemState {
    pub fn name(self) -> &'static str {
        match self {
            SystemState::Boot => "boot",
            SystemState::SafeState => "safe_state",
            SystemState::NormalProcessing => "normal_processing",
            SystemState::Synchronizing => "synchronizing",
            SystemState::SafeProcessingMode => "safe_processing_mode",
        }
    }

    pub fn from_name(name: &str) -> Option<SystemState> {
        [
            SystemState::Boot,
            SystemState::SafeState,
            SystemState::NormalProcessing,
            SystemState::Synchronizing,
            SystemState::SafeProcessingMode,
        ]
        .into_iter()
        .find(|s| s.name() == name)
    }

    /// Arcs of the system automaton.
    pub fn can_transition(self, to: SystemState) -> bool {
        use SystemState::*;
        matches!(
            (self, to),
            (Boot, NormalProcessing)
                | (Boot, SafeState)
                | (NormalProcessing, Synchronizing)
                | (Synchronizing, SafeProcessingMode)
                | (Synchronizing, SafeState)
                | (SafeProcessingMode, NormalProcessing)
                | (SafeProcessingMode, SafeState)
        )
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    ScenarioInvalid(#[from] ScenarioError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("step rejected: {0}")]
    StepRejected(&'static str),
    #[error("internal invariant violated at cycle {cycle}: {message}")]
    Invariant { cycle: u64, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SessionRecord {
    pub session: u64,
    pub requested_at: u64,
    pub lockstep_at: Option<u64>,
    pub ended_at: Option<u64>,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
    /// `completed`, `gather_timeout`, `exec_timeout`, `no_majority` or `open`.
    pub outcome: &'static str,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Tallies {
    pub sessions_started: u64,
    pub sessions_completed: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub ignored_requests: u64,
    /// Voted cycles with at least one dissenting input but a valid majority.
    pub masked_cycles: u64,
    pub no_majority_cycles: u64,
    pub availability_errors: u64,
    pub faults_applied: u64,
    pub forwarded: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    SafeState,
    AllHalted,
    MaxCycles,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EndReason::SafeState => "safe_state",
            EndReason::AllHalted => "all_halted",
            EndReason::MaxCycles => "max_cycles",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Report {
    pub tool_version: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub moon: String,
    pub final_state: &'static str,
    pub all_halted: bool,
    pub end_reason: EndReason,
    pub cycles: u64,
    pub exit_code: i32,
    pub tallies: Tallies,
    pub sessions: Vec<SessionRecord>,
    pub ls_ram: Vec<(String, u32)>,
    pub io_device: Vec<(String, u32)>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub trace: Vec<TraceEvent>,
    pub memory: MemoryMap,
}

struct Events {
    cycle: u64,
    record: bool,
    buf: Vec<TraceEvent>,
}

impl Events {
    fn push(&mut self, phase: u8, entity: Entity, kind: EventKind, detail: Vec<(&'static str, Value)>) {
        if self.record {
            self.buf.push(TraceEvent { cycle: self.cycle, phase, entity, kind, detail });
        }
    }
}

fn tx_detail(tx: &BusTransaction) -> Vec<(&'static str, Value)> {
    vec![("op", tx.kind.to_string().into()), ("address", Value::Hex(tx.address.0)), ("data", tx.data.into())]
}

pub struct World {
    pub cycle: u64,
    pub system_state: SystemState,
    pub blocks: Vec<ProcessingBlock>,
    pub memory: MemoryMap,
    pub monitor: LockstepMonitor,
    faults: FaultInjector,
    rng: ChaCha8Rng,
    trace: Vec<TraceEvent>,
    record: bool,
    safe_program: Vec<Instruction>,
    triggers: Vec<ScheduledTrigger>,
    responses: Vec<Option<u32>>,
    random_selection: bool,
    tallies: Tallies,
    sessions: Vec<SessionRecord>,
    seed: u64,
    scenario_name: String,
    scenario_hash: String,
    ended: bool,
}

impl World {
    /// Validates the scenario, runs the declared boot checks and returns the
    /// world at cycle 0 in either `NormalProcessing` or `SafeState`.
    pub fn boot(scenario: &Scenario) -> Result<World, SimError> {
        Self::boot_with(scenario, true)
    }

    /// Like [`World::boot`]; `record = false` skips trace construction.
    pub fn boot_with(scenario: &Scenario, record: bool) -> Result<World, SimError> {
        scenario.validate()?;
        let n = scenario.n_blocks();
        let monitor = LockstepMonitor::new(scenario.moon, n)
            .map_err(|e| ScenarioError::Validation { path: "moon".into(), message: e.to_string() })?;
        let mut memory = MemoryMap::new();
        for &(a, v) in &scenario.memory.system_ram {
            memory.system_ram.store(a, v);
        }
        for &(a, v) in &scenario.memory.ls_ram {
            memory.ls_ram.store(a, v);
        }
        let mut triggers = scenario.triggers.clone();
        triggers.sort_by_key(|t| t.cycle);
        let mut world = World {
            cycle: 0,
            system_state: SystemState::Boot,
            blocks: scenario
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| ProcessingBlock::new(i, b.program.clone(), b.irq_latency))
                .collect(),
            memory,
            monitor,
            faults: FaultInjector::new(scenario.faults.clone(), n, scenario.flags.flip_ppm),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            trace: Vec::new(),
            record,
            safe_program: scenario.safe_program.clone(),
            triggers,
            responses: vec![None; n],
            random_selection: scenario.flags.random_selection,
            tallies: Tallies::default(),
            sessions: Vec::new(),
            seed: scenario.seed,
            scenario_name: scenario.name.clone(),
            scenario_hash: scenario.hash(),
            ended: false,
        };
        let passed = scenario.boot_check == BootCheck::Pass;
        let to = if passed { SystemState::NormalProcessing } else { SystemState::SafeState };
        let mut ev = Events { cycle: 0, record, buf: Vec::new() };
        ev.push(
            7,
            Entity::System,
            EventKind::Boot,
            vec![("check", if passed { "pass" } else { "fail" }.into()), ("moon", scenario.moon.label().into())],
        );
        world.transition(&mut ev, to);
        world.trace.extend(ev.buf);
        Ok(world)
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn tallies(&self) -> &Tallies {
        &self.tallies
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    pub fn safe_program(&self) -> &[Instruction] {
        &self.safe_program
    }

    pub fn all_halted(&self) -> bool {
        self.blocks.iter().all(ProcessingBlock::is_halted)
    }

    /// Nothing left that could change the system state.
    pub fn is_quiescent(&self) -> bool {
        self.all_halted()
            && *self.monitor.state() == SyncState::Idle
            && self.triggers.iter().all(|t| t.cycle <= self.cycle)
    }

    fn transition(&mut self, ev: &mut Events, to: SystemState) {
        let from = self.system_state;
        if from == to {
            return;
        }
        debug_assert!(from.can_transition(to), "{from} -> {to}");
        self.system_state = to;
        ev.push(
            7,
            Entity::System,
            EventKind::StateChange,
            vec![("from", from.name().into()), ("to", to.name().into())],
        );
    }

    fn session_mut(&mut self) -> Option<&mut SessionRecord> {
        let id = self.monitor.session();
        self.sessions.iter_mut().find(|s| s.session == id)
    }

    fn request(&mut self, ev: &mut Events, origin: &str, started: &mut bool) {
        let cycle = self.cycle;
        if self.monitor.request_sp(cycle) {
            *started = true;
            self.tallies.sessions_started += 1;
            let session = self.monitor.session();
            self.sessions.push(SessionRecord {
                session,
                requested_at: cycle,
                lockstep_at: None,
                ended_at: None,
                accepted: Vec::new(),
                rejected: Vec::new(),
                outcome: "open",
            });
            let phase = if origin == "external" { 2 } else { 4 };
            ev.push(
                phase,
                Entity::Monitor,
                EventKind::IrqAssert,
                vec![("session", session.into()), ("origin", origin.into())],
            );
        } else {
            self.tallies.ignored_requests += 1;
            let phase = if origin == "external" { 2 } else { 4 };
            ev.push(
                phase,
                Entity::Monitor,
                EventKind::Warning,
                vec![
                    ("reason", "request_ignored".into()),
                    ("origin", origin.into()),
                    ("monitor", self.monitor.state().name().into()),
                ],
            );
        }
    }

    /// Advances the world by one cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        if self.system_state == SystemState::SafeState {
            return Err(SimError::StepRejected("system is in the safe state"));
        }
        if self.system_state == SystemState::Boot {
            return Err(SimError::StepRejected("system has not booted"));
        }
        self.cycle += 1;
        let cycle = self.cycle;
        let n = self.blocks.len();
        let mut ev = Events { cycle, record: self.record, buf: Vec::new() };
        let mut gathering_started = false;
        let mut lockstep_entered = false;
        let mut session_completed = false;

        // (1) faults
        let activations = self.faults.activate(cycle, &mut self.blocks, &self.safe_program, &mut self.rng);
        for a in activations {
            self.tallies.faults_applied += 1;
            let mut detail = vec![("fault", a.kind.into())];
            match a.spec {
                Some(i) => detail.push(("spec", i.into())),
                None => detail.push(("spec", "stochastic".into())),
            }
            if let Some(bit) = a.bit {
                detail.push(("bit", (bit as u64).into()));
            }
            ev.push(1, Entity::Block(a.target), EventKind::FaultApplied, detail);
        }

        // (2) external triggers
        let due: Vec<ScheduledTrigger> = self.triggers.iter().filter(|t| t.cycle == cycle).copied().collect();
        for t in due {
            ev.push(
                2,
                Entity::Monitor,
                EventKind::Trigger,
                vec![("source", t.source.as_str().into()), ("origin", "external".into())],
            );
            self.request(&mut ev, "external", &mut gathering_started);
        }

        // (3) blocks
        let irq = self.monitor.irq();
        let voting = self.monitor.voting_ports(cycle);
        let mut vote_inputs: Vec<Option<BusTransaction>> = vec![None; n];
        let mut system_txs = Vec::new();
        let mut entry_reads = Vec::new();
        let mut exit_reads = Vec::new();
        let mut requests: Vec<&'static str> = Vec::new();
        for id in 0..n {
            let response = self.responses[id].take();
            let out = self.blocks[id].tick(TickInput {
                cycle,
                irq,
                sync_response: response,
                safe_program: &self.safe_program,
            });
            let entity = Entity::Block(id);
            match out.event {
                Some(BlockEvent::Halted) => {
                    ev.push(3, entity, EventKind::Halt, vec![("pc", self.blocks[id].pc.into())])
                }
                Some(BlockEvent::EnteredSafe) => ev.push(
                    3,
                    entity,
                    EventKind::StateChange,
                    vec![
                        ("to", "safe_processing".into()),
                        ("fetch", Value::Hex(self.blocks[id].fetch_address() as u32)),
                    ],
                ),
                Some(BlockEvent::Rejected { resume_pc }) | Some(BlockEvent::Released { resume_pc }) => ev.push(
                    3,
                    entity,
                    EventKind::StateChange,
                    vec![("to", "normal_processing".into()), ("pc", resume_pc.into())],
                ),
                _ => {}
            }
            if let Some(source) = out.trigger {
                ev.push(
                    3,
                    entity,
                    EventKind::Trigger,
                    vec![("source", source.as_str().into()), ("origin", "program".into())],
                );
                requests.push("program");
            }
            let (tx, _) = self.faults.perturb(id, out.tx);
            let Some(tx) = tx else { continue };
            let port_voting = voting.as_ref().is_some_and(|v| v[id]);
            match self.blocks[id].state {
                BlockState::AwaitingSync | BlockState::AwaitingExit if tx.is_sync_read() => {
                    let purpose = if self.blocks[id].state == BlockState::AwaitingExit {
                        SyncPurpose::Exit
                    } else {
                        SyncPurpose::Entry
                    };
                    let kind = if purpose == SyncPurpose::Exit { EventKind::ExitRead } else { EventKind::SyncRead };
                    ev.push(3, entity, kind, vec![("address", Value::Hex(tx.address.0))]);
                    match purpose {
                        SyncPurpose::Entry => entry_reads.push(id),
                        SyncPurpose::Exit => exit_reads.push(id),
                    }
                    if port_voting {
                        vote_inputs[id] = Some(tx);
                    }
                }
                _ if port_voting => vote_inputs[id] = Some(tx),
                BlockState::AwaitingSync | BlockState::AwaitingExit => {
                    let mut d = vec![("reason", "malformed_sync_read".into())];
                    d.extend(tx_detail(&tx));
                    ev.push(3, entity, EventKind::Warning, d);
                }
                _ => system_txs.push(tx),
            }
        }
        self.memory.arbitrate_system(&mut system_txs)?;

        // (4) monitor rendezvous
        for tx in &system_txs {
            if tx.kind != TxKind::Write {
                continue;
            }
            if tx.address == MONITOR_CTRL_REQUEST {
                ev.push(
                    4,
                    Entity::Monitor,
                    EventKind::Trigger,
                    vec![("source", "control_bus".into()), ("block", tx.block_id.into())],
                );
                requests.push("control_bus");
            } else if tx.address == MONITOR_CTRL_MOON {
                let current = *self.monitor.config();
                let proposed = MoonConfig {
                    n_required: (tx.data >> 8) as usize & 0xff,
                    m_agree: tx.data as usize & 0xff,
                    ..current
                };
                let res = if proposed.n_required > n {
                    Err("not enough blocks".to_owned())
                } else {
                    self.monitor.configure(proposed).map_err(|e| e.to_string())
                };
                match res {
                    Ok(_) => {
                        ev.push(4, Entity::Monitor, EventKind::StateChange, vec![("config", proposed.label().into())])
                    }
                    Err(e) => ev.push(
                        4,
                        Entity::Monitor,
                        EventKind::Warning,
                        vec![("reason", "config_rejected".into()), ("error", e.into())],
                    ),
                }
            }
        }
        for origin in requests {
            self.request(&mut ev, origin, &mut gathering_started);
        }

        let shuffle = if self.random_selection { Some(&mut self.rng) } else { None };
        let entry = self.monitor.on_sync_reads(cycle, &entry_reads, shuffle);
        let session = self.monitor.session();
        for (block, outcome) in entry {
            match outcome {
                EntryOutcome::Stalled => {}
                EntryOutcome::Accepted(group) => {
                    if group.len() != self.monitor.config().n_required {
                        return Err(SimError::Invariant {
                            cycle,
                            message: format!(
                                "accepted {} blocks, expected {}",
                                group.len(),
                                self.monitor.config().n_required
                            ),
                        });
                    }
                    for &b in &group {
                        self.responses[b] = Some(SYNC_ACCEPT);
                        self.tallies.accepted += 1;
                        ev.push(
                            4,
                            Entity::Block(b),
                            EventKind::Accept,
                            vec![("session", session.into()), ("response", SYNC_ACCEPT.into())],
                        );
                    }
                    if let Some(s) = self.session_mut() {
                        s.lockstep_at = Some(cycle);
                        s.accepted = group.clone();
                        s.accepted.sort_unstable();
                    }
                    let enabled: Vec<String> = group.iter().map(|b| b.to_string()).collect();
                    ev.push(
                        4,
                        Entity::Monitor,
                        EventKind::StateChange,
                        vec![
                            ("from", "gathering".into()),
                            ("to", "lockstep".into()),
                            ("enabled", enabled.join(" ").into()),
                        ],
                    );
                    ev.push(4, Entity::Monitor, EventKind::IrqDeassert, vec![("session", session.into())]);
                    lockstep_entered = true;
                }
                EntryOutcome::Rejected => {
                    self.responses[block] = Some(SYNC_REJECT);
                    self.tallies.rejected += 1;
                    ev.push(
                        4,
                        Entity::Block(block),
                        EventKind::Reject,
                        vec![("session", session.into()), ("response", SYNC_REJECT.into())],
                    );
                    if let Some(s) = self.session_mut() {
                        s.rejected.push(block);
                    }
                }
            }
        }
        for block in exit_reads {
            let was_lockstep = matches!(self.monitor.state(), SyncState::Lockstep { .. });
            match self.monitor.on_exit_read(cycle, block) {
                ExitOutcome::Stalled => {
                    if was_lockstep && matches!(self.monitor.state(), SyncState::Releasing { .. }) {
                        ev.push(
                            4,
                            Entity::Monitor,
                            EventKind::StateChange,
                            vec![("from", "lockstep".into()), ("to", "releasing".into())],
                        );
                    }
                }
                ExitOutcome::Released(group) => {
                    for &b in &group {
                        self.responses[b] = Some(SYNC_ACCEPT);
                        ev.push(
                            4,
                            Entity::Block(b),
                            EventKind::Release,
                            vec![("session", session.into()), ("response", SYNC_ACCEPT.into())],
                        );
                    }
                    let from = if was_lockstep { "lockstep" } else { "releasing" };
                    ev.push(
                        4,
                        Entity::Monitor,
                        EventKind::StateChange,
                        vec![("from", from.into()), ("to", "idle".into())],
                    );
                    session_completed = true;
                }
                ExitOutcome::Rejected => {
                    self.responses[block] = Some(SYNC_REJECT);
                    ev.push(
                        4,
                        Entity::Block(block),
                        EventKind::Warning,
                        vec![("reason", "exit_not_enabled".into()), ("response", SYNC_REJECT.into())],
                    );
                }
            }
        }

        // (5) voter
        let mut no_majority = false;
        if let Some(ports) = voting {
            let result = self.monitor.vote(&vote_inputs, &ports);
            let pattern = || -> String {
                (0..n)
                    .filter(|&p| ports[p])
                    .map(|p| format!("{}:{}", p, result.agreement(p, &ports)))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            match result.selected {
                None => {
                    no_majority = true;
                    self.tallies.no_majority_cycles += 1;
                    ev.push(5, Entity::Monitor, EventKind::NoMajority, vec![("agreement", pattern().into())]);
                }
                Some(selected) => {
                    if !result.is_unanimous(&ports) {
                        self.tallies.masked_cycles += 1;
                        let dissent: Vec<String> = (0..n)
                            .filter(|&p| ports[p] && !result.matrix[selected][p])
                            .map(|p| p.to_string())
                            .collect();
                        ev.push(
                            5,
                            Entity::Monitor,
                            EventKind::Vote,
                            vec![
                                ("selected", selected.into()),
                                ("agreement", pattern().into()),
                                ("dissent", dissent.join(" ").into()),
                            ],
                        );
                    }
                    if let Some(mut tx) = result.forwarded {
                        if !tx.is_sync_read() {
                            self.memory.issue(&mut tx, BusPort::Safe)?;
                            self.tallies.forwarded += 1;
                            let mut d = vec![("port", selected.into())];
                            d.extend(tx_detail(&tx));
                            if tx.kind == TxKind::Read {
                                d.push(("response", tx.response.unwrap_or(0).into()));
                            }
                            ev.push(5, Entity::Monitor, EventKind::Forward, d);
                        }
                    }
                }
            }
        }

        // (6) observer
        let avail = self.monitor.observe(cycle, no_majority);
        if let Some(err) = avail {
            self.tallies.availability_errors += 1;
            let mut d = vec![("reason", err.reason().into())];
            if let AvailabilityError::GatherTimeout { since } | AvailabilityError::ExecTimeout { since } = err {
                d.push(("since", since.into()));
            }
            ev.push(6, Entity::Monitor, EventKind::AvailabilityError, d);
            if let Some(s) = self.session_mut() {
                s.outcome = err.reason();
                s.ended_at = Some(cycle);
            }
        }

        // (7) system state
        if gathering_started && self.system_state == SystemState::NormalProcessing {
            self.transition(&mut ev, SystemState::Synchronizing);
        }
        if lockstep_entered && self.system_state == SystemState::Synchronizing {
            self.transition(&mut ev, SystemState::SafeProcessingMode);
        }
        if avail.is_some() {
            self.transition(&mut ev, SystemState::SafeState);
        } else if session_completed {
            self.tallies.sessions_completed += 1;
            if let Some(s) = self.session_mut() {
                s.outcome = "completed";
                s.ended_at = Some(cycle);
            }
            if self.system_state == SystemState::SafeProcessingMode {
                self.transition(&mut ev, SystemState::NormalProcessing);
            }
        }

        ev.buf.sort_by_key(|e| (e.phase, e.entity));
        self.trace.extend(ev.buf);
        self.check_invariants()
    }

    fn check_invariants(&self) -> Result<(), SimError> {
        for b in &self.blocks {
            let in_isr = !matches!(b.state, BlockState::NormalProcessing | BlockState::Halted);
            if in_isr != b.saved_pc.is_some() {
                return Err(SimError::Invariant {
                    cycle: self.cycle,
                    message: format!("block {} in {} with saved_pc {:?}", b.id, b.state.name(), b.saved_pc),
                });
            }
        }
        if let Some(enabled) = self.monitor.state().enabled() {
            let count = enabled.iter().filter(|e| **e).count();
            if count != self.monitor.config().n_required {
                return Err(SimError::Invariant {
                    cycle: self.cycle,
                    message: format!("{count} ports enabled in lockstep"),
                });
            }
        }
        Ok(())
    }

    /// Appends the terminal marker and builds the report.
    pub fn finish(&mut self, max_cycles: u64) -> Report {
        let end_reason = if self.system_state == SystemState::SafeState {
            EndReason::SafeState
        } else if self.is_quiescent() {
            EndReason::AllHalted
        } else {
            debug_assert!(self.cycle >= max_cycles);
            EndReason::MaxCycles
        };
        if !self.ended {
            self.ended = true;
            if self.record {
                self.trace.push(TraceEvent {
                    cycle: self.cycle,
                    phase: 7,
                    entity: Entity::System,
                    kind: EventKind::Halt,
                    detail: vec![("reason", end_reason.as_str().into()), ("state", self.system_state.name().into())],
                });
            }
        }
        let hex = |a: Address| format!("{:#x}", a.0);
        Report {
            tool_version: TOOL_VERSION.to_owned(),
            scenario: self.scenario_name.clone(),
            scenario_hash: self.scenario_hash.clone(),
            seed: self.seed,
            moon: self.monitor.config().label(),
            final_state: self.system_state.name(),
            all_halted: self.all_halted(),
            end_reason,
            cycles: self.cycle,
            exit_code: if self.system_state == SystemState::SafeState { 2 } else { 0 },
            tallies: self.tallies.clone(),
            sessions: self.sessions.clone(),
            ls_ram: self.memory.ls_ram.iter().map(|(a, v)| (hex(a), v)).collect(),
            io_device: self.memory.io_device.iter().map(|&(a, v)| (hex(a), v)).collect(),
        }
    }
}

/// Boots and steps until the safe state, quiescence (every block halted and
/// nothing pending) or `max_cycles`.
pub fn run(scenario: &Scenario, max_cycles: u64) -> Result<RunOutcome, SimError> {
    run_with(scenario, max_cycles, true)
}

pub fn run_with(scenario: &Scenario, max_cycles: u64, record: bool) -> Result<RunOutcome, SimError> {
    let mut world = World::boot_with(scenario, record)?;
    while world.system_state != SystemState::SafeState && world.cycle < max_cycles && !world.is_quiescent() {
        world.step()?;
    }
    let report = world.finish(max_cycles);
    Ok(RunOutcome { report, trace: std::mem::take(&mut world.trace), memory: world.memory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::TriggerSource;
    use crate::scenario::{BlockSpec, Flags, MemoryImage};

    fn scenario(n_blocks: usize, n: usize, m: usize) -> Scenario {
        Scenario {
            name: "unit".into(),
            seed: 1,
            moon: MoonConfig::new(n, m, 10, 30).unwrap(),
            boot_check: BootCheck::Pass,
            blocks: (0..n_blocks)
                .map(|i| BlockSpec {
                    name: format!("core_{}", i + 1),
                    program: vec![Instruction::Compute(4); 3],
                    irq_latency: 0,
                })
                .collect(),
            safe_program: vec![Instruction::Write(Address(0x8000), 7), Instruction::Write(Address(0xc000), 1)],
            triggers: vec![ScheduledTrigger { cycle: 2, source: TriggerSource::ExternalInScope }],
            faults: vec![],
            max_cycles: 100,
            flags: Flags::default(),
            memory: MemoryImage::default(),
        }
    }

    fn states(trace: &[TraceEvent]) -> Vec<String> {
        trace
            .iter()
            .filter(|e| e.entity == Entity::System && e.kind == EventKind::StateChange)
            .map(|e| e.get("to").unwrap().to_string())
            .collect()
    }

    #[test]
    fn boot_pass_and_fail() {
        let w = World::boot(&scenario(3, 3, 2)).unwrap();
        assert_eq!((w.cycle, w.system_state), (0, SystemState::NormalProcessing));

        let mut s = scenario(3, 3, 2);
        s.boot_check = BootCheck::Fail;
        let mut w = World::boot(&s).unwrap();
        assert_eq!(w.system_state, SystemState::SafeState);
        assert!(matches!(w.step(), Err(SimError::StepRejected(_))));
        let out = run(&s, 100).unwrap();
        assert_eq!(out.report.exit_code, 2);
        assert_eq!(out.report.cycles, 0);
    }

    #[test]
    fn invalid_scenario_is_rejected_at_boot() {
        let mut s = scenario(3, 3, 2);
        s.blocks[0].program.push(Instruction::Write(Address(0x8000), 1));
        assert!(matches!(World::boot(&s), Err(SimError::ScenarioInvalid(_))));
    }

    #[test]
    fn zero_cycles_is_just_boot() {
        let out = run(&scenario(3, 3, 2), 0).unwrap();
        assert_eq!(out.report.cycles, 0);
        assert!(out.report.sessions.is_empty());
        assert_eq!(out.report.final_state, "normal_processing");
    }

    #[test]
    fn external_trigger_runs_a_session() {
        let out = run(&scenario(3, 3, 2), 100).unwrap();
        assert_eq!(
            states(&out.trace),
            ["normal_processing", "synchronizing", "safe_processing_mode", "normal_processing"]
        );
        assert_eq!(out.report.tallies.sessions_completed, 1);
        assert_eq!(out.memory.ls_ram.load(Address(0x8000)), 7);
        assert_eq!(out.memory.io_device, vec![(Address(0xc000), 1)]);
        assert_eq!(out.report.exit_code, 0);
        assert!(out.report.all_halted);
    }

    #[test]
    fn external_trigger_is_synchronizing_in_its_own_cycle() {
        let mut s = scenario(3, 3, 2);
        // Blocks are busy in a long compute so no one answers at once.
        for b in &mut s.blocks {
            b.program = vec![Instruction::Compute(5); 3];
        }
        let mut w = World::boot(&s).unwrap();
        w.step().unwrap();
        w.step().unwrap();
        assert_eq!(w.cycle, 2);
        assert_eq!(w.system_state, SystemState::Synchronizing);
    }

    #[test]
    fn gather_timeout_enters_safe_state() {
        let mut s = scenario(3, 3, 2);
        s.blocks[2].program = vec![Instruction::Halt];
        let out = run(&s, 100).unwrap();
        let err = out.trace.iter().find(|e| e.kind == EventKind::AvailabilityError).unwrap();
        assert_eq!(err.cycle, 2 + 10 + 1);
        assert_eq!(out.report.final_state, "safe_state");
        assert_eq!(out.report.sessions[0].outcome, "gather_timeout");
        let last = out.trace.last().unwrap();
        assert_eq!((last.kind, last.entity), (EventKind::Halt, Entity::System));
    }

    #[test]
    fn trace_is_ordered() {
        let out = run(&scenario(4, 3, 2), 100).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[0].order_key() <= w[1].order_key(), "{:?} then {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn control_bus_can_request_and_configure() {
        let mut s = scenario(3, 3, 2);
        s.triggers.clear();
        s.blocks[0].program = vec![
            Instruction::Write(MONITOR_CTRL_MOON, (2 << 8) | 2),
            Instruction::Write(MONITOR_CTRL_REQUEST, 1),
            Instruction::Compute(3),
        ];
        let out = run(&s, 100).unwrap();
        assert_eq!(out.report.moon, "2oo2");
        assert_eq!(out.report.sessions.len(), 1);
        assert_eq!(out.report.sessions[0].accepted.len(), 2);
        assert_eq!(out.report.tallies.rejected, 1);
    }

    #[test]
    fn system_automaton_arcs() {
        use SystemState::*;
        assert!(!SafeState.can_transition(NormalProcessing));
        assert!(!NormalProcessing.can_transition(SafeProcessingMode));
        assert!(Synchronizing.can_transition(SafeState));
        assert!(!Boot.can_transition(Synchronizing));
    }
}
