//! The lock_step_monitor: controller, synchronizer, voter and observer.
//!
//! The controller starts a session on `request_sp` and holds the irq line
//! high until the synchronizer reports lockstep. The synchronizer stalls
//! entry reads until N have arrived, accepts the first N and rejects the
//! rest, then stalls exit reads until every participant has issued one.
//! The observer raises an availability error on a gather or execution
//! timeout, or when the voter finds no majority. After an availability
//! error the monitor is frozen.

pub mod voter;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::BusTransaction;
pub use voter::{compare_matrix, select_majority, vote, VoteResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoonConfig {
    pub n_required: usize,
    pub m_agree: usize,
    pub t_gather: u64,
    pub t_exec: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoteMode {
    /// 2oo2: any mismatch is an immediate no-majority.
    Comparison,
    /// Odd N >= 3 with a strict-majority threshold.
    Voting,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("n_required must be at least 2, got {0}")]
    TooFewParticipants(usize),
    #[error("m_agree must lie in 1..={n}, got {m}")]
    ThresholdOutOfRange { n: usize, m: usize },
    #[error("n_required must be odd and >= 3 for voting (or exactly 2oo2), got {0}")]
    EvenParticipants(usize),
    #[error("m_agree = {m} is not a strict majority of {n}")]
    NotStrictMajority { n: usize, m: usize },
    #[error("{0} must be at least 1 cycle")]
    ZeroTimeout(&'static str),
    #[error("monitor is busy; configuration only changes while idle")]
    Busy,
}

impl MoonConfig {
    pub fn new(n_required: usize, m_agree: usize, t_gather: u64, t_exec: u64) -> Result<Self, ConfigError> {
        let config = MoonConfig { n_required, m_agree, t_gather, t_exec };
        config.mode()?;
        Ok(config)
    }

    pub fn mode(&self) -> Result<VoteMode, ConfigError> {
        let (n, m) = (self.n_required, self.m_agree);
        if n < 2 {
            return Err(ConfigError::TooFewParticipants(n));
        }
        if m < 1 || m > n {
            return Err(ConfigError::ThresholdOutOfRange { n, m });
        }
        if self.t_gather < 1 {
            return Err(ConfigError::ZeroTimeout("t_gather"));
        }
        if self.t_exec < 1 {
            return Err(ConfigError::ZeroTimeout("t_exec"));
        }
        if n == 2 {
            return if m == 2 { Ok(VoteMode::Comparison) } else { Err(ConfigError::NotStrictMajority { n, m }) };
        }
        if n % 2 == 0 {
            return Err(ConfigError::EvenParticipants(n));
        }
        if 2 * m <= n {
            return Err(ConfigError::NotStrictMajority { n, m });
        }
        Ok(VoteMode::Voting)
    }

    /// Faulty participants that can be outvoted in one cycle.
    pub fn tolerated_faults(&self) -> usize {
        self.n_required - self.m_agree
    }

    pub fn label(&self) -> String {
        format!("{}oo{}", self.m_agree, self.n_required)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SyncState {
    Idle,
    Gathering { since: u64, arrived: Vec<usize> },
    Lockstep { since: u64, enabled: Vec<bool> },
    Releasing { since: u64, enabled: Vec<bool>, exited: Vec<bool> },
}

impl SyncState {
    pub fn name(&self) -> &'static str {
        match self {
            SyncState::Idle => "idle",
            SyncState::Gathering { .. } => "gathering",
            SyncState::Lockstep { .. } => "lockstep",
            SyncState::Releasing { .. } => "releasing",
        }
    }

    pub fn enabled(&self) -> Option<&[bool]> {
        match self {
            SyncState::Lockstep { enabled, .. } | SyncState::Releasing { enabled, .. } => Some(enabled),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntryOutcome {
    Stalled,
    /// The Nth arrival completed the group; every member is answered now.
    Accepted(Vec<usize>),
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExitOutcome {
    Stalled,
    Released(Vec<usize>),
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AvailabilityError {
    GatherTimeout { since: u64 },
    ExecTimeout { since: u64 },
    NoMajority,
}

impl AvailabilityError {
    pub fn reason(&self) -> &'static str {
        match self {
            AvailabilityError::GatherTimeout { .. } => "gather_timeout",
            AvailabilityError::ExecTimeout { .. } => "exec_timeout",
            AvailabilityError::NoMajority => "no_majority",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LockstepMonitor {
    config: MoonConfig,
    n_ports: usize,
    state: SyncState,
    session: u64,
    frozen: bool,
}

impl LockstepMonitor {
    pub fn new(config: MoonConfig, n_ports: usize) -> Result<Self, ConfigError> {
        config.mode()?;
        Ok(LockstepMonitor { config, n_ports, state: SyncState::Idle, session: 0, frozen: false })
    }

    pub fn config(&self) -> &MoonConfig {
        &self.config
    }

    pub fn state(&self) -> &SyncState {
        &self.state
    }

    /// Number of sessions started so far; the current one when not idle.
    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn n_ports(&self) -> usize {
        self.n_ports
    }

    /// Latches a new configuration. Only allowed while idle.
    pub fn configure(&mut self, config: MoonConfig) -> Result<VoteMode, ConfigError> {
        if self.state != SyncState::Idle || self.frozen {
            return Err(ConfigError::Busy);
        }
        let mode = config.mode()?;
        self.config = config;
        Ok(mode)
    }

    /// The irq output towards every block.
    pub fn irq(&self) -> bool {
        !self.frozen && matches!(self.state, SyncState::Gathering { .. })
    }

    /// Starts gathering if idle. Returns false when the request is ignored.
    pub fn request_sp(&mut self, cycle: u64) -> bool {
        if self.frozen || self.state != SyncState::Idle {
            return false;
        }
        self.session += 1;
        self.state = SyncState::Gathering { since: cycle, arrived: Vec::new() };
        true
    }

    /// Handles one entry read.
    pub fn on_sync_read(&mut self, cycle: u64, block: usize) -> EntryOutcome {
        if self.frozen {
            return EntryOutcome::Stalled;
        }
        let n = self.config.n_required;
        match &mut self.state {
            SyncState::Gathering { arrived, .. } => {
                if arrived.contains(&block) {
                    return EntryOutcome::Stalled;
                }
                arrived.push(block);
                if arrived.len() < n {
                    return EntryOutcome::Stalled;
                }
                let group = arrived.clone();
                let mut enabled = vec![false; self.n_ports];
                for &b in &group {
                    enabled[b] = true;
                }
                self.state = SyncState::Lockstep { since: cycle, enabled };
                EntryOutcome::Accepted(group)
            }
            _ => EntryOutcome::Rejected,
        }
    }

    /// Handles all entry reads of one cycle. Same-cycle arrivals are taken in
    /// ascending block order, or in a seeded random order when `shuffle` is
    /// given.
    pub fn on_sync_reads<R: Rng>(
        &mut self,
        cycle: u64,
        readers: &[usize],
        shuffle: Option<&mut R>,
    ) -> Vec<(usize, EntryOutcome)> {
        let mut order = readers.to_vec();
        order.sort_unstable();
        if let Some(rng) = shuffle {
            order.shuffle(rng);
        }
        order.into_iter().map(|b| (b, self.on_sync_read(cycle, b))).collect()
    }

    /// Handles one exit read.
    pub fn on_exit_read(&mut self, _cycle: u64, block: usize) -> ExitOutcome {
        if self.frozen {
            return ExitOutcome::Stalled;
        }
        let (since, enabled, mut exited) = match &self.state {
            SyncState::Lockstep { since, enabled } => (*since, enabled.clone(), vec![false; self.n_ports]),
            SyncState::Releasing { since, enabled, exited } => (*since, enabled.clone(), exited.clone()),
            _ => return ExitOutcome::Rejected,
        };
        if !enabled[block] {
            return ExitOutcome::Rejected;
        }
        exited[block] = true;
        if enabled.iter().zip(&exited).all(|(e, x)| !e || *x) {
            let group = (0..self.n_ports).filter(|&b| enabled[b]).collect();
            self.state = SyncState::Idle;
            ExitOutcome::Released(group)
        } else {
            self.state = SyncState::Releasing { since, enabled, exited };
            ExitOutcome::Stalled
        }
    }

    /// Enabled vector when this cycle's bus inputs are subject to voting:
    /// from the cycle after lockstep entry until release.
    pub fn voting_ports(&self, cycle: u64) -> Option<Vec<bool>> {
        match &self.state {
            SyncState::Lockstep { since, enabled } | SyncState::Releasing { since, enabled, .. }
                if *since < cycle && !self.frozen =>
            {
                Some(enabled.clone())
            }
            _ => None,
        }
    }

    pub fn vote(&self, inputs: &[Option<BusTransaction>], considered: &[bool]) -> VoteResult {
        vote(inputs, considered, self.config.m_agree)
    }

    /// Observer: checks the synchronizer's time budgets and the voter's
    /// verdict for this cycle. Freezes the monitor on error.
    pub fn observe(&mut self, cycle: u64, no_majority: bool) -> Option<AvailabilityError> {
        if self.frozen {
            return None;
        }
        let err = match &self.state {
            _ if no_majority => Some(AvailabilityError::NoMajority),
            SyncState::Gathering { since, .. } if cycle > since + self.config.t_gather => {
                Some(AvailabilityError::GatherTimeout { since: *since })
            }
            SyncState::Lockstep { since, .. } | SyncState::Releasing { since, .. }
                if cycle > since + self.config.t_exec =>
            {
                Some(AvailabilityError::ExecTimeout { since: *since })
            }
            _ => None,
        };
        if err.is_some() {
            self.frozen = true;
        }
        err
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn monitor(n: usize, m: usize, ports: usize) -> LockstepMonitor {
        LockstepMonitor::new(MoonConfig::new(n, m, 100, 100).unwrap(), ports).unwrap()
    }

    #[test]
    fn config_rules() {
        assert_eq!(MoonConfig::new(3, 2, 1, 1).unwrap().mode(), Ok(VoteMode::Voting));
        assert_eq!(MoonConfig::new(2, 2, 1, 1).unwrap().mode(), Ok(VoteMode::Comparison));
        assert_eq!(MoonConfig::new(5, 3, 1, 1).unwrap().mode(), Ok(VoteMode::Voting));
        assert_eq!(MoonConfig::new(4, 2, 1, 1), Err(ConfigError::EvenParticipants(4)));
        assert_eq!(MoonConfig::new(4, 3, 1, 1), Err(ConfigError::EvenParticipants(4)));
        assert_eq!(MoonConfig::new(3, 1, 1, 1), Err(ConfigError::NotStrictMajority { n: 3, m: 1 }));
        assert_eq!(MoonConfig::new(2, 1, 1, 1), Err(ConfigError::NotStrictMajority { n: 2, m: 1 }));
        assert_eq!(MoonConfig::new(1, 1, 1, 1), Err(ConfigError::TooFewParticipants(1)));
        assert_eq!(MoonConfig::new(3, 4, 1, 1), Err(ConfigError::ThresholdOutOfRange { n: 3, m: 4 }));
        assert_eq!(MoonConfig::new(3, 2, 0, 1), Err(ConfigError::ZeroTimeout("t_gather")));
        assert_eq!(MoonConfig::new(3, 2, 1, 0), Err(ConfigError::ZeroTimeout("t_exec")));
    }

    #[test]
    fn configure_only_while_idle() {
        let mut m = monitor(3, 2, 5);
        assert_eq!(m.configure(MoonConfig::new(5, 3, 10, 10).unwrap()), Ok(VoteMode::Voting));
        assert!(m.request_sp(1));
        assert_eq!(m.configure(MoonConfig::new(3, 2, 10, 10).unwrap()), Err(ConfigError::Busy));
        assert_eq!(m.config().n_required, 5);
    }

    #[test]
    fn request_starts_gathering_once() {
        let mut m = monitor(3, 2, 3);
        assert!(!m.irq());
        assert!(m.request_sp(5));
        assert!(m.irq());
        assert!(!m.request_sp(6));
        assert_eq!(m.session(), 1);
    }

    #[test]
    fn late_reader_is_rejected() {
        let mut m = monitor(2, 2, 3);
        m.request_sp(1);
        let out = m.on_sync_reads::<ChaCha8Rng>(2, &[2, 1], None);
        assert_eq!(out, vec![(1, EntryOutcome::Stalled), (2, EntryOutcome::Accepted(vec![1, 2]))]);
        assert!(!m.irq());
        assert_eq!(m.on_sync_read(4, 0), EntryOutcome::Rejected);
    }

    #[test]
    fn stalls_until_n_arrive() {
        let mut m = monitor(3, 2, 3);
        m.request_sp(1);
        assert_eq!(m.on_sync_read(10, 0), EntryOutcome::Stalled);
        assert_eq!(m.on_sync_read(10, 1), EntryOutcome::Stalled);
        assert_eq!(m.on_sync_read(12, 2), EntryOutcome::Accepted(vec![0, 1, 2]));
        assert_eq!(m.state(), &SyncState::Lockstep { since: 12, enabled: vec![true; 3] });
    }

    #[test]
    fn surplus_same_cycle_arrival_rejected() {
        let mut m = monitor(3, 2, 4);
        m.request_sp(1);
        let out = m.on_sync_reads::<ChaCha8Rng>(3, &[3, 2, 1, 0], None);
        assert_eq!(out[2], (2, EntryOutcome::Accepted(vec![0, 1, 2])));
        assert_eq!(out[3], (3, EntryOutcome::Rejected));
    }

    #[test]
    fn random_selection_keeps_cardinality() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = monitor(3, 2, 5);
            m.request_sp(1);
            let out = m.on_sync_reads(2, &[0, 1, 2, 3, 4], Some(&mut rng));
            let accepted: Vec<_> = out
                .iter()
                .filter_map(|(_, o)| match o {
                    EntryOutcome::Accepted(g) => Some(g.len()),
                    _ => None,
                })
                .collect();
            assert_eq!(accepted, vec![3]);
            assert_eq!(out.iter().filter(|(_, o)| *o == EntryOutcome::Rejected).count(), 2);
        }
    }

    #[test]
    fn release_waits_for_every_participant() {
        let mut m = monitor(3, 2, 4);
        m.request_sp(1);
        for b in 0..3 {
            m.on_sync_read(2, b);
        }
        assert_eq!(m.on_exit_read(9, 0), ExitOutcome::Stalled);
        assert_eq!(m.on_exit_read(9, 3), ExitOutcome::Rejected);
        assert_eq!(m.on_exit_read(9, 1), ExitOutcome::Stalled);
        assert_eq!(m.on_exit_read(10, 2), ExitOutcome::Released(vec![0, 1, 2]));
        assert_eq!(m.state(), &SyncState::Idle);
    }

    #[test]
    fn gather_timeout_is_one_past_budget() {
        let mut m = LockstepMonitor::new(MoonConfig::new(3, 2, 100, 50).unwrap(), 3).unwrap();
        m.request_sp(50);
        m.on_sync_read(51, 0);
        m.on_sync_read(51, 1);
        for c in 50..=150 {
            assert_eq!(m.observe(c, false), None, "cycle {c}");
        }
        assert_eq!(m.observe(151, false), Some(AvailabilityError::GatherTimeout { since: 50 }));
        assert!(m.is_frozen());
        assert!(!m.irq());
        assert_eq!(m.observe(152, false), None);
    }

    #[test]
    fn exec_timeout_counts_from_lockstep_entry() {
        let mut m = LockstepMonitor::new(MoonConfig::new(3, 2, 10, 20).unwrap(), 3).unwrap();
        m.request_sp(1);
        for b in 0..3 {
            m.on_sync_read(4, b);
        }
        assert_eq!(m.observe(24, false), None);
        assert_eq!(m.observe(25, false), Some(AvailabilityError::ExecTimeout { since: 4 }));
    }

    #[test]
    fn no_majority_is_immediate() {
        let mut m = monitor(3, 2, 3);
        assert_eq!(m.observe(200, true), Some(AvailabilityError::NoMajority));
    }

    #[test]
    fn voting_starts_after_entry_cycle() {
        let mut m = monitor(2, 2, 2);
        m.request_sp(1);
        m.on_sync_read(3, 0);
        m.on_sync_read(3, 1);
        assert_eq!(m.voting_ports(3), None);
        assert_eq!(m.voting_ports(4), Some(vec![true, true]));
    }
}
