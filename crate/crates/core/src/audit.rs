//! Post-run checks over a trace. Used by the CLI to turn protocol or
//! ordering violations into a distinct exit status.

use std::collections::BTreeMap;

use crate::system::SystemState;
use crate::trace::{Entity, EventKind, TraceEvent};

/// Events are totally ordered by `(cycle, phase, entity)`.
pub fn check_order(trace: &[TraceEvent]) -> Result<(), String> {
    for pair in trace.windows(2) {
        if pair[0].order_key() > pair[1].order_key() {
            return Err(format!(
                "event order broken at cycle {}: {} ({}) after {} ({})",
                pair[1].cycle, pair[1].kind, pair[1].entity, pair[0].kind, pair[0].entity
            ));
        }
    }
    Ok(())
}

/// System states visited, in order, starting with `Boot`.
pub fn system_path(trace: &[TraceEvent]) -> Vec<SystemState> {
    let mut path = vec![SystemState::Boot];
    for e in trace {
        if e.entity == Entity::System && e.kind == EventKind::StateChange {
            if let Some(to) = e.get("to").and_then(|v| v.as_str()).and_then(SystemState::from_name) {
                path.push(to);
            }
        }
    }
    path
}

/// Every system-state change follows an arc of the automaton, and nothing
/// but the terminal marker follows entry into the safe state.
pub fn check_system_path(trace: &[TraceEvent]) -> Result<(), String> {
    let path = system_path(trace);
    for w in path.windows(2) {
        if !w[0].can_transition(w[1]) {
            return Err(format!("illegal system transition {} -> {}", w[0], w[1]));
        }
    }
    if let Some(pos) = trace.iter().position(|e| {
        e.entity == Entity::System
            && e.kind == EventKind::StateChange
            && e.get("to").and_then(|v| v.as_str()) == Some("safe_state")
    }) {
        let tail = &trace[pos + 1..];
        let only_marker =
            tail.is_empty() || (tail.len() == 1 && tail[0].entity == Entity::System && tail[0].kind == EventKind::Halt);
        if !only_marker {
            return Err(format!("{} event(s) after entering the safe state", tail.len()));
        }
    }
    Ok(())
}

/// Sync-read bookkeeping of one block in one session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReadCount {
    pub reads: u32,
    pub accepted: bool,
    pub rejected: bool,
    pub released: bool,
}

/// Counts sync-address reads per `(session, block)`. An entry read is
/// attributed to the session named in its accept/reject reply.
pub fn read_counts(trace: &[TraceEvent]) -> BTreeMap<(u64, usize), ReadCount> {
    let mut counts: BTreeMap<(u64, usize), ReadCount> = BTreeMap::new();
    let mut session_of: BTreeMap<usize, u64> = BTreeMap::new();
    let session = |e: &TraceEvent| e.get("session").and_then(|v| v.as_int()).unwrap_or(0);
    for e in trace {
        let Some(b) = e.block() else { continue };
        match e.kind {
            EventKind::Accept => {
                let s = session(e);
                session_of.insert(b, s);
                let c = counts.entry((s, b)).or_default();
                c.reads += 1;
                c.accepted = true;
            }
            EventKind::Reject => {
                let c = counts.entry((session(e), b)).or_default();
                c.reads += 1;
                c.rejected = true;
            }
            EventKind::ExitRead => {
                if let Some(&s) = session_of.get(&b) {
                    counts.entry((s, b)).or_default().reads += 1;
                }
            }
            EventKind::Release => {
                counts.entry((session(e), b)).or_default().released = true;
                session_of.remove(&b);
            }
            _ => {}
        }
    }
    counts
}

/// Accepted blocks read the sync address twice per completed session,
/// rejected blocks once.
pub fn check_read_counts(trace: &[TraceEvent]) -> Result<(), String> {
    for ((s, b), c) in read_counts(trace) {
        if c.accepted && c.rejected {
            return Err(format!("block {b} both accepted and rejected in session {s}"));
        }
        if c.accepted && c.released && c.reads != 2 {
            return Err(format!("accepted block {b} made {} sync reads in session {s}", c.reads));
        }
        if c.accepted && c.reads > 2 {
            return Err(format!("accepted block {b} made {} sync reads in session {s}", c.reads));
        }
        if c.rejected && c.reads != 1 {
            return Err(format!("rejected block {b} made {} sync reads in session {s}", c.reads));
        }
    }
    Ok(())
}

pub fn check_all(trace: &[TraceEvent]) -> Result<(), String> {
    check_order(trace)?;
    check_system_path(trace)?;
    check_read_counts(trace)
}
