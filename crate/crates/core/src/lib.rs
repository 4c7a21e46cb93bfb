//! Cycle-driven simulator of on-demand MooN dynamic lockstep.
//!
//! A set of processing blocks runs independent programs on a shared system
//! bus. On request, a lockstep monitor gathers `N` of them at a rendezvous
//! address, votes on their safe-bus traffic with an `M`-of-`N` majority, and
//! releases them back to their interrupted work. Faults can be injected into
//! any block; the monitor either masks them or drives the system into a
//! permanent safe state.
//!
//! ```
//! use lockstep_sim::{load_scenario, run};
//!
//! let scenario = load_scenario(r#"
//! name = "doc"
//! seed = 1
//! n_blocks = 3
//! max_cycles = 200
//! safe_program = ["write 0x8000 7"]
//! [moon]
//! n_required = 3
//! m_agree = 2
//! t_gather = 20
//! t_exec = 40
//! [[blocks]]
//! program = ["compute 4", "halt"]
//! [[blocks]]
//! program = ["compute 4", "halt"]
//! [[blocks]]
//! program = ["compute 4", "halt"]
//! [[triggers]]
//! cycle = 1
//! source = "external_in_scope"
//! "#).unwrap();
//! let out = run(&scenario, scenario.max_cycles).unwrap();
//! assert_eq!(out.report.final_state, "normal_processing");
//! assert_eq!(out.report.tallies.sessions_completed, 1);
//! ```

pub mod audit;
pub mod block;
pub mod bus;
pub mod fault;
pub mod monitor;
pub mod scenario;
pub mod sweep;
pub mod system;
pub mod trace;

pub use block::{BlockState, Instruction, ProcessingBlock, TriggerSource};
pub use bus::{Address, BusError, BusPort, BusTransaction, MemoryMap, TxKind};
pub use fault::{FaultKind, FaultSpec, FaultWindow};
pub use monitor::{voter, AvailabilityError, LockstepMonitor, MoonConfig, SyncState, VoteMode};
pub use scenario::{load_scenario, load_scenario_file, Scenario, ScenarioError};
pub use system::{run, run_with, Report, RunOutcome, SimError, SystemState, World};
pub use trace::{emit_trace, trace_to_string, Entity, EventKind, TraceEvent, TraceFormat};
