//! Deterministic simulator for the consensus core: a partially synchronous
//! gossip network, Byzantine behaviors, traces, replay and property checks.

pub mod adversary;
pub mod checkers;
pub mod fuzz;
pub mod network;
pub mod replay;
pub mod runner;
pub mod scenario;
pub mod trace;

pub use adversary::Behavior;
pub use checkers::{check, check_all, check_some, Checker, Verdict};
pub use replay::{replay, ReplayOutcome};
pub use runner::{run_scenario, RunResult, Simulation};
pub use scenario::{AdversaryEntry, Gst, Scenario, ScenarioError};
pub use trace::{RunStatus, Trace, TraceEvent, TraceRecord};
