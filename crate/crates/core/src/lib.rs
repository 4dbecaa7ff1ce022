//! Tendermint BFT consensus as a pure, event-driven state machine.
//!
//! - [`validator_set`]: voting powers, quorum/skip thresholds, proposer selection.
//! - [`vote_keeper`]: the per-process message log and threshold detection.
//! - [`consensus`]: the per-process state machine ([`Node`]).
//!
//! Nothing here touches clocks, sockets or threads; the `tenderbft-sim`
//! crate drives nodes over a simulated network.

pub mod app;
pub mod consensus;
pub mod message;
pub mod state;
pub mod timeout;
pub mod types;
pub mod validator_set;
pub mod vote_keeper;

pub use app::{Application, TaggedApp, ValidityRule, ValueTag};
pub use consensus::{Anomaly, Input, Node, NodeConfig, Output, Rule, RuleOrder};
pub use message::{Message, MessageBody, MessageKind};
pub use state::{ProcessState, RoundValue, StateSnapshot, Step};
pub use timeout::{Duration, Time, Timeout, TimeoutConfig, TimeoutKind};
pub use types::{Height, ProcessId, Round, Value, ValueId, VoteValue, VotingPower};
pub use validator_set::{ProposerPolicy, ProposerSchedule, ValidatorSet, ValidatorSetError};
pub use vote_keeper::{
    Condition, DecisionCertificate, EquivocationEvidence, LogConfig, MessageLog, ThresholdEvent,
    VoteCounting,
};
