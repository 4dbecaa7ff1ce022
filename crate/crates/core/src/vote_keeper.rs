//! Per-process message log with voting-power aggregation.
//!
//! Every received (and sent) message for the current height is stored and
//! tallied. `record` reports each threshold the moment it goes from unmet to
//! met; aggregates only grow, so every [`ThresholdEvent`] is reported at most
//! once.
//!
//! Accounting rules:
//! - a sender counts at most once per `(kind, round)` toward the "any"
//!   aggregate;
//! - toward value aggregates it counts once per distinct value it voted for
//!   ([`VoteCounting::PerValue`], the default) or only for the first value
//!   received ([`VoteCounting::FirstReceived`]);
//! - the first conflicting pair per `(sender, kind, round)` is kept as
//!   [`EquivocationEvidence`];
//! - messages for future heights are buffered (bounded) and replayed when the
//!   log advances; messages for past heights are dropped.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{Message, MessageBody, MessageKind};
use crate::types::{Height, ProcessId, Round, Value, ValueId, VoteValue, VotingPower};
use crate::validator_set::ValidatorSet;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ThresholdEvent {
    ProposalReceived {
        height: Height,
        round: Round,
        proposer: ProcessId,
        value_id: ValueId,
        valid_round: Option<Round>,
    },
    QuorumPrevoteValue {
        height: Height,
        round: Round,
        value_id: ValueId,
    },
    QuorumPrevoteNil {
        height: Height,
        round: Round,
    },
    QuorumPrevoteAny {
        height: Height,
        round: Round,
    },
    QuorumPrecommitValue {
        height: Height,
        round: Round,
        value_id: ValueId,
    },
    QuorumPrecommitAny {
        height: Height,
        round: Round,
    },
    /// Distinct senders with any message at `round` exceed the skip threshold.
    SkipRound {
        height: Height,
        round: Round,
    },
}

impl ThresholdEvent {
    pub fn height(&self) -> Height {
        match *self {
            ThresholdEvent::ProposalReceived { height, .. }
            | ThresholdEvent::QuorumPrevoteValue { height, .. }
            | ThresholdEvent::QuorumPrevoteNil { height, .. }
            | ThresholdEvent::QuorumPrevoteAny { height, .. }
            | ThresholdEvent::QuorumPrecommitValue { height, .. }
            | ThresholdEvent::QuorumPrecommitAny { height, .. }
            | ThresholdEvent::SkipRound { height, .. } => height,
        }
    }

    pub fn round(&self) -> Round {
        match *self {
            ThresholdEvent::ProposalReceived { round, .. }
            | ThresholdEvent::QuorumPrevoteValue { round, .. }
            | ThresholdEvent::QuorumPrevoteNil { round, .. }
            | ThresholdEvent::QuorumPrevoteAny { round, .. }
            | ThresholdEvent::QuorumPrecommitValue { round, .. }
            | ThresholdEvent::QuorumPrecommitAny { round, .. }
            | ThresholdEvent::SkipRound { round, .. } => round,
        }
    }

    /// The point query that holds exactly when this event has fired.
    pub fn condition(&self) -> Condition {
        match *self {
            ThresholdEvent::ProposalReceived {
                round,
                proposer,
                value_id,
                valid_round,
                ..
            } => Condition::Proposal {
                round,
                proposer,
                value_id,
                valid_round,
            },
            ThresholdEvent::QuorumPrevoteValue { round, value_id, .. } => Condition::Quorum {
                kind: MessageKind::Prevote,
                round,
                vote: VoteValue::Id(value_id),
            },
            ThresholdEvent::QuorumPrevoteNil { round, .. } => Condition::Quorum {
                kind: MessageKind::Prevote,
                round,
                vote: VoteValue::Nil,
            },
            ThresholdEvent::QuorumPrevoteAny { round, .. } => Condition::QuorumAny {
                kind: MessageKind::Prevote,
                round,
            },
            ThresholdEvent::QuorumPrecommitValue { round, value_id, .. } => Condition::Quorum {
                kind: MessageKind::Precommit,
                round,
                vote: VoteValue::Id(value_id),
            },
            ThresholdEvent::QuorumPrecommitAny { round, .. } => Condition::QuorumAny {
                kind: MessageKind::Precommit,
                round,
            },
            ThresholdEvent::SkipRound { round, .. } => Condition::Skip { round },
        }
    }
}

/// Point queries over the current height, one per upon-rule condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    /// A proposal for `value_id` with exactly this valid round, from `proposer`.
    Proposal {
        round: Round,
        proposer: ProcessId,
        value_id: ValueId,
        valid_round: Option<Round>,
    },
    Quorum {
        kind: MessageKind,
        round: Round,
        vote: VoteValue,
    },
    QuorumAny {
        kind: MessageKind,
        round: Round,
    },
    Skip {
        round: Round,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivocationEvidence {
    pub sender: ProcessId,
    pub first: Message,
    pub second: Message,
}

/// The proposal and precommits that justified a decision; survives pruning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionCertificate {
    pub height: Height,
    pub round: Round,
    pub proposal: Option<Message>,
    pub precommits: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("message from unknown sender {0}")]
    UnknownSender(ProcessId),
    #[error("malformed message: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PruneError {
    #[error("height {0} has no recorded decision")]
    NotDecided(Height),
}

/// How a sender that votes for several values in one round is counted.
///
/// With `FirstReceived`, two correct processes that saw an equivocator's
/// votes in different orders can disagree forever on whether a quorum
/// exists, even after both received every message.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteCounting {
    /// Every distinct vote a sender cast counts toward its own value. The
    /// sender still counts once toward ANY aggregates.
    #[default]
    PerValue,
    /// Only the first vote received from a sender counts; later conflicting
    /// votes are evidence only.
    FirstReceived,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogConfig {
    /// How many heights ahead of the current one are buffered.
    pub future_heights: u64,
    /// Total buffered messages; the oldest is dropped beyond this.
    pub max_buffered: usize,
    pub counting: VoteCounting,
}

impl Default for LogConfig {
    fn default() -> Self {
        LogConfig {
            future_heights: 2,
            max_buffered: 4096,
            counting: VoteCounting::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProposalEntry {
    pub value: Value,
    pub valid_round: Option<Round>,
}

#[derive(Clone, Debug, Default)]
struct Tally {
    first: BTreeMap<ProcessId, VoteValue>,
    cast: BTreeSet<(ProcessId, VoteValue)>,
    by_value: BTreeMap<VoteValue, VotingPower>,
    any: VotingPower,
}

#[derive(Clone, Debug, Default)]
struct RoundLog {
    proposals: BTreeMap<ProcessId, Vec<ProposalEntry>>,
    prevotes: Tally,
    precommits: Tally,
    senders: BTreeSet<ProcessId>,
    sender_power: VotingPower,
}

impl Tally {
    fn counted(&self, counting: VoteCounting) -> Vec<(ProcessId, VoteValue)> {
        match counting {
            VoteCounting::PerValue => self.cast.iter().copied().collect(),
            VoteCounting::FirstReceived => self.first.iter().map(|(p, v)| (*p, *v)).collect(),
        }
    }
}

impl RoundLog {
    fn tally(&self, kind: MessageKind) -> Option<&Tally> {
        match kind {
            MessageKind::Prevote => Some(&self.prevotes),
            MessageKind::Precommit => Some(&self.precommits),
            MessageKind::Proposal => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MessageLog {
    validators: Arc<ValidatorSet>,
    config: LogConfig,
    height: Height,
    rounds: BTreeMap<Round, RoundLog>,
    precommit_quorums: BTreeSet<(Round, ValueId)>,
    skip_rounds: BTreeSet<Round>,
    buffered: VecDeque<Message>,
    dropped: u64,
    decisions: BTreeMap<Height, (Round, ValueId)>,
    certificates: BTreeMap<Height, DecisionCertificate>,
    evidence: Vec<EquivocationEvidence>,
    evidence_keys: BTreeSet<(ProcessId, MessageKind, Height, Round)>,
}

impl MessageLog {
    pub fn new(validators: Arc<ValidatorSet>) -> Self {
        Self::with_config(validators, LogConfig::default())
    }

    pub fn with_config(validators: Arc<ValidatorSet>, config: LogConfig) -> Self {
        MessageLog {
            validators,
            config,
            height: 0,
            rounds: BTreeMap::new(),
            precommit_quorums: BTreeSet::new(),
            skip_rounds: BTreeSet::new(),
            buffered: VecDeque::new(),
            dropped: 0,
            decisions: BTreeMap::new(),
            certificates: BTreeMap::new(),
            evidence: Vec::new(),
            evidence_keys: BTreeSet::new(),
        }
    }

    pub fn height(&self) -> Height {
        self.height
    }

    pub fn config(&self) -> &LogConfig {
        &self.config
    }

    pub fn validators(&self) -> &Arc<ValidatorSet> {
        &self.validators
    }

    /// Stores `msg` and returns the thresholds it completed.
    ///
    /// Past-height messages are dropped and future-height messages buffered;
    /// both return no events.
    pub fn record(&mut self, msg: Message) -> Result<Vec<ThresholdEvent>, RecordError> {
        if !self.validators.contains(msg.sender) {
            return Err(RecordError::UnknownSender(msg.sender));
        }
        if !msg.is_well_formed() {
            return Err(RecordError::Malformed(msg.to_string()));
        }
        if msg.height < self.height {
            self.dropped += 1;
            return Ok(Vec::new());
        }
        if msg.height > self.height {
            self.buffer(msg);
            return Ok(Vec::new());
        }
        Ok(self.apply(msg))
    }

    fn buffer(&mut self, msg: Message) {
        if msg.height > self.height + self.config.future_heights {
            self.dropped += 1;
            return;
        }
        if self.buffered.len() >= self.config.max_buffered {
            self.buffered.pop_front();
            self.dropped += 1;
        }
        self.buffered.push_back(msg);
    }

    fn apply(&mut self, msg: Message) -> Vec<ThresholdEvent> {
        let mut events = Vec::new();
        let height = self.height;
        let round = msg.round;
        let sender = msg.sender;
        let power = self.validators.power(sender);
        let quorum = self.validators.quorum_power();
        let skip = self.validators.skip_power();
        let entry = self.rounds.entry(round).or_default();

        if entry.senders.insert(sender) {
            let before = entry.sender_power;
            entry.sender_power += power;
            if before < skip && entry.sender_power >= skip {
                self.skip_rounds.insert(round);
                events.push(ThresholdEvent::SkipRound { height, round });
            }
        }

        let mut conflict: Option<Message> = None;
        match &msg.body {
            MessageBody::Proposal { value, valid_round } => {
                let list = entry.proposals.entry(sender).or_default();
                let duplicate = list
                    .iter()
                    .any(|p| p.value.id() == value.id() && p.valid_round == *valid_round);
                if !duplicate {
                    if let Some(first) = list.first() {
                        if first.value.id() != value.id() {
                            conflict = Some(Message::proposal(
                                height,
                                round,
                                sender,
                                first.value.clone(),
                                first.valid_round,
                            ));
                        }
                    }
                    list.push(ProposalEntry {
                        value: value.clone(),
                        valid_round: *valid_round,
                    });
                    events.push(ThresholdEvent::ProposalReceived {
                        height,
                        round,
                        proposer: sender,
                        value_id: value.id(),
                        valid_round: *valid_round,
                    });
                }
            }
            MessageBody::Prevote(vote) | MessageBody::Precommit(vote) => {
                let kind = msg.kind();
                let tally = match kind {
                    MessageKind::Prevote => &mut entry.prevotes,
                    _ => &mut entry.precommits,
                };
                if tally.cast.insert((sender, *vote)) {
                    let is_first = match tally.first.get(&sender) {
                        None => {
                            tally.first.insert(sender, *vote);
                            true
                        }
                        Some(existing) => {
                            conflict = Some(Message {
                                height,
                                round,
                                sender,
                                body: match kind {
                                    MessageKind::Prevote => MessageBody::Prevote(*existing),
                                    _ => MessageBody::Precommit(*existing),
                                },
                            });
                            false
                        }
                    };
                    let crossed_value = if is_first || self.config.counting == VoteCounting::PerValue {
                        let slot = tally.by_value.entry(*vote).or_insert(0);
                        let before = *slot;
                        *slot += power;
                        before < quorum && *slot >= quorum
                    } else {
                        false
                    };
                    let crossed_any = is_first && {
                        let before_any = tally.any;
                        tally.any += power;
                        before_any < quorum && tally.any >= quorum
                    };
                    match (kind, vote, crossed_value) {
                        (MessageKind::Prevote, VoteValue::Id(value_id), true) => {
                            events.push(ThresholdEvent::QuorumPrevoteValue {
                                height,
                                round,
                                value_id: *value_id,
                            })
                        }
                        (MessageKind::Prevote, VoteValue::Nil, true) => {
                            events.push(ThresholdEvent::QuorumPrevoteNil { height, round })
                        }
                        (MessageKind::Precommit, VoteValue::Id(value_id), true) => {
                            self.precommit_quorums.insert((round, *value_id));
                            events.push(ThresholdEvent::QuorumPrecommitValue {
                                height,
                                round,
                                value_id: *value_id,
                            })
                        }
                        _ => {}
                    }
                    if crossed_any {
                        events.push(match kind {
                            MessageKind::Prevote => ThresholdEvent::QuorumPrevoteAny { height, round },
                            _ => ThresholdEvent::QuorumPrecommitAny { height, round },
                        });
                    }
                }
            }
        }

        if let Some(first) = conflict {
            let key = (sender, msg.kind(), height, round);
            if self.evidence_keys.insert(key) {
                self.evidence.push(EquivocationEvidence {
                    sender,
                    first,
                    second: msg,
                });
            }
        }
        events
    }

    pub fn query(&self, condition: Condition) -> bool {
        match condition {
            Condition::Proposal {
                round,
                proposer,
                value_id,
                valid_round,
            } => self
                .proposals(round, proposer)
                .iter()
                .any(|p| p.value.id() == value_id && p.valid_round == valid_round),
            Condition::Quorum { kind, round, vote } => self.has_quorum(kind, round, vote),
            Condition::QuorumAny { kind, round } => self.has_quorum_any(kind, round),
            Condition::Skip { round } => self.has_skip(round),
        }
    }

    /// Distinct proposals from `sender` at `round`, in arrival order.
    pub fn proposals(&self, round: Round, sender: ProcessId) -> &[ProposalEntry] {
        self.rounds
            .get(&round)
            .and_then(|r| r.proposals.get(&sender))
            .map_or(&[], Vec::as_slice)
    }

    pub fn proposal_with_id(
        &self,
        round: Round,
        sender: ProcessId,
        value_id: ValueId,
    ) -> Option<&ProposalEntry> {
        self.proposals(round, sender)
            .iter()
            .find(|p| p.value.id() == value_id)
    }

    /// Power counted toward `vote` for `kind` at `round` under the log's
    /// [`VoteCounting`].
    pub fn vote_power(&self, kind: MessageKind, round: Round, vote: VoteValue) -> VotingPower {
        self.rounds
            .get(&round)
            .and_then(|r| r.tally(kind))
            .and_then(|t| t.by_value.get(&vote).copied())
            .unwrap_or(0)
    }

    pub fn any_power(&self, kind: MessageKind, round: Round) -> VotingPower {
        self.rounds
            .get(&round)
            .and_then(|r| r.tally(kind))
            .map_or(0, |t| t.any)
    }

    /// Power of distinct senders with any message at `round`.
    pub fn round_power(&self, round: Round) -> VotingPower {
        self.rounds.get(&round).map_or(0, |r| r.sender_power)
    }

    pub fn has_quorum(&self, kind: MessageKind, round: Round, vote: VoteValue) -> bool {
        self.validators.is_quorum(self.vote_power(kind, round, vote))
    }

    pub fn has_quorum_any(&self, kind: MessageKind, round: Round) -> bool {
        self.validators.is_quorum(self.any_power(kind, round))
    }

    pub fn has_skip(&self, round: Round) -> bool {
        self.validators.is_skip(self.round_power(round))
    }

    /// `(round, value_id)` pairs with a precommit quorum at the current height.
    pub fn precommit_quorums(&self) -> impl Iterator<Item = (Round, ValueId)> + '_ {
        self.precommit_quorums.iter().copied()
    }

    /// Rounds strictly above `round` that meet the skip threshold, ascending.
    pub fn skip_rounds_above(&self, round: Round) -> impl DoubleEndedIterator<Item = Round> + '_ {
        self.skip_rounds
            .range((std::ops::Bound::Excluded(round), std::ops::Bound::Unbounded))
            .copied()
    }

    /// Every distinct message of the current height, reconstructed from the
    /// tallies.
    pub fn messages(&self) -> Vec<Message> {
        let mut out = Vec::new();
        for (&round, r) in &self.rounds {
            for (&sender, list) in &r.proposals {
                for p in list {
                    out.push(Message::proposal(
                        self.height,
                        round,
                        sender,
                        p.value.clone(),
                        p.valid_round,
                    ));
                }
            }
            for &(sender, v) in &r.prevotes.cast {
                out.push(Message::prevote(self.height, round, sender, v));
            }
            for &(sender, v) in &r.precommits.cast {
                out.push(Message::precommit(self.height, round, sender, v));
            }
        }
        out
    }

    pub fn buffered(&self) -> impl Iterator<Item = &Message> {
        self.buffered.iter()
    }

    /// Messages dropped as stale, too far ahead, or evicted from the buffer.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn evidence(&self) -> &[EquivocationEvidence] {
        &self.evidence
    }

    pub fn certificate(&self, height: Height) -> Option<&DecisionCertificate> {
        self.certificates.get(&height)
    }

    /// Notes that `value_id` was decided at `(height, round)`; required before
    /// [`prune`](Self::prune).
    pub fn record_decision(&mut self, height: Height, round: Round, value_id: ValueId) {
        self.decisions.entry(height).or_insert((round, value_id));
    }

    /// Discards everything for heights up to `decided`, keeping the decision
    /// certificate, then moves to the next height and replays buffered
    /// messages for it. Returns the thresholds completed by the replay.
    /// Pruning an already pruned height is a no-op.
    pub fn prune(&mut self, decided: Height) -> Result<Vec<ThresholdEvent>, PruneError> {
        if decided < self.height {
            return if self.certificates.contains_key(&decided) {
                Ok(Vec::new())
            } else {
                Err(PruneError::NotDecided(decided))
            };
        }
        if decided > self.height {
            return Err(PruneError::NotDecided(decided));
        }
        let &(round, value_id) = self
            .decisions
            .get(&decided)
            .ok_or(PruneError::NotDecided(decided))?;

        let certificate = {
            let r = self.rounds.get(&round);
            let proposal = r.and_then(|r| {
                r.proposals.iter().find_map(|(&sender, list)| {
                    list.iter().find(|p| p.value.id() == value_id).map(|p| {
                        Message::proposal(decided, round, sender, p.value.clone(), p.valid_round)
                    })
                })
            });
            let precommits = r
                .map(|r| {
                    r.precommits
                        .counted(self.config.counting)
                        .into_iter()
                        .filter(|(_, v)| *v == VoteValue::Id(value_id))
                        .map(|(s, v)| Message::precommit(decided, round, s, v))
                        .collect()
                })
                .unwrap_or_default();
            DecisionCertificate {
                height: decided,
                round,
                proposal,
                precommits,
            }
        };
        self.certificates.insert(decided, certificate);

        self.height = decided + 1;
        self.rounds.clear();
        self.precommit_quorums.clear();
        self.skip_rounds.clear();

        let pending = std::mem::take(&mut self.buffered);
        let mut events = Vec::new();
        for msg in pending {
            if msg.height == self.height {
                events.extend(self.apply(msg));
            } else if msg.height > self.height {
                self.buffered.push_back(msg);
            } else {
                self.dropped += 1;
            }
        }
        Ok(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log4() -> MessageLog {
        MessageLog::new(Arc::new(ValidatorSet::uniform(4)))
    }

    fn v(tag: &str) -> Value {
        Value::new(tag.as_bytes().to_vec())
    }

    fn prevote(r: Round, from: u32, vote: VoteValue) -> Message {
        Message::prevote(0, r, ProcessId(from), vote)
    }

    fn precommit(h: Height, r: Round, from: u32, vote: VoteValue) -> Message {
        Message::precommit(h, r, ProcessId(from), vote)
    }

    #[test]
    fn third_prevote_completes_value_and_any_quorum() {
        let mut log = log4();
        let id = VoteValue::Id(v("v").id());
        log.record(prevote(0, 0, id)).unwrap();
        log.record(prevote(0, 1, id)).unwrap();
        let events = log.record(prevote(0, 2, id)).unwrap();
        assert_eq!(
            events,
            vec![
                ThresholdEvent::QuorumPrevoteValue {
                    height: 0,
                    round: 0,
                    value_id: v("v").id()
                },
                ThresholdEvent::QuorumPrevoteAny {
                    height: 0,
                    round: 0
                },
            ]
        );
        // identical re-delivery is idempotent
        assert_eq!(log.record(prevote(0, 2, id)).unwrap(), vec![]);
        assert!(log.evidence().is_empty());
    }

    #[test]
    fn mixed_prevotes_reach_any_but_no_value_quorum() {
        let mut log = log4();
        let mut all = Vec::new();
        all.extend(log.record(prevote(0, 0, VoteValue::Id(v("v").id()))).unwrap());
        all.extend(log.record(prevote(0, 1, VoteValue::Nil)).unwrap());
        all.extend(log.record(prevote(0, 2, VoteValue::Id(v("w").id()))).unwrap());
        assert!(all.contains(&ThresholdEvent::QuorumPrevoteAny { height: 0, round: 0 }));
        assert!(!all
            .iter()
            .any(|e| matches!(e, ThresholdEvent::QuorumPrevoteValue { .. } | ThresholdEvent::QuorumPrevoteNil { .. })));
        assert_eq!(log.any_power(MessageKind::Prevote, 0), 3);
        assert!(!log.has_quorum(MessageKind::Prevote, 0, VoteValue::Id(v("v").id())));
    }

    #[test]
    fn empty_log_answers_false() {
        let log = log4();
        let id = v("v").id();
        for round in 0..3 {
            for kind in [MessageKind::Prevote, MessageKind::Precommit] {
                assert!(!log.query(Condition::Quorum { kind, round, vote: VoteValue::Id(id) }));
                assert!(!log.query(Condition::Quorum { kind, round, vote: VoteValue::Nil }));
                assert!(!log.query(Condition::QuorumAny { kind, round }));
            }
            assert!(!log.query(Condition::Skip { round }));
            assert!(!log.query(Condition::Proposal {
                round,
                proposer: ProcessId(0),
                value_id: id,
                valid_round: None
            }));
        }
    }

    #[test]
    fn precommit_quorum_at_round_two() {
        let mut log = log4();
        let id = VoteValue::Id(v("v").id());
        for p in 0..3 {
            log.record(precommit(0, 2, p, id)).unwrap();
        }
        assert!(log.query(Condition::Quorum {
            kind: MessageKind::Precommit,
            round: 2,
            vote: id
        }));
        assert_eq!(log.precommit_quorums().collect::<Vec<_>>(), vec![(2, v("v").id())]);
    }

    #[test]
    fn two_f_power_is_below_quorum() {
        let mut log = MessageLog::new(Arc::new(ValidatorSet::uniform(7)));
        let id = VoteValue::Id(v("v").id());
        for p in 0..4 {
            log.record(Message::prevote(0, 0, ProcessId(p), id)).unwrap();
        }
        assert!(!log.has_quorum(MessageKind::Prevote, 0, id));
    }

    #[test]
    fn first_received_counting_ignores_later_conflicting_votes() {
        let cfg = LogConfig {
            counting: VoteCounting::FirstReceived,
            ..LogConfig::default()
        };
        let mut log = MessageLog::with_config(Arc::new(ValidatorSet::uniform(4)), cfg);
        let a = VoteValue::Id(v("v").id());
        let b = VoteValue::Id(v("w").id());
        log.record(prevote(0, 3, a)).unwrap();
        log.record(prevote(0, 3, b)).unwrap();
        log.record(prevote(0, 3, VoteValue::Nil)).unwrap();
        assert_eq!(log.evidence().len(), 1);
        let e = &log.evidence()[0];
        assert_eq!(e.sender, ProcessId(3));
        assert_eq!(e.first.vote(), Some(a));
        assert_eq!(e.second.vote(), Some(b));
        assert_eq!(log.vote_power(MessageKind::Prevote, 0, a), 1);
        assert_eq!(log.vote_power(MessageKind::Prevote, 0, b), 0);
        assert_eq!(log.any_power(MessageKind::Prevote, 0), 1);
    }

    #[test]
    fn per_value_counting_lets_a_late_conflicting_vote_complete_a_quorum() {
        let mut log = log4();
        let a = VoteValue::Id(v("v").id());
        log.record(prevote(0, 3, VoteValue::Nil)).unwrap();
        log.record(prevote(0, 0, a)).unwrap();
        log.record(prevote(0, 1, a)).unwrap();
        let events = log.record(prevote(0, 3, a)).unwrap();
        assert_eq!(
            events,
            vec![ThresholdEvent::QuorumPrevoteValue {
                height: 0,
                round: 0,
                value_id: v("v").id()
            }]
        );
        assert_eq!(log.any_power(MessageKind::Prevote, 0), 3);
        assert_eq!(log.evidence().len(), 1);
        // a repeat of either vote changes nothing
        assert_eq!(log.record(prevote(0, 3, VoteValue::Nil)).unwrap(), vec![]);
        assert_eq!(log.record(prevote(0, 3, a)).unwrap(), vec![]);
    }

    #[test]
    fn equivocating_proposals_are_both_kept() {
        let mut log = log4();
        let p = ProcessId(0);
        log.record(Message::proposal(0, 0, p, v("v"), None)).unwrap();
        log.record(Message::proposal(0, 0, p, v("w"), None)).unwrap();
        log.record(Message::proposal(0, 0, p, v("w"), None)).unwrap();
        assert_eq!(log.proposals(0, p).len(), 2);
        assert_eq!(log.evidence().len(), 1);
    }

    #[test]
    fn skip_threshold_is_per_round() {
        let mut log = log4();
        log.record(prevote(2, 1, VoteValue::Nil)).unwrap();
        log.record(prevote(3, 2, VoteValue::Nil)).unwrap();
        assert_eq!(log.skip_rounds_above(0).count(), 0);
        let events = log.record(precommit(0, 2, 3, VoteValue::Nil)).unwrap();
        assert_eq!(events, vec![ThresholdEvent::SkipRound { height: 0, round: 2 }]);
        assert_eq!(log.skip_rounds_above(0).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn rejects_unknown_sender_and_malformed_proposal() {
        let mut log = log4();
        assert_eq!(
            log.record(prevote(0, 9, VoteValue::Nil)),
            Err(RecordError::UnknownSender(ProcessId(9)))
        );
        let bad = Message::proposal(0, 1, ProcessId(1), v("v"), Some(1));
        assert!(matches!(log.record(bad), Err(RecordError::Malformed(_))));
    }

    #[test]
    fn prune_keeps_certificate_and_replays_buffer() {
        let mut log = log4();
        let val = v("v");
        let id = VoteValue::Id(val.id());
        log.record(Message::proposal(0, 0, ProcessId(0), val.clone(), None))
            .unwrap();
        for p in 0..4 {
            log.record(prevote(0, p, id)).unwrap();
            log.record(precommit(0, 0, p, id)).unwrap();
        }
        // buffered for height 1
        log.record(precommit(1, 0, 1, VoteValue::Nil)).unwrap();
        log.record(precommit(1, 0, 2, VoteValue::Nil)).unwrap();
        // beyond the buffer window
        log.record(precommit(5, 0, 2, VoteValue::Nil)).unwrap();

        assert_eq!(log.prune(0), Err(PruneError::NotDecided(0)));
        log.record_decision(0, 0, val.id());
        let events = log.prune(0).unwrap();
        assert_eq!(events, vec![ThresholdEvent::SkipRound { height: 1, round: 0 }]);
        assert_eq!(log.height(), 1);
        let cert = log.certificate(0).unwrap();
        assert_eq!(cert.precommits.len(), 4);
        assert_eq!(cert.proposal.as_ref().and_then(Message::value_id), Some(val.id()));
        assert_eq!(log.messages().len(), 2);
        assert!(log.messages().iter().all(|m| m.height == 1));
        assert_eq!(log.dropped(), 1);

        // idempotent
        assert_eq!(log.prune(0).unwrap(), vec![]);
        assert_eq!(log.height(), 1);
        assert_eq!(log.messages().len(), 2);
        // not decided yet
        assert_eq!(log.prune(1), Err(PruneError::NotDecided(1)));
        // stale
        assert_eq!(log.record(prevote(0, 1, id)).unwrap(), vec![]);
    }

    #[test]
    fn buffer_drops_oldest_when_full() {
        let cfg = LogConfig {
            max_buffered: 2,
            ..LogConfig::default()
        };
        let mut log = MessageLog::with_config(Arc::new(ValidatorSet::uniform(4)), cfg);
        for p in 0..3 {
            log.record(precommit(1, 0, p, VoteValue::Nil)).unwrap();
        }
        let senders: Vec<_> = log.buffered().map(|m| m.sender.0).collect();
        assert_eq!(senders, vec![1, 2]);
        assert_eq!(log.dropped(), 1);
    }
}
