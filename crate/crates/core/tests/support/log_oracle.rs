//! Brute-force recomputation of every message-log threshold from the raw
//! message sequence. Shares nothing with the incremental tallies.

use std::collections::{BTreeMap, BTreeSet};

use tenderbft_core::{
    Message, MessageBody, MessageKind, ProcessId, Round, ThresholdEvent, ValidatorSet, VoteCounting,
    VoteValue,
};

/// Every threshold that holds after receiving `msgs` in order (all at `height`).
pub fn thresholds_met(
    set: &ValidatorSet,
    counting: VoteCounting,
    height: u64,
    msgs: &[Message],
) -> BTreeSet<ThresholdEvent> {
    let mut met = BTreeSet::new();
    let rounds: BTreeSet<Round> = msgs.iter().map(|m| m.round).collect();
    for round in rounds {
        let at_round: Vec<&Message> = msgs.iter().filter(|m| m.round == round).collect();

        let senders: BTreeSet<ProcessId> = at_round.iter().map(|m| m.sender).collect();
        let sender_power: u64 = senders.iter().map(|p| set.power(*p)).sum();
        if sender_power >= set.skip_power() {
            met.insert(ThresholdEvent::SkipRound { height, round });
        }

        for m in &at_round {
            if let MessageBody::Proposal { value, valid_round } = &m.body {
                met.insert(ThresholdEvent::ProposalReceived {
                    height,
                    round,
                    proposer: m.sender,
                    value_id: value.id(),
                    valid_round: *valid_round,
                });
            }
        }

        for kind in [MessageKind::Prevote, MessageKind::Precommit] {
            let mut first: BTreeMap<ProcessId, VoteValue> = BTreeMap::new();
            for m in at_round.iter().filter(|m| m.kind() == kind) {
                first.entry(m.sender).or_insert(m.vote().unwrap());
            }
            let any: u64 = first.keys().map(|p| set.power(*p)).sum();
            if any >= set.quorum_power() {
                met.insert(match kind {
                    MessageKind::Prevote => ThresholdEvent::QuorumPrevoteAny { height, round },
                    _ => ThresholdEvent::QuorumPrecommitAny { height, round },
                });
            }
            // every (sender, target) pair the sender ever cast
            let cast: BTreeSet<(ProcessId, VoteValue)> = at_round
                .iter()
                .filter(|m| m.kind() == kind)
                .map(|m| (m.sender, m.vote().unwrap()))
                .collect();
            let counted: Vec<(ProcessId, VoteValue)> = match counting {
                VoteCounting::FirstReceived => first.iter().map(|(p, v)| (*p, *v)).collect(),
                VoteCounting::PerValue => cast.into_iter().collect(),
            };
            let targets: BTreeSet<VoteValue> = counted.iter().map(|(_, v)| *v).collect();
            for target in targets {
                let power: u64 = counted
                    .iter()
                    .filter(|(_, v)| *v == target)
                    .map(|(p, _)| set.power(*p))
                    .sum();
                if power < set.quorum_power() {
                    continue;
                }
                match (kind, target) {
                    (MessageKind::Prevote, VoteValue::Id(value_id)) => {
                        met.insert(ThresholdEvent::QuorumPrevoteValue { height, round, value_id });
                    }
                    (MessageKind::Prevote, VoteValue::Nil) => {
                        met.insert(ThresholdEvent::QuorumPrevoteNil { height, round });
                    }
                    (MessageKind::Precommit, VoteValue::Id(value_id)) => {
                        met.insert(ThresholdEvent::QuorumPrecommitValue { height, round, value_id });
                    }
                    _ => {}
                }
            }
        }
    }
    met
}

/// For each prefix, the thresholds that became true at that message.
pub fn transitions(
    set: &ValidatorSet,
    counting: VoteCounting,
    height: u64,
    msgs: &[Message],
) -> Vec<BTreeSet<ThresholdEvent>> {
    let mut prev = BTreeSet::new();
    (1..=msgs.len())
        .map(|i| {
            let now = thresholds_met(set, counting, height, &msgs[..i]);
            let fresh = now.difference(&prev).cloned().collect();
            prev = now;
            fresh
        })
        .collect()
}
