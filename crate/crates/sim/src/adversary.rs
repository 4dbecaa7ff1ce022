//! Byzantine behaviors.
//!
//! Every Byzantine process except a silent one runs an honest shadow node
//! and feeds its broadcasts through [`Adversary::transform`], which decides
//! what actually goes on the wire, to whom, and after what delay.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tenderbft_core::{
    Duration, Height, Message, MessageBody, MessageLog, ProcessId, Round, Value, ValueId, ValueTag,
    VoteValue,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Behavior {
    /// Sends nothing.
    Silent,
    /// Sends two different proposals to disjoint halves of the others.
    EquivocatingProposer,
    /// Sends two different votes of each kind to disjoint halves.
    ConflictingVoter,
    /// Replaces its output with random well-formed messages.
    RandomGarbage,
    /// Behaves honestly but holds every message back by up to `bound`.
    DelayedRelease { bound: Duration },
}

impl Behavior {
    pub const NAMES: [&'static str; 5] = [
        "silent",
        "equivocating-proposer",
        "conflicting-voter",
        "random-garbage",
        "delayed-release",
    ];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Silent => Self::NAMES[0],
            Behavior::EquivocatingProposer => Self::NAMES[1],
            Behavior::ConflictingVoter => Self::NAMES[2],
            Behavior::RandomGarbage => Self::NAMES[3],
            Behavior::DelayedRelease { .. } => Self::NAMES[4],
        }
    }
}

/// One outgoing Byzantine send.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Send {
    pub msg: Message,
    pub to: Vec<ProcessId>,
    pub delay: Duration,
}

#[derive(Clone, Debug)]
pub struct Adversary {
    id: ProcessId,
    behavior: Behavior,
    n: usize,
    rng: ChaCha8Rng,
    sent: BTreeMap<(Height, Round), u32>,
    send_cap: u32,
    future_heights: u64,
}

impl Adversary {
    pub fn new(
        id: ProcessId,
        behavior: Behavior,
        n: usize,
        seed: u64,
        send_cap: u32,
        future_heights: u64,
    ) -> Self {
        Adversary {
            id,
            behavior,
            n,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xad5e_u64.wrapping_mul(u64::from(id.0) + 1)),
            sent: BTreeMap::new(),
            send_cap,
            future_heights,
        }
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    fn others(&self) -> Vec<ProcessId> {
        (0..self.n as u32)
            .map(ProcessId)
            .filter(|p| *p != self.id)
            .collect()
    }

    /// Splits the other processes into two disjoint, randomly chosen halves.
    fn halves(&mut self) -> (Vec<ProcessId>, Vec<ProcessId>) {
        let mut others = self.others();
        others.shuffle(&mut self.rng);
        let second = others.split_off(others.len() / 2);
        (others, second)
    }

    /// What to put on the wire in place of the shadow's broadcast `honest`.
    /// `log` is the shadow's message log, used to pick plausible conflicting
    /// values.
    pub fn transform(&mut self, honest: &Message, log: &MessageLog) -> Vec<Send> {
        let sends = match self.behavior {
            Behavior::Silent => Vec::new(),
            Behavior::DelayedRelease { bound } => vec![Send {
                msg: honest.clone(),
                to: self.others(),
                delay: self.rng.gen_range(0..=bound),
            }],
            Behavior::EquivocatingProposer => match &honest.body {
                MessageBody::Proposal { value, valid_round } => {
                    let other = self.fabricate_value(honest.height, honest.round, value);
                    let (a, b) = self.halves();
                    vec![
                        Send {
                            msg: honest.clone(),
                            to: a,
                            delay: 0,
                        },
                        Send {
                            msg: Message::proposal(
                                honest.height,
                                honest.round,
                                self.id,
                                other,
                                *valid_round,
                            ),
                            to: b,
                            delay: 0,
                        },
                    ]
                }
                _ => vec![Send {
                    msg: honest.clone(),
                    to: self.others(),
                    delay: 0,
                }],
            },
            Behavior::ConflictingVoter => match honest.vote() {
                Some(vote) => {
                    let alt = self.conflicting_vote(vote, honest.round, log);
                    let twin = Message {
                        body: match honest.body {
                            MessageBody::Prevote(_) => MessageBody::Prevote(alt),
                            _ => MessageBody::Precommit(alt),
                        },
                        ..honest.clone()
                    };
                    let (a, b) = self.halves();
                    vec![
                        Send {
                            msg: honest.clone(),
                            to: a,
                            delay: 0,
                        },
                        Send {
                            msg: twin,
                            to: b,
                            delay: 0,
                        },
                    ]
                }
                None => vec![Send {
                    msg: honest.clone(),
                    to: self.others(),
                    delay: 0,
                }],
            },
            Behavior::RandomGarbage => {
                let count = self.rng.gen_range(1..=3);
                (0..count).map(|_| self.garbage(honest, log)).collect()
            }
        };
        sends
            .into_iter()
            .filter(|s| !s.to.is_empty())
            .filter(|s| self.charge(s.msg.height, s.msg.round))
            .collect()
    }

    fn charge(&mut self, height: Height, round: Round) -> bool {
        let used = self.sent.entry((height, round)).or_insert(0);
        if *used >= self.send_cap {
            return false;
        }
        *used += 1;
        true
    }

    fn fabricate_value(&mut self, height: Height, round: Round, avoid: &Value) -> Value {
        loop {
            let v = Value::new(
                ValueTag {
                    height,
                    proposer: self.id,
                    nonce: u64::from(round) + self.rng.gen_range(1..1_000_000u64),
                }
                .encode(),
            );
            if v.id() != avoid.id() {
                return v;
            }
        }
    }

    fn known_ids(&self, round: Round, log: &MessageLog) -> Vec<ValueId> {
        let mut ids: Vec<ValueId> = (0..self.n as u32)
            .flat_map(|p| log.proposals(round, ProcessId(p)).iter().map(|e| e.value.id()))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    fn conflicting_vote(&mut self, vote: VoteValue, round: Round, log: &MessageLog) -> VoteValue {
        let candidates: Vec<ValueId> = self
            .known_ids(round, log)
            .into_iter()
            .filter(|id| vote.id() != Some(*id))
            .collect();
        match (vote, candidates.choose(&mut self.rng)) {
            (_, Some(id)) if self.rng.gen_bool(0.5) || vote.is_nil() => VoteValue::Id(*id),
            (VoteValue::Id(_), _) => VoteValue::Nil,
            (VoteValue::Nil, _) => VoteValue::Id(ValueId(self.rng.gen())),
        }
    }

    fn garbage(&mut self, honest: &Message, log: &MessageLog) -> Send {
        let height = honest.height + self.rng.gen_range(0..=self.future_heights);
        let round = self.rng.gen_range(0..=honest.round + 2);
        let known = self.known_ids(honest.round, log);
        let vote = match self.rng.gen_range(0..3) {
            0 => VoteValue::Nil,
            1 if !known.is_empty() => VoteValue::Id(known[self.rng.gen_range(0..known.len())]),
            _ => VoteValue::Id(ValueId(self.rng.gen())),
        };
        let msg = match self.rng.gen_range(0..3) {
            0 => {
                let value = if self.rng.gen_bool(0.5) {
                    self.fabricate_value(height, round, &Value::new(Vec::new()))
                } else {
                    let len = self.rng.gen_range(0..24);
                    Value::new((0..len).map(|_| self.rng.gen()).collect::<Vec<u8>>())
                };
                let valid_round = if round > 0 && self.rng.gen_bool(0.5) {
                    Some(self.rng.gen_range(0..round))
                } else {
                    None
                };
                Message::proposal(height, round, self.id, value, valid_round)
            }
            1 => Message::prevote(height, round, self.id, vote),
            _ => Message::precommit(height, round, self.id, vote),
        };
        let mut to = self.others();
        to.shuffle(&mut self.rng);
        let keep = self.rng.gen_range(1..=to.len().max(1));
        to.truncate(keep);
        to.sort();
        Send { msg, to, delay: 0 }
    }
}
