use std::fmt;

use crate::types::{Height, ProcessId, Round, Value, ValueId, VoteValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Proposal,
    Prevote,
    Precommit,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Proposal => "PROPOSAL",
            MessageKind::Prevote => "PREVOTE",
            MessageKind::Precommit => "PRECOMMIT",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MessageBody {
    /// Only proposals carry the full value.
    Proposal {
        value: Value,
        valid_round: Option<Round>,
    },
    Prevote(VoteValue),
    Precommit(VoteValue),
}

/// An authenticated consensus message. The sender field is trusted: the
/// channel model rules out impersonation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Message {
    pub height: Height,
    pub round: Round,
    pub sender: ProcessId,
    pub body: MessageBody,
}

impl Message {
    pub fn proposal(
        height: Height,
        round: Round,
        sender: ProcessId,
        value: Value,
        valid_round: Option<Round>,
    ) -> Self {
        Message {
            height,
            round,
            sender,
            body: MessageBody::Proposal { value, valid_round },
        }
    }

    pub fn prevote(height: Height, round: Round, sender: ProcessId, vote: VoteValue) -> Self {
        Message {
            height,
            round,
            sender,
            body: MessageBody::Prevote(vote),
        }
    }

    pub fn precommit(height: Height, round: Round, sender: ProcessId, vote: VoteValue) -> Self {
        Message {
            height,
            round,
            sender,
            body: MessageBody::Precommit(vote),
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self.body {
            MessageBody::Proposal { .. } => MessageKind::Proposal,
            MessageBody::Prevote(_) => MessageKind::Prevote,
            MessageBody::Precommit(_) => MessageKind::Precommit,
        }
    }

    /// Vote target for votes; `None` for proposals.
    pub fn vote(&self) -> Option<VoteValue> {
        match self.body {
            MessageBody::Proposal { .. } => None,
            MessageBody::Prevote(v) | MessageBody::Precommit(v) => Some(v),
        }
    }

    /// The value id a message refers to: the proposed value for proposals,
    /// the vote target otherwise (`None` for nil votes).
    pub fn value_id(&self) -> Option<ValueId> {
        match &self.body {
            MessageBody::Proposal { value, .. } => Some(value.id()),
            MessageBody::Prevote(v) | MessageBody::Precommit(v) => v.id(),
        }
    }

    /// A proposal's valid round must precede its own round.
    pub fn is_well_formed(&self) -> bool {
        match &self.body {
            MessageBody::Proposal {
                valid_round: Some(vr),
                ..
            } => *vr < self.round,
            _ => true,
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.body {
            MessageBody::Proposal { value, valid_round } => write!(
                f,
                "<PROPOSAL h={} r={} v={} vr={}> from {}",
                self.height,
                self.round,
                value.id(),
                valid_round.map_or(-1, i64::from),
                self.sender
            ),
            MessageBody::Prevote(v) | MessageBody::Precommit(v) => write!(
                f,
                "<{} h={} r={} {}> from {}",
                self.kind(),
                self.height,
                self.round,
                v,
                self.sender
            ),
        }
    }
}
