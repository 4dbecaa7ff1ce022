//! Value production and validation hooks.

use serde::{Deserialize, Serialize};

use crate::types::{Height, ProcessId, Round, Value};

/// The replicated service seen from consensus: where proposals come from
/// (`getValue`) and which values may be decided (`valid`).
pub trait Application {
    fn get_value(&mut self, height: Height, round: Round) -> Value;
    fn valid(&self, value: &Value) -> bool;
}

const TAG_MAGIC: &[u8; 2] = b"tv";

/// Payload layout of generated values: magic, height, proposer, nonce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueTag {
    pub height: Height,
    pub proposer: ProcessId,
    pub nonce: u64,
}

impl ValueTag {
    pub const LEN: usize = 2 + 8 + 4 + 8;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(TAG_MAGIC);
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.proposer.0.to_be_bytes());
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out
    }

    pub fn decode(payload: &[u8]) -> Option<Self> {
        if payload.len() != Self::LEN || &payload[..2] != TAG_MAGIC {
            return None;
        }
        Some(ValueTag {
            height: u64::from_be_bytes(payload[2..10].try_into().ok()?),
            proposer: ProcessId(u32::from_be_bytes(payload[10..14].try_into().ok()?)),
            nonce: u64::from_be_bytes(payload[14..22].try_into().ok()?),
        })
    }
}

/// Selectable `valid()` predicates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", deny_unknown_fields)]
pub enum ValidityRule {
    #[default]
    AcceptAll,
    /// Rejects every value generated by `proposer` (and untagged payloads).
    RejectProposer { proposer: ProcessId },
    /// Rejects generated values whose nonce (the round they were created in)
    /// is below `round` (and untagged payloads).
    RejectBelowRound { round: Round },
}

impl ValidityRule {
    pub fn accepts(&self, value: &Value) -> bool {
        match *self {
            ValidityRule::AcceptAll => true,
            ValidityRule::RejectProposer { proposer } => {
                ValueTag::decode(value.payload()).is_some_and(|t| t.proposer != proposer)
            }
            ValidityRule::RejectBelowRound { round } => {
                ValueTag::decode(value.payload()).is_some_and(|t| t.nonce >= round as u64)
            }
        }
    }
}

/// Generates fresh tagged payloads `(height, proposer, round)` and checks
/// them with a [`ValidityRule`].
#[derive(Clone, Debug)]
pub struct TaggedApp {
    pub proposer: ProcessId,
    pub validity: ValidityRule,
}

impl TaggedApp {
    pub fn new(proposer: ProcessId, validity: ValidityRule) -> Self {
        TaggedApp { proposer, validity }
    }
}

impl Application for TaggedApp {
    fn get_value(&mut self, height: Height, round: Round) -> Value {
        Value::new(
            ValueTag {
                height,
                proposer: self.proposer,
                nonce: round as u64,
            }
            .encode(),
        )
    }

    fn valid(&self, value: &Value) -> bool {
        self.validity.accepts(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_roundtrip_and_rules() {
        let mut app = TaggedApp::new(ProcessId(2), ValidityRule::AcceptAll);
        let v = app.get_value(3, 4);
        let tag = ValueTag::decode(v.payload()).unwrap();
        assert_eq!(tag, ValueTag { height: 3, proposer: ProcessId(2), nonce: 4 });
        assert!(app.valid(&v));
        assert!(!ValidityRule::RejectProposer { proposer: ProcessId(2) }.accepts(&v));
        assert!(ValidityRule::RejectProposer { proposer: ProcessId(1) }.accepts(&v));
        assert!(!ValidityRule::RejectBelowRound { round: 5 }.accepts(&v));
        assert!(ValidityRule::RejectBelowRound { round: 4 }.accepts(&v));
        assert!(!ValidityRule::RejectBelowRound { round: 0 }.accepts(&Value::new(b"junk".to_vec())));
    }
}
