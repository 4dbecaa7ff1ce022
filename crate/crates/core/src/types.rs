//! Identifiers and values shared by every layer of the protocol.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Consensus instance index.
pub type Height = u64;

/// Attempt number within a height. "No round" (the `-1` of the protocol
/// variables) is expressed as `Option<Round>::None`, which orders below every
/// `Some(round)`.
pub type Round = u32;

pub type VotingPower = u64;

/// Dense process index in `0..validator_count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// SHA-256 of a value's payload.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueId(pub [u8; 32]);

impl ValueId {
    pub fn of(payload: &[u8]) -> Self {
        ValueId(Sha256::digest(payload).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(ValueId(out))
    }
}

impl fmt::Debug for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ValueId({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex()[..12])
    }
}

/// A proposed value (a block, for a blockchain). Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Value {
    payload: Arc<[u8]>,
    id: ValueId,
}

impl Value {
    pub fn new(payload: impl Into<Vec<u8>>) -> Self {
        let payload: Vec<u8> = payload.into();
        let id = ValueId::of(&payload);
        Value {
            payload: payload.into(),
            id,
        }
    }

    pub fn id(&self) -> ValueId {
        self.id
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Value({}, {} bytes)", self.id, self.payload.len())
    }
}

/// What a PREVOTE or PRECOMMIT is cast for. `Nil` is its own variant rather
/// than a reserved hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VoteValue {
    Nil,
    Id(ValueId),
}

impl VoteValue {
    pub fn id(self) -> Option<ValueId> {
        match self {
            VoteValue::Nil => None,
            VoteValue::Id(id) => Some(id),
        }
    }

    pub fn is_nil(self) -> bool {
        matches!(self, VoteValue::Nil)
    }
}

impl From<ValueId> for VoteValue {
    fn from(id: ValueId) -> Self {
        VoteValue::Id(id)
    }
}

impl fmt::Display for VoteValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VoteValue::Nil => f.write_str("nil"),
            VoteValue::Id(id) => write!(f, "{id}"),
        }
    }
}
