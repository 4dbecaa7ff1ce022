use std::collections::BTreeMap;
use std::fmt;

use crate::types::{Height, Round, Value, ValueId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    Propose,
    Prevote,
    Precommit,
}

impl Step {
    pub fn as_str(self) -> &'static str {
        match self {
            Step::Propose => "propose",
            Step::Prevote => "prevote",
            Step::Precommit => "precommit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "propose" => Some(Step::Propose),
            "prevote" => Some(Step::Prevote),
            "precommit" => Some(Step::Precommit),
            _ => None,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A value together with the round it was recorded in. Used for both the
/// lock and the valid value; absence stands for `nil` / `-1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundValue {
    pub value: Value,
    pub round: Round,
}

/// The protocol variables of one process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessState {
    pub height: Height,
    pub round: Round,
    pub step: Step,
    pub locked: Option<RoundValue>,
    pub valid: Option<RoundValue>,
    pub decisions: BTreeMap<Height, Value>,
}

impl Default for ProcessState {
    fn default() -> Self {
        ProcessState {
            height: 0,
            round: 0,
            step: Step::Propose,
            locked: None,
            valid: None,
            decisions: BTreeMap::new(),
        }
    }
}

impl ProcessState {
    pub fn locked_round(&self) -> Option<Round> {
        self.locked.as_ref().map(|l| l.round)
    }

    pub fn locked_value(&self) -> Option<&Value> {
        self.locked.as_ref().map(|l| &l.value)
    }

    pub fn valid_round(&self) -> Option<Round> {
        self.valid.as_ref().map(|l| l.round)
    }

    pub fn valid_value(&self) -> Option<&Value> {
        self.valid.as_ref().map(|l| &l.value)
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            height: self.height,
            round: self.round,
            step: self.step,
            locked: self.locked.as_ref().map(|l| (l.round, l.value.id())),
            valid: self.valid.as_ref().map(|l| (l.round, l.value.id())),
        }
    }
}

/// The observable part of [`ProcessState`] recorded in traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateSnapshot {
    pub height: Height,
    pub round: Round,
    pub step: Step,
    pub locked: Option<(Round, ValueId)>,
    pub valid: Option<(Round, ValueId)>,
}

impl StateSnapshot {
    pub fn locked_round(&self) -> Option<Round> {
        self.locked.map(|(r, _)| r)
    }

    pub fn valid_round(&self) -> Option<Round> {
        self.valid.map(|(r, _)| r)
    }
}
