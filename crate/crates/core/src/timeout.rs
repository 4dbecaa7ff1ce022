use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Height, Round};

/// Logical time in ticks.
pub type Time = u64;
pub type Duration = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeoutKind {
    Propose,
    Prevote,
    Precommit,
}

impl TimeoutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeoutKind::Propose => "propose",
            TimeoutKind::Prevote => "prevote",
            TimeoutKind::Precommit => "precommit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "propose" => Some(TimeoutKind::Propose),
            "prevote" => Some(TimeoutKind::Prevote),
            "precommit" => Some(TimeoutKind::Precommit),
            _ => None,
        }
    }
}

impl fmt::Display for TimeoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timeout {
    pub kind: TimeoutKind,
    pub height: Height,
    pub round: Round,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("timeout `{0}` must be strictly positive")]
pub struct TimeoutConfigError(pub &'static str);

/// Per-round timeouts grow linearly: `init + round * delta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeoutConfig {
    pub propose: Duration,
    pub prevote: Duration,
    pub precommit: Duration,
    pub delta: Duration,
}

impl Default for TimeoutConfig {
    fn default() -> Self {
        TimeoutConfig {
            propose: 30,
            prevote: 25,
            precommit: 25,
            delta: 5,
        }
    }
}

impl TimeoutConfig {
    pub fn validate(&self) -> Result<(), TimeoutConfigError> {
        for (name, v) in [
            ("propose", self.propose),
            ("prevote", self.prevote),
            ("precommit", self.precommit),
            ("delta", self.delta),
        ] {
            if v == 0 {
                return Err(TimeoutConfigError(name));
            }
        }
        Ok(())
    }

    pub fn duration(&self, kind: TimeoutKind, round: Round) -> Duration {
        let init = match kind {
            TimeoutKind::Propose => self.propose,
            TimeoutKind::Prevote => self.prevote,
            TimeoutKind::Precommit => self.precommit,
        };
        init + round as Duration * self.delta
    }

    pub fn propose(&self, round: Round) -> Duration {
        self.duration(TimeoutKind::Propose, round)
    }

    pub fn prevote(&self, round: Round) -> Duration {
        self.duration(TimeoutKind::Prevote, round)
    }

    pub fn precommit(&self, round: Round) -> Duration {
        self.duration(TimeoutKind::Precommit, round)
    }
}
