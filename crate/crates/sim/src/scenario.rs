//! Scenario files (TOML).
//!
//! ```toml
//! seed = 7
//! heights = 3
//! rule_order = "fixed"          # or "random"
//!
//! [validators]
//! powers = [1, 1, 1, 1]
//! max_faulty = 1
//!
//! [network]
//! gst = 0                       # or "never"
//! delta = 10
//!
//! [timeouts]
//! propose = 50
//! prevote = 25
//! precommit = 25
//! delta = 5
//!
//! [[adversary]]
//! process = 3
//! behavior = "equivocating-proposer"
//! ```
//!
//! `docs/scenario-format.md` documents every key.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use tenderbft_core::{
    Duration, LogConfig, ProcessId, ProposerPolicy, Time, TimeoutConfig, ValidatorSet,
    ValidatorSetError, ValidityRule, VoteCounting, VotingPower,
};

use crate::adversary::Behavior;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid validator set: {0}")]
    Validators(#[from] ValidatorSetError),
    #[error("invalid timeouts: {0}")]
    Timeouts(#[from] tenderbft_core::timeout::TimeoutConfigError),
    #[error("network delta must be positive")]
    ZeroDelta,
    #[error("heights must be positive")]
    ZeroHeights,
    #[error("seed {0} does not fit in a TOML integer (max {max})", max = i64::MAX)]
    SeedOutOfRange(u64),
    #[error("adversary names unknown process {0}")]
    UnknownProcess(ProcessId),
    #[error("process {0} is listed as an adversary twice")]
    DuplicateAdversary(ProcessId),
    #[error("byzantine power {power} exceeds max_faulty {max_faulty}")]
    TooMuchByzantinePower {
        power: VotingPower,
        max_faulty: VotingPower,
    },
    #[error("adversary behavior `delayed-release` needs a positive `bound`")]
    MissingBound,
    #[error("`bound` is only meaningful for `delayed-release`")]
    UnexpectedBound,
}

/// Global stabilization time: a finite instant or never.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GstRepr", into = "GstRepr")]
pub enum Gst {
    At(Time),
    Never,
}

impl Gst {
    pub fn time(self) -> Option<Time> {
        match self {
            Gst::At(t) => Some(t),
            Gst::Never => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GstRepr {
    At(Time),
    Word(String),
}

impl TryFrom<GstRepr> for Gst {
    type Error = String;

    fn try_from(r: GstRepr) -> Result<Self, String> {
        match r {
            GstRepr::At(t) => Ok(Gst::At(t)),
            GstRepr::Word(w) if w == "never" => Ok(Gst::Never),
            GstRepr::Word(w) => Err(format!("gst must be an integer or \"never\", got `{w}`")),
        }
    }
}

impl From<Gst> for GstRepr {
    fn from(g: Gst) -> Self {
        match g {
            Gst::At(t) => GstRepr::At(t),
            Gst::Never => GstRepr::Word("never".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleOrderName {
    #[default]
    Fixed,
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidatorsSection {
    pub powers: Vec<VotingPower>,
    pub max_faulty: VotingPower,
    #[serde(default)]
    pub proposer: ProposerPolicy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub gst: Gst,
    pub delta: Duration,
    /// Chance, per thousand, that a delivery is duplicated.
    #[serde(default)]
    pub duplicate_permille: u32,
    /// Before GST, drop-and-redeliver: originals sent before GST arrive in
    /// `[gst, gst + delta)`.
    #[serde(default)]
    pub lossy_pre_gst: bool,
    /// Largest delay used when `gst = "never"`. Defaults to `10 * delta`.
    #[serde(default)]
    pub async_max_delay: Option<Duration>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    /// Liveness budget in rounds per height.
    #[serde(default = "default_liveness_rounds")]
    pub liveness_rounds: u32,
    #[serde(default = "default_future_heights")]
    pub future_heights: u64,
    #[serde(default = "default_max_buffered")]
    pub max_buffered: usize,
    /// Messages a Byzantine process may send per (height, round).
    #[serde(default = "default_adversary_sends")]
    pub adversary_sends_per_round: u32,
}

fn default_liveness_rounds() -> u32 {
    50
}
fn default_future_heights() -> u64 {
    LogConfig::default().future_heights
}
fn default_max_buffered() -> usize {
    LogConfig::default().max_buffered
}
fn default_adversary_sends() -> u32 {
    16
}

impl Default for LimitsSection {
    fn default() -> Self {
        LimitsSection {
            liveness_rounds: default_liveness_rounds(),
            future_heights: default_future_heights(),
            max_buffered: default_max_buffered(),
            adversary_sends_per_round: default_adversary_sends(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryEntry {
    pub process: ProcessId,
    pub behavior: BehaviorName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<Duration>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorName {
    Silent,
    EquivocatingProposer,
    ConflictingVoter,
    RandomGarbage,
    DelayedRelease,
}

impl AdversaryEntry {
    pub fn behavior(&self) -> Result<Behavior, ScenarioError> {
        match (self.behavior, self.bound) {
            (BehaviorName::DelayedRelease, Some(b)) if b > 0 => {
                Ok(Behavior::DelayedRelease { bound: b })
            }
            (BehaviorName::DelayedRelease, _) => Err(ScenarioError::MissingBound),
            (_, Some(_)) => Err(ScenarioError::UnexpectedBound),
            (BehaviorName::Silent, None) => Ok(Behavior::Silent),
            (BehaviorName::EquivocatingProposer, None) => Ok(Behavior::EquivocatingProposer),
            (BehaviorName::ConflictingVoter, None) => Ok(Behavior::ConflictingVoter),
            (BehaviorName::RandomGarbage, None) => Ok(Behavior::RandomGarbage),
        }
    }

    pub fn new(process: ProcessId, behavior: Behavior) -> Self {
        let (name, bound) = match behavior {
            Behavior::Silent => (BehaviorName::Silent, None),
            Behavior::EquivocatingProposer => (BehaviorName::EquivocatingProposer, None),
            Behavior::ConflictingVoter => (BehaviorName::ConflictingVoter, None),
            Behavior::RandomGarbage => (BehaviorName::RandomGarbage, None),
            Behavior::DelayedRelease { bound } => (BehaviorName::DelayedRelease, Some(bound)),
        };
        AdversaryEntry {
            process,
            behavior: name,
            bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub heights: u64,
    #[serde(default)]
    pub rule_order: RuleOrderName,
    #[serde(default)]
    pub vote_counting: VoteCounting,
    pub validators: ValidatorsSection,
    pub network: NetworkSection,
    #[serde(default)]
    pub timeouts: TimeoutConfig,
    #[serde(default)]
    pub validity: ValidityRule,
    #[serde(default)]
    pub limits: LimitsSection,
    #[serde(default)]
    pub adversary: Vec<AdversaryEntry>,
}

impl Scenario {
    /// A fault-free scenario with unit powers and the default limits.
    pub fn basic(n: usize, seed: u64) -> Self {
        Scenario {
            seed,
            heights: 1,
            rule_order: RuleOrderName::Fixed,
            vote_counting: VoteCounting::default(),
            validators: ValidatorsSection {
                powers: vec![1; n],
                max_faulty: (n as u64).saturating_sub(1) / 3,
                proposer: ProposerPolicy::default(),
            },
            network: NetworkSection {
                gst: Gst::At(0),
                delta: 10,
                duplicate_permille: 0,
                lossy_pre_gst: false,
                async_max_delay: None,
            },
            timeouts: TimeoutConfig {
                propose: 50,
                prevote: 25,
                precommit: 25,
                delta: 5,
            },
            validity: ValidityRule::AcceptAll,
            limits: LimitsSection::default(),
            adversary: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let set = self.validator_set()?;
        self.timeouts.validate()?;
        if self.network.delta == 0 {
            return Err(ScenarioError::ZeroDelta);
        }
        if self.heights == 0 {
            return Err(ScenarioError::ZeroHeights);
        }
        if i64::try_from(self.seed).is_err() {
            return Err(ScenarioError::SeedOutOfRange(self.seed));
        }
        let mut seen = Vec::new();
        for a in &self.adversary {
            if !set.contains(a.process) {
                return Err(ScenarioError::UnknownProcess(a.process));
            }
            if seen.contains(&a.process) {
                return Err(ScenarioError::DuplicateAdversary(a.process));
            }
            seen.push(a.process);
            a.behavior()?;
        }
        let power = set.power_of(&seen);
        if power > set.max_faulty_power() {
            return Err(ScenarioError::TooMuchByzantinePower {
                power,
                max_faulty: set.max_faulty_power(),
            });
        }
        Ok(())
    }

    pub fn validator_set(&self) -> Result<Arc<ValidatorSet>, ValidatorSetError> {
        Ok(Arc::new(
            ValidatorSet::new(self.validators.powers.clone(), self.validators.max_faulty)?
                .with_policy(self.validators.proposer),
        ))
    }

    pub fn is_byzantine(&self, p: ProcessId) -> bool {
        self.adversary.iter().any(|a| a.process == p)
    }

    pub fn correct(&self) -> Vec<ProcessId> {
        (0..self.validators.powers.len() as u32)
            .map(ProcessId)
            .filter(|p| !self.is_byzantine(*p))
            .collect()
    }

    pub fn log_config(&self) -> LogConfig {
        LogConfig {
            future_heights: self.limits.future_heights,
            max_buffered: self.limits.max_buffered,
            counting: self.vote_counting,
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Simulated time after which a run counts as a liveness failure:
    /// `gst + heights * sum_{r < K} (tp(r) + tv(r) + tc(r) + 4 delta)`
    /// with `K = liveness_rounds`.
    pub fn time_cap(&self) -> Time {
        let t = &self.timeouts;
        let d = self.network.delta;
        let per_height: Time = (0..self.limits.liveness_rounds)
            .map(|r| t.propose(r) + t.prevote(r) + t.precommit(r) + 4 * d)
            .sum();
        let start = match self.network.gst {
            Gst::At(g) => g,
            Gst::Never => 0,
        };
        start + self.heights * per_height
    }
}
