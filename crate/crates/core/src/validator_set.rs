//! Process identities, voting power thresholds and proposer selection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Height, ProcessId, Round, VotingPower};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidatorSetError {
    #[error("validator set is empty")]
    Empty,
    #[error("total voting power is zero")]
    ZeroTotalPower,
    #[error("n > 3f violated: total power {total} is not greater than 3 * {max_faulty}")]
    TooManyFaulty {
        total: VotingPower,
        max_faulty: VotingPower,
    },
    #[error("total voting power overflows")]
    Overflow,
}

/// How the proposer of a round is chosen. Only one policy exists today.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposerPolicy {
    #[default]
    WeightedRoundRobin,
}

/// A fixed set of validators with their voting powers and the fault budget `f`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatorSet {
    powers: Vec<VotingPower>,
    total: VotingPower,
    max_faulty: VotingPower,
    policy: ProposerPolicy,
}

impl ValidatorSet {
    pub fn new(powers: Vec<VotingPower>, max_faulty: VotingPower) -> Result<Self, ValidatorSetError> {
        if powers.is_empty() {
            return Err(ValidatorSetError::Empty);
        }
        let total = powers
            .iter()
            .try_fold(0u64, |acc, p| acc.checked_add(*p))
            .ok_or(ValidatorSetError::Overflow)?;
        if total == 0 {
            return Err(ValidatorSetError::ZeroTotalPower);
        }
        // Keeps 2 * total in range for the threshold arithmetic.
        if total > u64::MAX / 4 {
            return Err(ValidatorSetError::Overflow);
        }
        if total <= max_faulty.saturating_mul(3) {
            return Err(ValidatorSetError::TooManyFaulty { total, max_faulty });
        }
        Ok(ValidatorSet {
            powers,
            total,
            max_faulty,
            policy: ProposerPolicy::default(),
        })
    }

    /// Equal unit powers with the largest `f` such that `n > 3f`.
    pub fn uniform(n: usize) -> Self {
        let f = (n as u64 - 1) / 3;
        Self::new(vec![1; n], f).expect("uniform validator set is valid")
    }

    pub fn with_policy(mut self, policy: ProposerPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn total_power(&self) -> VotingPower {
        self.total
    }

    pub fn max_faulty_power(&self) -> VotingPower {
        self.max_faulty
    }

    pub fn policy(&self) -> ProposerPolicy {
        self.policy
    }

    pub fn contains(&self, p: ProcessId) -> bool {
        p.index() < self.powers.len()
    }

    /// Voting power of `p`, zero for unknown processes.
    pub fn power(&self, p: ProcessId) -> VotingPower {
        self.powers.get(p.index()).copied().unwrap_or(0)
    }

    pub fn powers(&self) -> &[VotingPower] {
        &self.powers
    }

    pub fn ids(&self) -> impl Iterator<Item = ProcessId> + '_ {
        (0..self.powers.len() as u32).map(ProcessId)
    }

    /// Aggregate power of a set of processes, counting each at most once.
    pub fn power_of<'a>(&self, members: impl IntoIterator<Item = &'a ProcessId>) -> VotingPower {
        let mut seen = vec![false; self.powers.len()];
        let mut sum = 0;
        for p in members {
            if let Some(slot) = seen.get_mut(p.index()) {
                if !*slot {
                    *slot = true;
                    sum += self.powers[p.index()];
                }
            }
        }
        sum
    }

    /// Smallest power strictly greater than two thirds of the total (`2f+1`
    /// when the total is `3f+1`).
    pub fn quorum_power(&self) -> VotingPower {
        2 * self.total / 3 + 1
    }

    /// Smallest power strictly greater than one third of the total (`f+1`
    /// when the total is `3f+1`).
    pub fn skip_power(&self) -> VotingPower {
        self.total / 3 + 1
    }

    pub fn is_quorum(&self, power: VotingPower) -> bool {
        power >= self.quorum_power()
    }

    pub fn is_skip(&self, power: VotingPower) -> bool {
        power >= self.skip_power()
    }

    /// Proposer of `(height, round)`.
    ///
    /// The schedule restarts from zeroed accumulators at round 0 of every
    /// height and is periodic with period `total_power`, so only
    /// `round % total_power + 1` selection steps are replayed.
    pub fn proposer(&self, _height: Height, round: Round) -> ProcessId {
        match self.policy {
            ProposerPolicy::WeightedRoundRobin => {
                let steps = (round as u64 % self.total) + 1;
                let mut schedule = ProposerSchedule::new(self.len());
                let mut last = ProcessId(0);
                for _ in 0..steps {
                    last = schedule.select(self);
                }
                last
            }
        }
    }
}

/// Weighted round-robin priority accumulators.
///
/// Each selection adds every process's power to its accumulator, picks the
/// largest accumulator (lowest index on ties) and charges the winner the
/// total power. The accumulators sum to zero after every step, and over any
/// `total_power` consecutive selections each process wins exactly `power`
/// times.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProposerSchedule {
    accumulators: Vec<i128>,
}

impl ProposerSchedule {
    pub fn new(len: usize) -> Self {
        ProposerSchedule {
            accumulators: vec![0; len],
        }
    }

    pub fn accumulators(&self) -> &[i128] {
        &self.accumulators
    }

    pub fn select(&mut self, set: &ValidatorSet) -> ProcessId {
        for (acc, power) in self.accumulators.iter_mut().zip(set.powers()) {
            *acc += *power as i128;
        }
        let mut best = 0usize;
        for i in 1..self.accumulators.len() {
            // strict: lowest index wins ties
            if self.accumulators[i] > self.accumulators[best] {
                best = i;
            }
        }
        self.accumulators[best] -= set.total_power() as i128;
        ProcessId(best as u32)
    }
}
