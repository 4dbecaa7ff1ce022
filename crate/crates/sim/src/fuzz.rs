//! Many seeds of one scenario, in parallel.

use rayon::prelude::*;

use crate::checkers::{check_some, Checker, Verdict};
use crate::runner::run_scenario;
use crate::scenario::Scenario;
use crate::trace::RunStatus;

#[derive(Clone, Debug)]
pub struct FuzzCase {
    pub seed: u64,
    pub status: RunStatus,
    pub verdicts: Vec<(Checker, Verdict)>,
}

impl FuzzCase {
    pub fn failed(&self) -> bool {
        self.verdicts.iter().any(|(_, v)| v.is_fail())
    }
}

/// Runs `base` once per seed and applies `checkers` to each trace. Results
/// come back in seed order.
pub fn fuzz(base: &Scenario, seeds: &[u64], checkers: &[Checker]) -> Vec<FuzzCase> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut s = base.clone();
            s.seed = seed;
            let run = run_scenario(&s).expect("base scenario is valid");
            FuzzCase {
                seed,
                status: run.status,
                verdicts: check_some(checkers, &run.trace, &s),
            }
        })
        .collect()
}
