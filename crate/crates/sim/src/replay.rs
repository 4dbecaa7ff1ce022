//! Re-executes a scenario and compares the result with a recorded trace.

use crate::runner::run_scenario;
use crate::scenario::{Scenario, ScenarioError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayOutcome {
    Identical { records: usize },
    /// First differing line (1-based); `None` when one side ran out.
    Diverged {
        line: usize,
        recorded: Option<String>,
        replayed: Option<String>,
    },
}

impl ReplayOutcome {
    pub fn is_identical(&self) -> bool {
        matches!(self, ReplayOutcome::Identical { .. })
    }
}

/// Replays `scenario` and compares it against `recorded` line by line. The
/// header line is compared before anything runs, so a trace from a
/// different seed or scenario is rejected immediately.
pub fn replay(scenario: &Scenario, recorded: &str) -> Result<ReplayOutcome, ScenarioError> {
    scenario.validate()?;
    let expected_header = header_line(scenario);
    let recorded_header = recorded.lines().next().map(str::to_string);
    if recorded_header.as_deref() != Some(expected_header.as_str()) {
        return Ok(ReplayOutcome::Diverged {
            line: 1,
            recorded: recorded_header,
            replayed: Some(expected_header),
        });
    }
    let text = run_scenario(scenario)?.trace.to_text();
    Ok(compare(recorded, &text))
}

fn header_line(scenario: &Scenario) -> String {
    format!(
        "t=0 p=- ev=header version={} seed={} n={} scenario={}",
        crate::trace::TRACE_VERSION,
        scenario.seed,
        scenario.validators.powers.len(),
        scenario.fingerprint()
    )
}

/// Line-by-line comparison of two trace texts.
pub fn compare(recorded: &str, replayed: &str) -> ReplayOutcome {
    let mut a = recorded.lines();
    let mut b = replayed.lines();
    let mut line = 0;
    loop {
        line += 1;
        match (a.next(), b.next()) {
            (None, None) => return ReplayOutcome::Identical { records: line - 1 },
            (x, y) if x == y => {}
            (x, y) => {
                return ReplayOutcome::Diverged {
                    line,
                    recorded: x.map(str::to_string),
                    replayed: y.map(str::to_string),
                }
            }
        }
    }
}
