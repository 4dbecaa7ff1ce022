//! Safety and liveness checks over a finished trace.
//!
//! Every checker only looks at records produced by correct processes (the
//! scenario says which processes are Byzantine). Failures cite trace line
//! numbers (1-based).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use tenderbft_core::{
    Height, Message, MessageBody, ProcessId, Round, StateSnapshot, Time, ValidatorSet, ValueId,
    VoteValue,
};

use crate::scenario::{Gst, Scenario};
use crate::trace::{Trace, TraceEvent};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass(String),
    Fail(Vec<String>),
    NotApplicable(String),
}

impl Verdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail(_))
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass(d) => write!(f, "PASS ({d})"),
            Verdict::NotApplicable(d) => write!(f, "N/A ({d})"),
            Verdict::Fail(reasons) => {
                write!(f, "FAIL")?;
                for r in reasons.iter().take(10) {
                    write!(f, "\n    {r}")?;
                }
                if reasons.len() > 10 {
                    write!(f, "\n    ... {} more", reasons.len() - 10)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Checker {
    Agreement,
    Validity,
    Termination,
    LockRestriction,
    ValidValue,
    Gossip,
}

impl Checker {
    pub const ALL: [Checker; 6] = [
        Checker::Agreement,
        Checker::Validity,
        Checker::Termination,
        Checker::LockRestriction,
        Checker::ValidValue,
        Checker::Gossip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Checker::Agreement => "agreement",
            Checker::Validity => "validity",
            Checker::Termination => "termination",
            Checker::LockRestriction => "lock-restriction",
            Checker::ValidValue => "valid-value",
            Checker::Gossip => "gossip",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Checker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
struct Decision {
    line: usize,
    time: Time,
    value: ValueId,
    accepted: bool,
}

#[derive(Clone, Debug)]
struct StateRec {
    line: usize,
    time: Time,
    snap: StateSnapshot,
}

/// Per-process views of a trace, restricted to correct processes.
pub struct TraceIndex<'a> {
    scenario: &'a Scenario,
    validators: Arc<ValidatorSet>,
    correct: Vec<bool>,
    end: Time,
    decisions: BTreeMap<(ProcessId, Height), Decision>,
    states: Vec<Vec<StateRec>>,
    /// `(line, time, sender, message)` for every send by a correct process.
    sends: Vec<(usize, Time, ProcessId, &'a Message)>,
    /// `(line, time, recipient, message)` for deliveries to correct processes.
    deliveries: Vec<(usize, Time, ProcessId, &'a Message)>,
}

impl<'a> TraceIndex<'a> {
    pub fn new(trace: &'a Trace, scenario: &'a Scenario) -> Self {
        let validators = scenario.validator_set().expect("validated scenario");
        let n = validators.len();
        let correct: Vec<bool> = (0..n as u32)
            .map(|p| !scenario.is_byzantine(ProcessId(p)))
            .collect();
        let mut idx = TraceIndex {
            scenario,
            validators,
            end: trace.end_time(),
            decisions: BTreeMap::new(),
            states: vec![Vec::new(); n],
            sends: Vec::new(),
            deliveries: Vec::new(),
            correct,
        };
        for (i, rec) in trace.records.iter().enumerate() {
            let Some(p) = rec.process else { continue };
            if !idx.is_correct(p) {
                continue;
            }
            let line = i + 1;
            match &rec.event {
                TraceEvent::Decide { height, value, .. } => {
                    idx.decisions.entry((p, *height)).or_insert(Decision {
                        line,
                        time: rec.time,
                        value: value.id(),
                        accepted: scenario.validity.accepts(value),
                    });
                }
                TraceEvent::State(s) => idx.states[p.index()].push(StateRec {
                    line,
                    time: rec.time,
                    snap: *s,
                }),
                TraceEvent::Send { msg, .. } => idx.sends.push((line, rec.time, p, msg)),
                TraceEvent::Deliver { msg } => idx.deliveries.push((line, rec.time, p, msg)),
                _ => {}
            }
        }
        idx
    }

    pub fn is_correct(&self, p: ProcessId) -> bool {
        self.correct.get(p.index()).copied().unwrap_or(false)
    }

    fn correct_ids(&self) -> impl Iterator<Item = ProcessId> + '_ {
        (0..self.correct.len() as u32)
            .map(ProcessId)
            .filter(|p| self.is_correct(*p))
    }

    fn delta(&self) -> Time {
        self.scenario.network.delta
    }

    /// Last state of `p` recorded at or before `t` (`inclusive`) or strictly
    /// before it.
    fn state_at(&self, p: ProcessId, t: Time, inclusive: bool) -> Option<&StateSnapshot> {
        let recs = &self.states[p.index()];
        let n = recs.partition_point(|r| if inclusive { r.time <= t } else { r.time < t });
        n.checked_sub(1).map(|i| &recs[i].snap)
    }
}

pub fn check(checker: Checker, trace: &Trace, scenario: &Scenario) -> Verdict {
    let idx = TraceIndex::new(trace, scenario);
    check_indexed(checker, &idx, trace)
}

pub fn check_all(trace: &Trace, scenario: &Scenario) -> Vec<(Checker, Verdict)> {
    check_some(&Checker::ALL, trace, scenario)
}

pub fn check_some(checkers: &[Checker], trace: &Trace, scenario: &Scenario) -> Vec<(Checker, Verdict)> {
    let idx = TraceIndex::new(trace, scenario);
    checkers
        .iter()
        .map(|c| (*c, check_indexed(*c, &idx, trace)))
        .collect()
}

fn check_indexed(checker: Checker, idx: &TraceIndex<'_>, trace: &Trace) -> Verdict {
    match checker {
        Checker::Agreement => agreement(idx),
        Checker::Validity => validity(idx),
        Checker::Termination => termination(idx, trace),
        Checker::LockRestriction => lock_restriction(idx),
        Checker::ValidValue => valid_value_propagation(idx).verdict(),
        Checker::Gossip => gossip(idx),
    }
}

fn agreement(idx: &TraceIndex<'_>) -> Verdict {
    let mut first: BTreeMap<Height, (ProcessId, &Decision)> = BTreeMap::new();
    let mut fails = Vec::new();
    for ((p, h), d) in &idx.decisions {
        match first.get(h) {
            None => {
                first.insert(*h, (*p, d));
            }
            Some((q, e)) if e.value != d.value => fails.push(format!(
                "height {h}: {q} decided {} (line {}) but {p} decided {} (line {})",
                e.value, e.line, d.value, d.line
            )),
            Some(_) => {}
        }
    }
    if fails.is_empty() {
        Verdict::Pass(format!("{} decisions over {} heights", idx.decisions.len(), first.len()))
    } else {
        Verdict::Fail(fails)
    }
}

fn validity(idx: &TraceIndex<'_>) -> Verdict {
    let fails: Vec<String> = idx
        .decisions
        .iter()
        .filter(|(_, d)| !d.accepted)
        .map(|((p, h), d)| {
            format!(
                "height {h}: {p} decided {} which fails valid() (line {})",
                d.value, d.line
            )
        })
        .collect();
    if fails.is_empty() {
        Verdict::Pass(format!("{} decisions valid", idx.decisions.len()))
    } else {
        Verdict::Fail(fails)
    }
}

/// Outcome of checking the post-GST round bound on every qualifying round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundBoundReport {
    /// Rounds whose hypotheses held and whose bound lies inside the trace.
    pub checked: usize,
    /// Rounds whose hypotheses held but whose bound lies past the trace end
    /// while some correct process had not yet decided.
    pub inconclusive: usize,
    pub violations: Vec<String>,
}

/// For every `(h, r)` whose first correct entrant `t` is at or after GST,
/// whose proposer is correct, where no correct process is locked above the
/// proposer's valid round at `t`, and whose timeouts satisfy
/// `tp(r) > 2Δ + tc(r-1)`, `tv(r) > 2Δ`, `tc(r) > 2Δ` (with `tc(-1) = 0`):
/// every correct process decides `h` strictly before `t + 4Δ + tc(r-1)`.
pub fn round_bound(trace: &Trace, scenario: &Scenario) -> RoundBoundReport {
    round_bound_indexed(&TraceIndex::new(trace, scenario))
}

fn round_bound_indexed(idx: &TraceIndex<'_>) -> RoundBoundReport {
    let mut report = RoundBoundReport::default();
    let Gst::At(gst) = idx.scenario.network.gst else {
        return report;
    };
    let delta = idx.delta();
    let timeouts = &idx.scenario.timeouts;
    // first correct entry into each (h, r)
    let mut entries: BTreeMap<(Height, Round), (Time, usize)> = BTreeMap::new();
    for p in idx.correct_ids() {
        for rec in &idx.states[p.index()] {
            let key = (rec.snap.height, rec.snap.round);
            let e = entries.entry(key).or_insert((rec.time, rec.line));
            if rec.time < e.0 {
                *e = (rec.time, rec.line);
            }
        }
    }
    for ((h, r), (t, line)) in entries {
        if t < gst {
            continue;
        }
        let proposer = idx.validators.proposer(h, r);
        if !idx.is_correct(proposer) {
            continue;
        }
        let prev_tc = if r == 0 { 0 } else { timeouts.precommit(r - 1) };
        if !(timeouts.propose(r) > 2 * delta + prev_tc
            && timeouts.prevote(r) > 2 * delta
            && timeouts.precommit(r) > 2 * delta)
        {
            continue;
        }
        // `None` when the proposer already decided h: everyone then hears of
        // the decision within Δ.
        let proposer_vr: Option<i64> = match idx.state_at(proposer, t, false) {
            Some(s) if s.height > h => None,
            Some(s) if s.height == h => Some(s.valid_round().map_or(-1, i64::from)),
            _ => Some(-1),
        };
        if let Some(vr) = proposer_vr {
            let locks_ok = idx.correct_ids().all(|c| match idx.state_at(c, t, true) {
                Some(s) if s.height == h => s.locked_round().map_or(-1, i64::from) <= vr,
                _ => true,
            });
            if !locks_ok {
                continue;
            }
        }
        judge_round(&mut report, idx, (h, r), (t, line), t + 4 * delta + prev_tc);
    }
    report
}

fn judge_round(
    report: &mut RoundBoundReport,
    idx: &TraceIndex<'_>,
    (h, r): (Height, Round),
    (t, line): (Time, usize),
    bound: Time,
) {
    let mut late = Vec::new();
    let mut pending = false;
    for c in idx.correct_ids() {
        match idx.decisions.get(&(c, h)) {
            Some(d) if d.time < bound => {}
            Some(d) => late.push(format!(
                "height {h} round {r} entered at t={t} (line {line}): {c} decided at t={} (line {}), bound {bound}",
                d.time, d.line
            )),
            None if idx.end >= bound => late.push(format!(
                "height {h} round {r} entered at t={t} (line {line}): {c} undecided at bound {bound}"
            )),
            None => pending = true,
        }
    }
    if !late.is_empty() {
        report.checked += 1;
        report.violations.extend(late);
    } else if pending {
        report.inconclusive += 1;
    } else {
        report.checked += 1;
    }
}

fn termination(idx: &TraceIndex<'_>, trace: &Trace) -> Verdict {
    let Gst::At(gst) = idx.scenario.network.gst else {
        return Verdict::NotApplicable("gst is never".into());
    };
    let mut fails = Vec::new();
    for c in idx.correct_ids() {
        for h in 0..idx.scenario.heights {
            if !idx.decisions.contains_key(&(c, h)) {
                fails.push(format!(
                    "{c} never decided height {h} (run ended at t={} with {}, gst={gst})",
                    idx.end,
                    trace.status().map_or("no end record", |s| s.as_str())
                ));
            }
        }
    }
    let bound = round_bound_indexed(idx);
    fails.extend(bound.violations.iter().cloned());
    if fails.is_empty() {
        Verdict::Pass(format!(
            "all heights decided; {} round bounds met, {} inconclusive",
            bound.checked, bound.inconclusive
        ))
    } else {
        Verdict::Fail(fails)
    }
}

/// Once correct processes holding more than `T - quorum` power precommit
/// `v` in round `r0`, none of them prevotes a value other than `v` (nil is
/// allowed) in a later round of the same height.
fn lock_restriction(idx: &TraceIndex<'_>) -> Verdict {
    let blocking = idx.validators.total_power() - idx.validators.quorum_power() + 1;
    let mut precommitters: BTreeMap<(Height, Round, ValueId), BTreeSet<ProcessId>> = BTreeMap::new();
    // (round, value, line) per (sender, height)
    type Prevotes = BTreeMap<(ProcessId, Height), Vec<(Round, ValueId, usize)>>;
    let mut prevotes: Prevotes = BTreeMap::new();
    for &(line, _, p, msg) in &idx.sends {
        match msg.body {
            MessageBody::Precommit(VoteValue::Id(id)) => {
                precommitters
                    .entry((msg.height, msg.round, id))
                    .or_default()
                    .insert(p);
            }
            MessageBody::Prevote(VoteValue::Id(id)) => prevotes
                .entry((p, msg.height))
                .or_default()
                .push((msg.round, id, line)),
            _ => {}
        }
    }
    let mut fails = Vec::new();
    let mut instances = 0;
    for ((h, r0, v), set) in &precommitters {
        if idx.validators.power_of(set) < blocking {
            continue;
        }
        instances += 1;
        for c in set {
            for (r, id, line) in prevotes.get(&(*c, *h)).into_iter().flatten() {
                if r > r0 && id != v {
                    fails.push(format!(
                        "height {h}: {c} precommitted {v} in round {r0} but prevoted {id} in round {r} (line {line})"
                    ));
                }
            }
        }
    }
    if fails.is_empty() {
        Verdict::Pass(format!("{instances} blocking precommit sets"))
    } else {
        Verdict::Fail(fails)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidValueReport {
    /// Lock events meeting the hypotheses.
    pub instances: usize,
    pub violations: Vec<String>,
}

impl ValidValueReport {
    pub fn verdict(&self) -> Verdict {
        if !self.violations.is_empty() {
            Verdict::Fail(self.violations.clone())
        } else if self.instances == 0 {
            Verdict::NotApplicable("no lock after gst with tc(r) > 2Δ".into())
        } else {
            Verdict::Pass(format!("{} lock events propagated", self.instances))
        }
    }
}

/// When a correct process locks `v` in round `r` at `t0 > gst` and
/// `tc(r) > 2Δ`, every correct process has `validValue = v`,
/// `validRound = r` before it starts round `r + 1` (or any later round) of
/// that height.
pub fn valid_value_propagation(idx: &TraceIndex<'_>) -> ValidValueReport {
    let mut report = ValidValueReport::default();
    let Gst::At(gst) = idx.scenario.network.gst else {
        return report;
    };
    let delta = idx.delta();
    let mut locks: BTreeSet<(Height, Round, ValueId)> = BTreeSet::new();
    let mut lock_lines: HashMap<(Height, Round, ValueId), (ProcessId, usize, Time)> = HashMap::new();
    for p in idx.correct_ids() {
        let mut prev = None;
        for rec in &idx.states[p.index()] {
            let cur = rec.snap.locked.map(|(r, v)| (rec.snap.height, r, v));
            if let Some(key) = cur.filter(|_| cur != prev) {
                if rec.time > gst && idx.scenario.timeouts.precommit(key.1) > 2 * delta {
                    locks.insert(key);
                    lock_lines.entry(key).or_insert((p, rec.line, rec.time));
                }
            }
            prev = cur;
        }
    }
    for (h, r, v) in locks {
        report.instances += 1;
        let (locker, line, t0) = lock_lines[&(h, r, v)];
        for c in idx.correct_ids() {
            let recs = &idx.states[c.index()];
            let Some(leave) = recs
                .iter()
                .position(|s| s.snap.height == h && s.snap.round > r)
            else {
                continue;
            };
            let ok = recs[..leave]
                .iter()
                .any(|s| s.snap.height == h && s.snap.valid == Some((r, v)));
            if !ok {
                report.violations.push(format!(
                    "height {h}: {locker} locked {v} in round {r} at t={t0} (line {line}) but {c} entered round {} (line {}) without validRound = {r}",
                    recs[leave].snap.round, recs[leave].line
                ));
            }
        }
    }
    report
}

pub fn valid_value(trace: &Trace, scenario: &Scenario) -> ValidValueReport {
    valid_value_propagation(&TraceIndex::new(trace, scenario))
}

/// A message received by a correct process at `t` (or sent by one at `t`)
/// reaches every other correct process before `max(t, gst) + Δ`.
fn gossip(idx: &TraceIndex<'_>) -> Verdict {
    let Gst::At(gst) = idx.scenario.network.gst else {
        return Verdict::NotApplicable("gst is never".into());
    };
    let delta = idx.delta();
    let n = idx.correct.len();
    let mut first: HashMap<&Message, Vec<Option<Time>>> = HashMap::new();
    for &(_, t, p, msg) in &idx.deliveries {
        let slots = first.entry(msg).or_insert_with(|| vec![None; n]);
        if slots[p.index()].is_none() {
            slots[p.index()] = Some(t);
        }
    }
    let mut origins: HashMap<&Message, (Time, usize, ProcessId)> = HashMap::new();
    for &(line, t, p, msg) in idx.sends.iter().chain(&idx.deliveries) {
        let e = origins.entry(msg).or_insert((t, line, p));
        if t < e.0 {
            *e = (t, line, p);
        }
    }
    let mut fails = Vec::new();
    let mut checked = 0usize;
    for (msg, (t, line, from)) in origins {
        let deadline = t.max(gst) + delta;
        if deadline > idx.end {
            continue;
        }
        checked += 1;
        let got = first.get(msg);
        for q in idx.correct_ids() {
            if q == msg.sender || q == from {
                continue;
            }
            let at = got.and_then(|s| s[q.index()]);
            if !at.is_some_and(|a| a < deadline) {
                fails.push(format!(
                    "{msg} held by {from} at t={t} (line {line}) reached {q} at {} (deadline {deadline})",
                    at.map_or("never".to_string(), |a| format!("t={a}"))
                ));
            }
        }
    }
    if fails.is_empty() {
        Verdict::Pass(format!("{checked} messages reached every correct process in time"))
    } else {
        Verdict::Fail(fails)
    }
}
