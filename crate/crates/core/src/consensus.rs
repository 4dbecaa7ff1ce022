//! The consensus state machine of a single process.
//!
//! [`Node::handle`] consumes one input (start, a delivered message, or an
//! expired timeout), then keeps executing enabled upon-rules until none is
//! enabled. Rules are evaluated against the [`MessageLog`] rather than
//! against individual threshold events, so a condition that became true
//! before its step guard did (for instance a prevote quorum collected while
//! still in the propose step) fires as soon as the guard holds.
//!
//! The node never reads a clock and draws randomness only from the seeded
//! rule-order generator, so replaying the same inputs yields the same
//! outputs.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::app::Application;
use crate::message::{Message, MessageKind};
use crate::state::{ProcessState, RoundValue, StateSnapshot, Step};
use crate::timeout::{Duration, Timeout, TimeoutConfig, TimeoutKind};
use crate::types::{Height, ProcessId, Round, Value, ValueId, VoteValue};
use crate::validator_set::ValidatorSet;
use crate::vote_keeper::{EquivocationEvidence, LogConfig, MessageLog, RecordError};

/// Which enabled rule runs first when several are enabled at once.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RuleOrder {
    /// decision > proposal > lock > nil > any > skip.
    #[default]
    FixedPriority,
    /// Uniform choice among enabled rules, from a seeded generator.
    Random { seed: u64 },
}

/// Upon-rules and timeout handlers, as named in traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    StartRound,
    ProposalFresh,
    ProposalWithPolka,
    PrevoteAnyTimeout,
    Lock,
    PrevoteNil,
    PrecommitAnyTimeout,
    Decide,
    SkipRound,
    TimeoutPropose,
    TimeoutPrevote,
    TimeoutPrecommit,
}

impl Rule {
    pub const ALL: [Rule; 12] = [
        Rule::StartRound,
        Rule::ProposalFresh,
        Rule::ProposalWithPolka,
        Rule::PrevoteAnyTimeout,
        Rule::Lock,
        Rule::PrevoteNil,
        Rule::PrecommitAnyTimeout,
        Rule::Decide,
        Rule::SkipRound,
        Rule::TimeoutPropose,
        Rule::TimeoutPrevote,
        Rule::TimeoutPrecommit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::StartRound => "start-round",
            Rule::ProposalFresh => "proposal-fresh",
            Rule::ProposalWithPolka => "proposal-polka",
            Rule::PrevoteAnyTimeout => "prevote-any",
            Rule::Lock => "lock",
            Rule::PrevoteNil => "prevote-nil",
            Rule::PrecommitAnyTimeout => "precommit-any",
            Rule::Decide => "decide",
            Rule::SkipRound => "skip-round",
            Rule::TimeoutPropose => "timeout-propose",
            Rule::TimeoutPrevote => "timeout-prevote",
            Rule::TimeoutPrecommit => "timeout-precommit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Rule::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Input {
    Start,
    Message(Message),
    Timeout(Timeout),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Anomaly {
    /// A delivered message was refused by the log.
    Rejected { message: Message, error: RecordError },
    /// A precommit quorum formed for a value that fails `valid()`.
    InvalidDecisionValue {
        height: Height,
        round: Round,
        value_id: ValueId,
    },
}

/// Effects of handling an input. The first four are actions for the
/// environment; the rest are observations for tracing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Output {
    Broadcast(Message),
    ScheduleTimeout { timeout: Timeout, duration: Duration },
    Decide {
        height: Height,
        round: Round,
        value: Value,
    },
    StartHeight(Height),
    RuleFired {
        rule: Rule,
        height: Height,
        round: Round,
    },
    StateChanged(StateSnapshot),
    Evidence(EquivocationEvidence),
    Anomaly(Anomaly),
}

#[derive(Clone, Debug)]
pub struct NodeConfig {
    pub timeouts: TimeoutConfig,
    pub rule_order: RuleOrder,
    pub log: LogConfig,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            timeouts: TimeoutConfig::default(),
            rule_order: RuleOrder::FixedPriority,
            log: LogConfig::default(),
        }
    }
}

/// "For the first time" bookkeeping for the current height.
#[derive(Clone, Debug, Default)]
struct Fired {
    prevote_any: BTreeSet<Round>,
    precommit_any: BTreeSet<Round>,
    lock: BTreeSet<(Round, ValueId)>,
    rejected_decisions: BTreeSet<(Round, ValueId)>,
}

#[derive(Clone, Debug)]
enum Enabled {
    Decide { round: Round, value: Value },
    ProposalFresh { value: Value },
    ProposalWithPolka { value: Value, valid_round: Round },
    Lock { value: Value },
    PrevoteNil,
    PrevoteAny,
    PrecommitAny,
    Skip { round: Round },
}

/// One process running the consensus algorithm.
#[derive(Clone, Debug)]
pub struct Node<A> {
    id: ProcessId,
    validators: Arc<ValidatorSet>,
    config: NodeConfig,
    state: ProcessState,
    log: MessageLog,
    app: A,
    fired: Fired,
    rng: Option<ChaCha8Rng>,
    started: bool,
    last_snapshot: Option<StateSnapshot>,
    evidence_reported: usize,
}

impl<A: Application> Node<A> {
    pub fn new(id: ProcessId, validators: Arc<ValidatorSet>, app: A, config: NodeConfig) -> Self {
        let rng = match config.rule_order {
            RuleOrder::FixedPriority => None,
            RuleOrder::Random { seed } => Some(ChaCha8Rng::seed_from_u64(
                seed ^ (u64::from(id.0) + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            )),
        };
        Node {
            id,
            log: MessageLog::with_config(validators.clone(), config.log),
            validators,
            config,
            state: ProcessState::default(),
            app,
            fired: Fired::default(),
            rng,
            started: false,
            last_snapshot: None,
            evidence_reported: 0,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn state(&self) -> &ProcessState {
        &self.state
    }

    pub fn log(&self) -> &MessageLog {
        &self.log
    }

    pub fn validators(&self) -> &ValidatorSet {
        &self.validators
    }

    pub fn app(&self) -> &A {
        &self.app
    }

    pub fn decision(&self, height: Height) -> Option<&Value> {
        self.state.decisions.get(&height)
    }

    /// Processes one input and runs every enabled rule to a fixed point.
    pub fn handle(&mut self, input: Input) -> Vec<Output> {
        let mut out = Vec::new();
        match input {
            Input::Start => {
                if !self.started {
                    self.started = true;
                    out.push(Output::StartHeight(self.state.height));
                    self.start_round(0, &mut out);
                }
            }
            Input::Message(msg) => self.receive(msg, &mut out),
            Input::Timeout(t) => self.on_timeout(t, &mut out),
        }
        if self.started {
            self.run_rules(&mut out);
        }
        self.report_evidence(&mut out);
        out
    }

    fn receive(&mut self, msg: Message, out: &mut Vec<Output>) {
        if let Err(error) = self.log.record(msg.clone()) {
            out.push(Output::Anomaly(Anomaly::Rejected {
                message: msg,
                error,
            }));
        }
    }

    fn report_evidence(&mut self, out: &mut Vec<Output>) {
        let all = self.log.evidence();
        for e in &all[self.evidence_reported..] {
            out.push(Output::Evidence(e.clone()));
        }
        self.evidence_reported = all.len();
    }

    fn broadcast(&mut self, msg: Message, out: &mut Vec<Output>) {
        // own messages count toward own thresholds
        let _ = self.log.record(msg.clone());
        out.push(Output::Broadcast(msg));
    }

    fn note(&mut self, rule: Rule, height: Height, round: Round, out: &mut Vec<Output>) {
        out.push(Output::RuleFired {
            rule,
            height,
            round,
        });
    }

    fn note_state(&mut self, out: &mut Vec<Output>) {
        let snap = self.state.snapshot();
        if self.last_snapshot != Some(snap) {
            self.last_snapshot = Some(snap);
            out.push(Output::StateChanged(snap));
        }
    }

    fn proposer(&self, round: Round) -> ProcessId {
        self.validators.proposer(self.state.height, round)
    }

    fn start_round(&mut self, round: Round, out: &mut Vec<Output>) {
        let h = self.state.height;
        self.state.round = round;
        self.state.step = Step::Propose;
        self.note(Rule::StartRound, h, round, out);
        self.note_state(out);
        if self.proposer(round) == self.id {
            let (value, valid_round) = match &self.state.valid {
                Some(v) => (v.value.clone(), Some(v.round)),
                None => (self.app.get_value(h, round), None),
            };
            let msg = Message::proposal(h, round, self.id, value, valid_round);
            self.broadcast(msg, out);
        } else {
            self.schedule(TimeoutKind::Propose, out);
        }
    }

    fn schedule(&mut self, kind: TimeoutKind, out: &mut Vec<Output>) {
        let round = self.state.round;
        out.push(Output::ScheduleTimeout {
            timeout: Timeout {
                kind,
                height: self.state.height,
                round,
            },
            duration: self.config.timeouts.duration(kind, round),
        });
    }

    fn prevote(&mut self, vote: VoteValue, out: &mut Vec<Output>) {
        let msg = Message::prevote(self.state.height, self.state.round, self.id, vote);
        self.broadcast(msg, out);
        self.state.step = Step::Prevote;
        self.note_state(out);
    }

    fn precommit(&mut self, vote: VoteValue, out: &mut Vec<Output>) {
        let msg = Message::precommit(self.state.height, self.state.round, self.id, vote);
        self.broadcast(msg, out);
        self.state.step = Step::Precommit;
        self.note_state(out);
    }

    fn on_timeout(&mut self, t: Timeout, out: &mut Vec<Output>) {
        if !self.started || t.height != self.state.height || t.round != self.state.round {
            return;
        }
        match t.kind {
            TimeoutKind::Propose if self.state.step == Step::Propose => {
                self.note(Rule::TimeoutPropose, t.height, t.round, out);
                self.prevote(VoteValue::Nil, out);
            }
            TimeoutKind::Prevote if self.state.step == Step::Prevote => {
                self.note(Rule::TimeoutPrevote, t.height, t.round, out);
                self.precommit(VoteValue::Nil, out);
            }
            TimeoutKind::Precommit => {
                self.note(Rule::TimeoutPrecommit, t.height, t.round, out);
                self.start_round(t.round + 1, out);
            }
            _ => {}
        }
    }

    /// Enabled rules in fixed priority order.
    fn enabled(&self) -> Vec<Enabled> {
        let mut rules = Vec::new();
        let h = self.state.height;
        let round = self.state.round;
        let step = self.state.step;

        for (r, id) in self.log.precommit_quorums() {
            if self.fired.rejected_decisions.contains(&(r, id)) {
                continue;
            }
            if let Some(p) = self.log.proposal_with_id(r, self.validators.proposer(h, r), id) {
                rules.push(Enabled::Decide {
                    round: r,
                    value: p.value.clone(),
                });
            }
        }

        let proposer = self.proposer(round);
        let proposals = self.log.proposals(round, proposer);

        if step == Step::Propose {
            for p in proposals {
                match p.valid_round {
                    None => rules.push(Enabled::ProposalFresh {
                        value: p.value.clone(),
                    }),
                    Some(vr)
                        if vr < round
                            && self.log.has_quorum(
                                MessageKind::Prevote,
                                vr,
                                VoteValue::Id(p.value.id()),
                            ) =>
                    {
                        rules.push(Enabled::ProposalWithPolka {
                            value: p.value.clone(),
                            valid_round: vr,
                        })
                    }
                    Some(_) => {}
                }
            }
        }

        if step >= Step::Prevote {
            for p in proposals {
                let id = p.value.id();
                if !self.fired.lock.contains(&(round, id))
                    && self
                        .log
                        .has_quorum(MessageKind::Prevote, round, VoteValue::Id(id))
                    && self.app.valid(&p.value)
                {
                    rules.push(Enabled::Lock {
                        value: p.value.clone(),
                    });
                }
            }
        }

        if step == Step::Prevote
            && self
                .log
                .has_quorum(MessageKind::Prevote, round, VoteValue::Nil)
        {
            rules.push(Enabled::PrevoteNil);
        }
        if step == Step::Prevote
            && !self.fired.prevote_any.contains(&round)
            && self.log.has_quorum_any(MessageKind::Prevote, round)
        {
            rules.push(Enabled::PrevoteAny);
        }
        if !self.fired.precommit_any.contains(&round)
            && self.log.has_quorum_any(MessageKind::Precommit, round)
        {
            rules.push(Enabled::PrecommitAny);
        }
        // highest first: jumping there directly disables the lower ones
        for r in self.log.skip_rounds_above(round).rev() {
            rules.push(Enabled::Skip { round: r });
        }
        rules
    }

    fn run_rules(&mut self, out: &mut Vec<Output>) {
        loop {
            let mut enabled = self.enabled();
            if enabled.is_empty() {
                break;
            }
            let pick = match &mut self.rng {
                None => 0,
                Some(rng) => rng.gen_range(0..enabled.len()),
            };
            let rule = enabled.swap_remove(pick);
            self.execute(rule, out);
        }
    }

    fn execute(&mut self, rule: Enabled, out: &mut Vec<Output>) {
        let h = self.state.height;
        let round = self.state.round;
        match rule {
            Enabled::Decide { round: r, value } => self.decide(r, value, out),
            Enabled::ProposalFresh { value } => {
                self.note(Rule::ProposalFresh, h, round, out);
                let accept = self.app.valid(&value)
                    && match &self.state.locked {
                        None => true,
                        Some(l) => l.value == value,
                    };
                let vote = if accept {
                    VoteValue::Id(value.id())
                } else {
                    VoteValue::Nil
                };
                self.prevote(vote, out);
            }
            Enabled::ProposalWithPolka { value, valid_round } => {
                self.note(Rule::ProposalWithPolka, h, round, out);
                let accept = self.app.valid(&value)
                    && match &self.state.locked {
                        None => true,
                        Some(l) => l.round <= valid_round || l.value == value,
                    };
                let vote = if accept {
                    VoteValue::Id(value.id())
                } else {
                    VoteValue::Nil
                };
                self.prevote(vote, out);
            }
            Enabled::Lock { value } => {
                self.fired.lock.insert((round, value.id()));
                self.note(Rule::Lock, h, round, out);
                if self.state.step == Step::Prevote {
                    self.state.locked = Some(RoundValue {
                        value: value.clone(),
                        round,
                    });
                    let msg =
                        Message::precommit(h, round, self.id, VoteValue::Id(value.id()));
                    self.broadcast(msg, out);
                    self.state.step = Step::Precommit;
                }
                self.state.valid = Some(RoundValue { value, round });
                self.note_state(out);
            }
            Enabled::PrevoteNil => {
                self.note(Rule::PrevoteNil, h, round, out);
                self.precommit(VoteValue::Nil, out);
            }
            Enabled::PrevoteAny => {
                self.fired.prevote_any.insert(round);
                self.note(Rule::PrevoteAnyTimeout, h, round, out);
                self.schedule(TimeoutKind::Prevote, out);
            }
            Enabled::PrecommitAny => {
                self.fired.precommit_any.insert(round);
                self.note(Rule::PrecommitAnyTimeout, h, round, out);
                self.schedule(TimeoutKind::Precommit, out);
            }
            Enabled::Skip { round: r } => {
                self.note(Rule::SkipRound, h, r, out);
                self.start_round(r, out);
            }
        }
    }

    fn decide(&mut self, round: Round, value: Value, out: &mut Vec<Output>) {
        let h = self.state.height;
        let id = value.id();
        if !self.app.valid(&value) {
            self.fired.rejected_decisions.insert((round, id));
            out.push(Output::Anomaly(Anomaly::InvalidDecisionValue {
                height: h,
                round,
                value_id: id,
            }));
            return;
        }
        self.note(Rule::Decide, h, round, out);
        self.state.decisions.insert(h, value.clone());
        out.push(Output::Decide {
            height: h,
            round,
            value,
        });
        self.log.record_decision(h, round, id);
        self.state.height = h + 1;
        self.state.locked = None;
        self.state.valid = None;
        self.fired = Fired::default();
        // the decision was recorded just above, so pruning cannot fail
        let _ = self.log.prune(h);
        out.push(Output::StartHeight(h + 1));
        self.start_round(0, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app::{TaggedApp, ValidityRule};

    const TIMEOUTS: TimeoutConfig = TimeoutConfig {
        propose: 30,
        prevote: 20,
        precommit: 20,
        delta: 5,
    };

    fn node(id: u32) -> Node<TaggedApp> {
        node_with(id, ValidityRule::AcceptAll)
    }

    fn node_with(id: u32, validity: ValidityRule) -> Node<TaggedApp> {
        let config = NodeConfig {
            timeouts: TIMEOUTS,
            ..NodeConfig::default()
        };
        Node::new(
            ProcessId(id),
            Arc::new(ValidatorSet::uniform(4)),
            TaggedApp::new(ProcessId(id), validity),
            config,
        )
    }

    fn value(tag: &str) -> Value {
        Value::new(tag.as_bytes().to_vec())
    }

    fn broadcasts(outs: &[Output]) -> Vec<Message> {
        outs.iter()
            .filter_map(|o| match o {
                Output::Broadcast(m) => Some(m.clone()),
                _ => None,
            })
            .collect()
    }

    fn deliver(n: &mut Node<TaggedApp>, msg: Message) -> Vec<Output> {
        n.handle(Input::Message(msg))
    }

    fn prevote(r: Round, from: u32, v: &Value) -> Message {
        Message::prevote(0, r, ProcessId(from), VoteValue::Id(v.id()))
    }

    fn precommit(r: Round, from: u32, v: &Value) -> Message {
        Message::precommit(0, r, ProcessId(from), VoteValue::Id(v.id()))
    }

    /// Puts a node into `round` at the propose step without side effects.
    fn enter(n: &mut Node<TaggedApp>, round: Round) {
        n.started = true;
        n.state.round = round;
        n.state.step = Step::Propose;
    }

    #[test]
    fn proposer_broadcasts_fresh_value_on_start() {
        let mut n = node(0);
        let outs = n.handle(Input::Start);
        let sent = broadcasts(&outs);
        let expected = n.app.clone().get_value(0, 0);
        assert_eq!(
            sent[0],
            Message::proposal(0, 0, ProcessId(0), expected.clone(), None)
        );
        // its own proposal is in its log, so it prevotes for it right away
        assert_eq!(sent[1], prevote(0, 0, &expected));
    }

    #[test]
    fn proposer_reproposes_valid_value() {
        let mut n = node(1); // proposer of round 5 with four equal powers
        let v = value("v");
        n.started = true;
        n.state.valid = Some(RoundValue {
            value: v.clone(),
            round: 2,
        });
        let mut outs = Vec::new();
        n.start_round(5, &mut outs);
        assert_eq!(
            broadcasts(&outs),
            vec![Message::proposal(0, 5, ProcessId(1), v, Some(2))]
        );
    }

    #[test]
    fn non_proposer_schedules_propose_timeout() {
        let mut n = node(0);
        n.started = true;
        let mut outs = Vec::new();
        n.start_round(3, &mut outs);
        assert!(broadcasts(&outs).is_empty());
        assert!(outs.contains(&Output::ScheduleTimeout {
            timeout: Timeout {
                kind: TimeoutKind::Propose,
                height: 0,
                round: 3
            },
            duration: 30 + 3 * 5,
        }));
    }

    #[test]
    fn unlocked_process_prevotes_proposed_value() {
        let mut n = node(1);
        n.handle(Input::Start);
        let v = value("v");
        let outs = deliver(&mut n, Message::proposal(0, 0, ProcessId(0), v.clone(), None));
        assert_eq!(broadcasts(&outs), vec![prevote(0, 1, &v)]);
        assert_eq!(n.state.step, Step::Prevote);
    }

    #[test]
    fn invalid_proposal_gets_nil_prevote() {
        let mut n = node_with(1, ValidityRule::RejectBelowRound { round: 0 });
        n.handle(Input::Start);
        let outs = deliver(&mut n, Message::proposal(0, 0, ProcessId(0), value("junk"), None));
        assert_eq!(
            broadcasts(&outs),
            vec![Message::prevote(0, 0, ProcessId(1), VoteValue::Nil)]
        );
    }

    #[test]
    fn proposal_from_non_proposer_is_ignored() {
        let mut n = node(1);
        n.handle(Input::Start);
        let outs = deliver(&mut n, Message::proposal(0, 0, ProcessId(2), value("v"), None));
        assert!(broadcasts(&outs).is_empty());
        assert_eq!(n.state.step, Step::Propose);
    }

    #[test]
    fn locked_process_rejects_other_fresh_value() {
        let mut n = node(2);
        enter(&mut n, 2);
        n.state.locked = Some(RoundValue {
            value: value("w"),
            round: 1,
        });
        n.state.valid = n.state.locked.clone();
        let v = value("v");
        // proposer of round 2 is p2 itself; use round 3 -> p3
        n.state.round = 3;
        let outs = deliver(&mut n, Message::proposal(0, 3, ProcessId(3), v, None));
        assert_eq!(
            broadcasts(&outs),
            vec![Message::prevote(0, 3, ProcessId(2), VoteValue::Nil)]
        );
    }

    #[test]
    fn locked_process_accepts_more_recent_polka() {
        let mut n = node(2);
        enter(&mut n, 4); // proposer of round 4 is p0
        n.state.locked = Some(RoundValue {
            value: value("w"),
            round: 1,
        });
        n.state.valid = n.state.locked.clone();
        let v = value("v");
        for p in [0, 1, 3] {
            deliver(&mut n, prevote(3, p, &v));
        }
        let outs = deliver(&mut n, Message::proposal(0, 4, ProcessId(0), v.clone(), Some(3)));
        assert_eq!(broadcasts(&outs), vec![prevote(4, 2, &v)]);
    }

    #[test]
    fn polka_proposal_waits_for_the_prevote_quorum() {
        let mut n = node(2);
        enter(&mut n, 4);
        let v = value("v");
        let outs = deliver(&mut n, Message::proposal(0, 4, ProcessId(0), v.clone(), Some(3)));
        assert!(broadcasts(&outs).is_empty());
        deliver(&mut n, prevote(3, 0, &v));
        deliver(&mut n, prevote(3, 1, &v));
        let outs = deliver(&mut n, prevote(3, 3, &v));
        assert_eq!(broadcasts(&outs), vec![prevote(4, 2, &v)]);
    }

    #[test]
    fn prevote_quorum_locks_and_precommits() {
        let mut n = node(1);
        n.handle(Input::Start);
        let v = value("v");
        deliver(&mut n, Message::proposal(0, 0, ProcessId(0), v.clone(), None));
        deliver(&mut n, prevote(0, 0, &v));
        // the quorum-completing prevote triggers lock and precommit in one call
        let outs = deliver(&mut n, prevote(0, 2, &v));
        assert_eq!(broadcasts(&outs), vec![precommit(0, 1, &v)]);
        assert_eq!(n.state.locked_round(), Some(0));
        assert_eq!(n.state.locked_value(), Some(&v));
        assert_eq!(n.state.valid_round(), Some(0));
        assert_eq!(n.state.step, Step::Precommit);
        // prevote timeout is not scheduled: the any-quorum rule needs step = prevote
        assert!(!outs.iter().any(|o| matches!(o, Output::ScheduleTimeout { .. })));
    }

    #[test]
    fn late_polka_updates_valid_value_only() {
        let mut n = node(1);
        n.handle(Input::Start);
        let v = value("v");
        deliver(&mut n, Message::proposal(0, 0, ProcessId(0), v.clone(), None));
        assert_eq!(n.state.step, Step::Prevote);
        let outs = n.handle(Input::Timeout(Timeout {
            kind: TimeoutKind::Prevote,
            height: 0,
            round: 0,
        }));
        assert_eq!(
            broadcasts(&outs),
            vec![Message::precommit(0, 0, ProcessId(1), VoteValue::Nil)]
        );
        assert_eq!(n.state.step, Step::Precommit);
        deliver(&mut n, prevote(0, 0, &v));
        let outs = deliver(&mut n, prevote(0, 2, &v));
        assert!(broadcasts(&outs).is_empty());
        assert_eq!(n.state.locked, None);
        assert_eq!(n.state.valid_round(), Some(0));
        assert_eq!(n.state.valid_value(), Some(&v));
    }

    #[test]
    fn nil_prevote_quorum_precommits_nil() {
        let mut n = node(1);
        n.handle(Input::Start);
        n.handle(Input::Timeout(Timeout {
            kind: TimeoutKind::Propose,
            height: 0,
            round: 0,
        }));
        assert_eq!(n.state.step, Step::Prevote);
        deliver(&mut n, Message::prevote(0, 0, ProcessId(2), VoteValue::Nil));
        let outs = deliver(&mut n, Message::prevote(0, 0, ProcessId(3), VoteValue::Nil));
        assert_eq!(
            broadcasts(&outs),
            vec![Message::precommit(0, 0, ProcessId(1), VoteValue::Nil)]
        );
        assert_eq!(n.state.locked, None);
        assert_eq!(n.state.step, Step::Precommit);
    }

    #[test]
    fn any_prevote_quorum_schedules_timeout_once() {
        let mut n = node(1);
        n.handle(Input::Start);
        deliver(&mut n, Message::proposal(0, 0, ProcessId(0), value("v"), None));
        deliver(&mut n, Message::prevote(0, 0, ProcessId(2), VoteValue::Nil));
        let outs = deliver(&mut n, Message::prevote(0, 0, ProcessId(3), VoteValue::Id(value("w").id())));
        let prevote_timeout = Output::ScheduleTimeout {
            timeout: Timeout {
                kind: TimeoutKind::Prevote,
                height: 0,
                round: 0,
            },
            duration: 20,
        };
        assert!(outs.contains(&prevote_timeout));
        let outs = deliver(&mut n, Message::prevote(0, 0, ProcessId(0), VoteValue::Nil));
        assert!(!outs.contains(&prevote_timeout));
    }

    #[test]
    fn precommit_quorum_decides_and_starts_next_height() {
        let mut n = node(1);
        n.handle(Input::Start);
        let v = value("v");
        deliver(&mut n, Message::proposal(0, 0, ProcessId(0), v.clone(), None));
        for p in [0, 2] {
            deliver(&mut n, prevote(0, p, &v));
        }
        deliver(&mut n, precommit(0, 0, &v));
        let outs = deliver(&mut n, precommit(0, 2, &v));
        let decide = outs
            .iter()
            .position(|o| matches!(o, Output::Decide { .. }))
            .expect("decides");
        assert_eq!(
            outs[decide],
            Output::Decide {
                height: 0,
                round: 0,
                value: v.clone()
            }
        );
        assert_eq!(outs[decide + 1], Output::StartHeight(1));
        assert_eq!(n.decision(0), Some(&v));
        assert_eq!((n.state.height, n.state.round, n.state.step), (1, 0, Step::Propose));
        assert_eq!(n.state.locked, None);
        assert_eq!(n.state.valid, None);
        assert!(n.log().certificate(0).is_some());
    }

    #[test]
    fn nil_precommit_quorum_only_schedules_timeout() {
        let mut n = node(1);
        n.handle(Input::Start);
        let mut last = Vec::new();
        for p in [0, 2, 3] {
            last = deliver(&mut n, Message::precommit(0, 0, ProcessId(p), VoteValue::Nil));
        }
        assert!(broadcasts(&last).is_empty());
        assert!(last.contains(&Output::ScheduleTimeout {
            timeout: Timeout {
                kind: TimeoutKind::Precommit,
                height: 0,
                round: 0
            },
            duration: 20
        }));
        assert!(n.decision(0).is_none());
    }

    #[test]
    fn decides_on_quorum_from_an_earlier_round() {
        let mut n = node(3);
        enter(&mut n, 4);
        let v = value("v");
        // proposer of round 1 is p1
        deliver(&mut n, Message::proposal(0, 1, ProcessId(1), v.clone(), None));
        for p in [0, 1, 2] {
            deliver(&mut n, precommit(1, p, &v));
        }
        assert_eq!(n.decision(0), Some(&v));
    }

    #[test]
    fn invalid_decision_value_is_not_decided() {
        let mut n = node_with(3, ValidityRule::RejectProposer { proposer: ProcessId(0) });
        n.handle(Input::Start);
        let v = Value::new(
            crate::app::ValueTag {
                height: 0,
                proposer: ProcessId(0),
                nonce: 0,
            }
            .encode(),
        );
        deliver(&mut n, Message::proposal(0, 0, ProcessId(0), v.clone(), None));
        let mut outs = Vec::new();
        for p in [0, 1, 2] {
            outs = deliver(&mut n, precommit(0, p, &v));
        }
        assert!(outs.iter().any(|o| matches!(
            o,
            Output::Anomaly(Anomaly::InvalidDecisionValue { .. })
        )));
        assert!(n.decision(0).is_none());
        // not re-reported
        let outs = deliver(&mut n, precommit(0, 0, &v));
        assert!(outs.is_empty());
    }

    #[test]
    fn skip_threshold_jumps_rounds() {
        let mut n = node(0);
        n.handle(Input::Start);
        deliver(&mut n, Message::prevote(0, 2, ProcessId(1), VoteValue::Nil));
        assert_eq!(n.state.round, 0);
        deliver(&mut n, Message::prevote(0, 2, ProcessId(2), VoteValue::Nil));
        assert_eq!(n.state.round, 2);
        assert_eq!(n.state.step, Step::Propose);
    }

    #[test]
    fn skip_threshold_does_not_pool_rounds() {
        let mut n = node(0);
        n.handle(Input::Start);
        deliver(&mut n, Message::prevote(0, 2, ProcessId(1), VoteValue::Nil));
        deliver(&mut n, Message::prevote(0, 3, ProcessId(2), VoteValue::Nil));
        assert_eq!(n.state.round, 0);
    }

    #[test]
    fn stale_timeouts_are_ignored() {
        let mut n = node(0);
        n.handle(Input::Start);
        deliver(&mut n, Message::prevote(0, 3, ProcessId(1), VoteValue::Nil));
        deliver(&mut n, Message::prevote(0, 3, ProcessId(2), VoteValue::Nil));
        assert_eq!(n.state.round, 3);
        let before = n.state.clone();
        let outs = n.handle(Input::Timeout(Timeout {
            kind: TimeoutKind::Propose,
            height: 0,
            round: 1,
        }));
        assert!(outs.is_empty());
        assert_eq!(n.state, before);
    }

    #[test]
    fn precommit_timeout_starts_next_round_with_longer_timeouts() {
        let mut n = node(2);
        n.handle(Input::Start);
        let outs = n.handle(Input::Timeout(Timeout {
            kind: TimeoutKind::Precommit,
            height: 0,
            round: 0,
        }));
        assert_eq!(n.state.round, 1);
        assert!(outs.contains(&Output::ScheduleTimeout {
            timeout: Timeout {
                kind: TimeoutKind::Propose,
                height: 0,
                round: 1
            },
            duration: 35
        }));
    }

    #[test]
    fn prevote_timeout_precommits_nil() {
        let mut n = node(1);
        n.handle(Input::Start);
        n.handle(Input::Timeout(Timeout {
            kind: TimeoutKind::Propose,
            height: 0,
            round: 0,
        }));
        let outs = n.handle(Input::Timeout(Timeout {
            kind: TimeoutKind::Prevote,
            height: 0,
            round: 0,
        }));
        assert_eq!(
            broadcasts(&outs),
            vec![Message::precommit(0, 0, ProcessId(1), VoteValue::Nil)]
        );
    }

    #[test]
    fn replay_is_deterministic_for_both_rule_orders() {
        let v = value("v");
        let inputs = vec![
            Input::Start,
            Input::Message(Message::proposal(0, 0, ProcessId(0), v.clone(), None)),
            Input::Message(prevote(0, 0, &v)),
            Input::Message(Message::prevote(0, 2, ProcessId(3), VoteValue::Nil)),
            Input::Message(prevote(0, 2, &v)),
            Input::Message(precommit(0, 0, &v)),
            Input::Message(Message::prevote(0, 5, ProcessId(2), VoteValue::Nil)),
            Input::Message(Message::prevote(0, 5, ProcessId(3), VoteValue::Nil)),
            Input::Message(precommit(0, 3, &v)),
        ];
        for order in [RuleOrder::FixedPriority, RuleOrder::Random { seed: 7 }] {
            let run = || {
                let mut n = node(1);
                n.config.rule_order = order;
                n.rng = Node::<TaggedApp>::new(
                    ProcessId(1),
                    n.validators.clone(),
                    n.app.clone(),
                    n.config.clone(),
                )
                .rng;
                inputs
                    .iter()
                    .flat_map(|i| n.handle(i.clone()))
                    .collect::<Vec<_>>()
            };
            let a = run();
            assert_eq!(a, run());
            assert!(a.iter().any(|o| matches!(o, Output::Decide { .. })));
        }
    }
}
