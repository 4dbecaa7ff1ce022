//! Discrete-event driver.

use std::sync::Arc;

use tenderbft_core::{
    Height, Input, Message, Node, NodeConfig, Output, ProcessId, RuleOrder, TaggedApp, Time,
    ValidatorSet,
};

use crate::adversary::Adversary;
use crate::network::{Event, EventKind, Network, NetworkParams};
use crate::scenario::{RuleOrderName, Scenario, ScenarioError};
use crate::trace::{Recipients, RunStatus, Trace, TraceEvent, TRACE_VERSION};

struct Process {
    /// `None` for silent processes.
    node: Option<Node<TaggedApp>>,
    adversary: Option<Adversary>,
}

impl Process {
    fn is_correct(&self) -> bool {
        self.adversary.is_none()
    }
}

/// A scenario being executed.
pub struct Simulation {
    scenario: Scenario,
    validators: Arc<ValidatorSet>,
    net: Network,
    procs: Vec<Process>,
    trace: Trace,
    now: Time,
    started: bool,
    status: Option<RunStatus>,
}

#[derive(Debug)]
pub struct RunResult {
    pub trace: Trace,
    pub status: RunStatus,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let validators = scenario.validator_set()?;
        let n = validators.len();
        let rule_order = match scenario.rule_order {
            RuleOrderName::Fixed => RuleOrder::FixedPriority,
            RuleOrderName::Random => RuleOrder::Random {
                seed: scenario.seed,
            },
        };
        let config = NodeConfig {
            timeouts: scenario.timeouts,
            rule_order,
            log: scenario.log_config(),
        };
        let procs = validators
            .ids()
            .map(|p| {
                let adversary = scenario
                    .adversary
                    .iter()
                    .find(|a| a.process == p)
                    .map(|a| {
                        Adversary::new(
                            p,
                            a.behavior().expect("validated"),
                            n,
                            scenario.seed,
                            scenario.limits.adversary_sends_per_round,
                            scenario.limits.future_heights,
                        )
                    });
                let silent = adversary
                    .as_ref()
                    .is_some_and(|a| a.behavior() == crate::adversary::Behavior::Silent);
                let node = (!silent).then(|| {
                    Node::new(
                        p,
                        validators.clone(),
                        TaggedApp::new(p, scenario.validity),
                        config.clone(),
                    )
                });
                Process { node, adversary }
            })
            .collect::<Vec<_>>();
        let correct = procs.iter().map(Process::is_correct).collect();
        let net = Network::new(
            NetworkParams {
                gst: scenario.network.gst,
                delta: scenario.network.delta,
                seed: scenario.seed,
                duplicate_permille: scenario.network.duplicate_permille,
                lossy_pre_gst: scenario.network.lossy_pre_gst,
                async_max_delay: scenario
                    .network
                    .async_max_delay
                    .unwrap_or(10 * scenario.network.delta),
            },
            correct,
        );
        Ok(Simulation {
            scenario: scenario.clone(),
            validators,
            net,
            procs,
            trace: Trace::default(),
            now: 0,
            started: false,
            status: None,
        })
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn validators(&self) -> &ValidatorSet {
        &self.validators
    }

    pub fn node(&self, p: ProcessId) -> Option<&Node<TaggedApp>> {
        self.procs.get(p.index()).and_then(|pr| pr.node.as_ref())
    }

    pub fn is_correct(&self, p: ProcessId) -> bool {
        self.procs.get(p.index()).is_some_and(Process::is_correct)
    }

    /// True once every correct process has decided heights `0..heights`.
    pub fn all_decided(&self, heights: Height) -> bool {
        self.procs.iter().filter(|p| p.is_correct()).all(|p| {
            p.node
                .as_ref()
                .is_some_and(|n| (0..heights).all(|h| n.decision(h).is_some()))
        })
    }

    fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        self.trace.push(
            0,
            None,
            TraceEvent::Header {
                version: TRACE_VERSION,
                seed: self.scenario.seed,
                processes: self.procs.len(),
                scenario: self.scenario.fingerprint(),
            },
        );
        for i in 0..self.procs.len() {
            self.feed(ProcessId(i as u32), Input::Start);
        }
    }

    /// Runs until `stop` holds (checked between events), the queue empties
    /// or the next event lies beyond `time_cap`.
    pub fn run_until(&mut self, time_cap: Time, mut stop: impl FnMut(&Simulation) -> bool) -> RunStatus {
        self.start();
        if let Some(s) = self.status {
            return s;
        }
        let status = loop {
            if stop(self) {
                break RunStatus::Complete;
            }
            match self.net.peek_time() {
                None => break RunStatus::QueueExhausted,
                Some(t) if t > time_cap => break RunStatus::TimeCapReached,
                Some(_) => {}
            }
            let event = self.net.pop().expect("peeked");
            self.dispatch(event);
        };
        self.status = Some(status);
        self.trace.push(self.now, None, TraceEvent::End { status });
        status
    }

    /// Runs the scenario to completion or to its liveness cap.
    pub fn run(mut self) -> RunResult {
        let heights = self.scenario.heights;
        let cap = self.scenario.time_cap();
        let status = self.run_until(cap, |s| s.all_decided(heights));
        RunResult {
            trace: self.trace,
            status,
        }
    }

    fn dispatch(&mut self, event: Event) {
        self.now = event.time;
        match event.kind {
            EventKind::Deliver { to, msg } => {
                self.trace.push(self.now, Some(to), TraceEvent::Deliver { msg: msg.clone() });
                if self.is_correct(to) {
                    self.net.relay(self.now, to, &msg);
                }
                self.feed(to, Input::Message(msg));
            }
            EventKind::TimeoutFire { process, timeout } => {
                if self.is_correct(process) {
                    self.trace.push(self.now, Some(process), TraceEvent::TimeoutFire { timeout });
                }
                self.feed(process, Input::Timeout(timeout));
            }
            EventKind::Release { from, msg, to } => self.wire(from, msg, to),
        }
    }

    fn wire(&mut self, from: ProcessId, msg: Message, to: Vec<ProcessId>) {
        self.trace.push(
            self.now,
            Some(from),
            TraceEvent::Send {
                msg: msg.clone(),
                to: Recipients::Only(to.clone()),
            },
        );
        self.net.send(self.now, &msg, &to);
    }

    fn feed(&mut self, p: ProcessId, input: Input) {
        let Some(node) = self.procs[p.index()].node.as_mut() else {
            return;
        };
        let outputs = node.handle(input);
        let correct = self.procs[p.index()].is_correct();
        for out in outputs {
            self.apply(p, correct, out);
        }
    }

    fn apply(&mut self, p: ProcessId, correct: bool, out: Output) {
        let now = self.now;
        match out {
            Output::Broadcast(msg) if correct => {
                self.trace.push(
                    now,
                    Some(p),
                    TraceEvent::Send {
                        msg: msg.clone(),
                        to: Recipients::All,
                    },
                );
                self.net.broadcast(now, p, &msg);
            }
            Output::Broadcast(msg) => {
                let proc = &mut self.procs[p.index()];
                let log = proc.node.as_ref().expect("shadow node").log();
                let sends = proc.adversary.as_mut().expect("byzantine").transform(&msg, log);
                for s in sends {
                    if s.delay == 0 {
                        self.wire(p, s.msg, s.to);
                    } else {
                        self.net.schedule_release(now + s.delay, p, s.msg, s.to);
                    }
                }
            }
            Output::ScheduleTimeout { timeout, duration } => {
                if correct {
                    self.trace.push(
                        now,
                        Some(p),
                        TraceEvent::TimeoutSchedule {
                            timeout,
                            fire_at: now + duration,
                        },
                    );
                }
                self.net.schedule_timeout(p, timeout, now + duration);
            }
            _ if !correct => {}
            Output::Decide {
                height,
                round,
                value,
            } => self.trace.push(
                now,
                Some(p),
                TraceEvent::Decide {
                    height,
                    round,
                    value,
                },
            ),
            Output::StartHeight(_) => {}
            Output::RuleFired {
                rule,
                height,
                round,
            } => self.trace.push(
                now,
                Some(p),
                TraceEvent::Rule {
                    rule,
                    height,
                    round,
                },
            ),
            Output::StateChanged(s) => self.trace.push(now, Some(p), TraceEvent::State(s)),
            Output::Evidence(e) => self.trace.push(
                now,
                Some(p),
                TraceEvent::Evidence {
                    sender: e.sender,
                    kind: e.first.kind(),
                    height: e.first.height,
                    round: e.first.round,
                    first: e.first.value_id(),
                    second: e.second.value_id(),
                },
            ),
            Output::Anomaly(a) => {
                let reason = match a {
                    tenderbft_core::Anomaly::Rejected { error, .. } => {
                        format!("rejected:{}", error).replace(' ', "_")
                    }
                    tenderbft_core::Anomaly::InvalidDecisionValue { .. } => {
                        "invalid-decision-value".to_string()
                    }
                };
                self.trace.push(now, Some(p), TraceEvent::Anomaly { reason });
            }
        }
    }
}

/// Runs `scenario` to completion or to its liveness cap.
pub fn run_scenario(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    Ok(Simulation::new(scenario)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::Behavior;
    use crate::scenario::{AdversaryEntry, Gst};

    #[test]
    fn happy_path_decides_every_height() {
        let mut s = Scenario::basic(4, 1);
        s.heights = 3;
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.status, RunStatus::Complete);
        let decides = r
            .trace
            .records
            .iter()
            .filter(|r| matches!(r.event, TraceEvent::Decide { .. }))
            .count();
        assert_eq!(decides, 12);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut s = Scenario::basic(4, 5);
        s.network.gst = Gst::At(80);
        s.adversary = vec![AdversaryEntry::new(ProcessId(1), Behavior::RandomGarbage)];
        let a = run_scenario(&s).unwrap().trace.to_text();
        let b = run_scenario(&s).unwrap().trace.to_text();
        assert_eq!(a, b);
    }

    #[test]
    fn never_stabilising_network_hits_the_cap_or_completes() {
        let mut s = Scenario::basic(4, 2);
        s.network.gst = Gst::Never;
        s.limits.liveness_rounds = 3;
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.trace.status(), Some(r.status));
    }
}
