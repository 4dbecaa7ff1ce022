//! Newline-delimited trace records.
//!
//! One record per line, `key=value` fields separated by single spaces, keys
//! in a fixed order:
//!
//! ```text
//! t=<time> p=<process|-> ev=<event> <event fields...>
//! ```
//!
//! Messages are written as `kind=.. h=.. r=.. from=..` followed by
//! `value=<payload hex> vr=<round|-1>` for proposals or `vote=<id hex|nil>`
//! for votes. `docs/trace-format.md` lists every event.

use std::fmt::Write as _;

use thiserror::Error;

use tenderbft_core::{
    Height, Message, MessageBody, MessageKind, ProcessId, Round, Rule, StateSnapshot, Step, Time,
    Timeout, TimeoutKind, Value, ValueId, VoteValue,
};

pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Recipients {
    All,
    Only(Vec<ProcessId>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    QueueExhausted,
    TimeCapReached,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::QueueExhausted => "liveness-failure:queue-exhausted",
            RunStatus::TimeCapReached => "liveness-failure:time-cap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            RunStatus::Complete,
            RunStatus::QueueExhausted,
            RunStatus::TimeCapReached,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }

    pub fn is_liveness_failure(self) -> bool {
        self != RunStatus::Complete
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    Header {
        version: u32,
        seed: u64,
        processes: usize,
        scenario: String,
    },
    Send {
        msg: Message,
        to: Recipients,
    },
    Deliver {
        msg: Message,
    },
    Rule {
        rule: Rule,
        height: Height,
        round: Round,
    },
    TimeoutSchedule {
        timeout: Timeout,
        fire_at: Time,
    },
    TimeoutFire {
        timeout: Timeout,
    },
    State(StateSnapshot),
    Decide {
        height: Height,
        round: Round,
        value: Value,
    },
    Evidence {
        sender: ProcessId,
        kind: MessageKind,
        height: Height,
        round: Round,
        first: Option<ValueId>,
        second: Option<ValueId>,
    },
    Anomaly {
        reason: String,
    },
    End {
        status: RunStatus,
    },
}

impl TraceEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TraceEvent::Header { .. } => "header",
            TraceEvent::Send { .. } => "send",
            TraceEvent::Deliver { .. } => "deliver",
            TraceEvent::Rule { .. } => "rule-fire",
            TraceEvent::TimeoutSchedule { .. } => "timeout-schedule",
            TraceEvent::TimeoutFire { .. } => "timeout-fire",
            TraceEvent::State(_) => "state-change",
            TraceEvent::Decide { .. } => "decide",
            TraceEvent::Evidence { .. } => "evidence",
            TraceEvent::Anomaly { .. } => "anomaly",
            TraceEvent::End { .. } => "end",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: Time,
    pub process: Option<ProcessId>,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {reason}")]
pub struct TraceParseError {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, time: Time, process: Option<ProcessId>, event: TraceEvent) {
        self.records.push(TraceRecord {
            time,
            process,
            event,
        });
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            encode_record(r, &mut out);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(decode_record(line).map_err(|reason| TraceParseError {
                line: i + 1,
                reason,
            })?);
        }
        Ok(Trace { records })
    }

    pub fn status(&self) -> Option<RunStatus> {
        self.records.iter().rev().find_map(|r| match r.event {
            TraceEvent::End { status } => Some(status),
            _ => None,
        })
    }

    /// Time of the last record.
    pub fn end_time(&self) -> Time {
        self.records.last().map_or(0, |r| r.time)
    }

    pub fn seed(&self) -> Option<u64> {
        self.records.first().and_then(|r| match r.event {
            TraceEvent::Header { seed, .. } => Some(seed),
            _ => None,
        })
    }
}

fn round_or_minus(r: Option<Round>) -> String {
    r.map_or_else(|| "-1".to_string(), |r| r.to_string())
}

fn vote_str(v: VoteValue) -> String {
    match v {
        VoteValue::Nil => "nil".into(),
        VoteValue::Id(id) => id.to_hex(),
    }
}

fn opt_id_str(v: Option<ValueId>) -> String {
    v.map_or_else(|| "nil".into(), |id| id.to_hex())
}

/// Canonical single-line encoding of a message.
pub fn encode_message(msg: &Message) -> String {
    let mut s = String::new();
    write_message(msg, &mut s);
    s
}

fn write_message(msg: &Message, out: &mut String) {
    let _ = write!(
        out,
        "kind={} h={} r={} from={}",
        msg.kind(),
        msg.height,
        msg.round,
        msg.sender.0
    );
    match &msg.body {
        MessageBody::Proposal { value, valid_round } => {
            let _ = write!(
                out,
                " value={} vr={}",
                hex::encode(value.payload()),
                round_or_minus(*valid_round)
            );
        }
        MessageBody::Prevote(v) | MessageBody::Precommit(v) => {
            let _ = write!(out, " vote={}", vote_str(*v));
        }
    }
}

fn encode_record(r: &TraceRecord, out: &mut String) {
    let p = r.process.map_or_else(|| "-".to_string(), |p| p.0.to_string());
    let _ = write!(out, "t={} p={} ev={}", r.time, p, r.event.name());
    match &r.event {
        TraceEvent::Header {
            version,
            seed,
            processes,
            scenario,
        } => {
            let _ = write!(out, " version={version} seed={seed} n={processes} scenario={scenario}");
        }
        TraceEvent::Send { msg, to } => {
            out.push(' ');
            write_message(msg, out);
            match to {
                Recipients::All => out.push_str(" to=all"),
                Recipients::Only(list) => {
                    let ids: Vec<String> = list.iter().map(|p| p.0.to_string()).collect();
                    let _ = write!(out, " to={}", ids.join(","));
                }
            }
        }
        TraceEvent::Deliver { msg } => {
            out.push(' ');
            write_message(msg, out);
        }
        TraceEvent::Rule {
            rule,
            height,
            round,
        } => {
            let _ = write!(out, " rule={rule} h={height} r={round}");
        }
        TraceEvent::TimeoutSchedule { timeout, fire_at } => {
            let _ = write!(
                out,
                " kind={} h={} r={} at={}",
                timeout.kind, timeout.height, timeout.round, fire_at
            );
        }
        TraceEvent::TimeoutFire { timeout } => {
            let _ = write!(
                out,
                " kind={} h={} r={}",
                timeout.kind, timeout.height, timeout.round
            );
        }
        TraceEvent::State(s) => {
            let _ = write!(
                out,
                " h={} r={} step={} lr={} lv={} vr={} vv={}",
                s.height,
                s.round,
                s.step,
                round_or_minus(s.locked_round()),
                opt_id_str(s.locked.map(|(_, id)| id)),
                round_or_minus(s.valid_round()),
                opt_id_str(s.valid.map(|(_, id)| id)),
            );
        }
        TraceEvent::Decide {
            height,
            round,
            value,
        } => {
            let _ = write!(
                out,
                " h={height} r={round} id={} value={}",
                value.id().to_hex(),
                hex::encode(value.payload())
            );
        }
        TraceEvent::Evidence {
            sender,
            kind,
            height,
            round,
            first,
            second,
        } => {
            let _ = write!(
                out,
                " sender={} kind={} h={} r={} first={} second={}",
                sender.0,
                kind,
                height,
                round,
                opt_id_str(*first),
                opt_id_str(*second)
            );
        }
        TraceEvent::Anomaly { reason } => {
            let _ = write!(out, " reason={reason}");
        }
        TraceEvent::End { status } => {
            let _ = write!(out, " status={}", status.as_str());
        }
    }
}

struct Fields<'a> {
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn new(line: &'a str) -> Result<Self, String> {
        let pairs = line
            .split(' ')
            .map(|tok| {
                tok.split_once('=')
                    .ok_or_else(|| format!("field `{tok}` is not key=value"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Fields { pairs })
    }

    fn get(&self, key: &str) -> Result<&'a str, String> {
        self.pairs
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| format!("missing field `{key}`"))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| format!("field `{key}`: bad number `{raw}`"))
    }

    fn opt_round(&self, key: &str) -> Result<Option<Round>, String> {
        match self.get(key)? {
            "-1" => Ok(None),
            _ => self.num(key).map(Some),
        }
    }

    fn opt_id(&self, key: &str) -> Result<Option<ValueId>, String> {
        match self.get(key)? {
            "nil" => Ok(None),
            raw => ValueId::from_hex(raw)
                .map(Some)
                .ok_or_else(|| format!("field `{key}`: bad value id")),
        }
    }

    fn process(&self, key: &str) -> Result<ProcessId, String> {
        self.num(key).map(ProcessId)
    }

    fn payload(&self, key: &str) -> Result<Value, String> {
        hex::decode(self.get(key)?)
            .map(Value::new)
            .map_err(|_| format!("field `{key}`: bad hex"))
    }

    fn timeout(&self) -> Result<Timeout, String> {
        let kind = self.get("kind")?;
        Ok(Timeout {
            kind: TimeoutKind::parse(kind).ok_or_else(|| format!("bad timeout kind `{kind}`"))?,
            height: self.num("h")?,
            round: self.num("r")?,
        })
    }

    fn kind(&self) -> Result<MessageKind, String> {
        match self.get("kind")? {
            "PROPOSAL" => Ok(MessageKind::Proposal),
            "PREVOTE" => Ok(MessageKind::Prevote),
            "PRECOMMIT" => Ok(MessageKind::Precommit),
            other => Err(format!("bad message kind `{other}`")),
        }
    }

    fn message(&self) -> Result<Message, String> {
        let height = self.num("h")?;
        let round = self.num("r")?;
        let sender = self.process("from")?;
        let vote = || self.opt_id("vote").map(|v| v.map_or(VoteValue::Nil, VoteValue::Id));
        Ok(match self.kind()? {
            MessageKind::Proposal => Message::proposal(
                height,
                round,
                sender,
                self.payload("value")?,
                self.opt_round("vr")?,
            ),
            MessageKind::Prevote => Message::prevote(height, round, sender, vote()?),
            MessageKind::Precommit => Message::precommit(height, round, sender, vote()?),
        })
    }
}

fn decode_record(line: &str) -> Result<TraceRecord, String> {
    let f = Fields::new(line)?;
    let time = f.num("t")?;
    let process = match f.get("p")? {
        "-" => None,
        _ => Some(f.process("p")?),
    };
    let event = match f.get("ev")? {
        "header" => TraceEvent::Header {
            version: f.num("version")?,
            seed: f.num("seed")?,
            processes: f.num("n")?,
            scenario: f.get("scenario")?.to_string(),
        },
        "send" => TraceEvent::Send {
            msg: f.message()?,
            to: match f.get("to")? {
                "all" => Recipients::All,
                list => Recipients::Only(
                    list.split(',')
                        .map(|s| s.parse().map(ProcessId).map_err(|_| format!("bad recipient `{s}`")))
                        .collect::<Result<_, _>>()?,
                ),
            },
        },
        "deliver" => TraceEvent::Deliver { msg: f.message()? },
        "rule-fire" => TraceEvent::Rule {
            rule: {
                let raw = f.get("rule")?;
                Rule::parse(raw).ok_or_else(|| format!("unknown rule `{raw}`"))?
            },
            height: f.num("h")?,
            round: f.num("r")?,
        },
        "timeout-schedule" => TraceEvent::TimeoutSchedule {
            timeout: f.timeout()?,
            fire_at: f.num("at")?,
        },
        "timeout-fire" => TraceEvent::TimeoutFire {
            timeout: f.timeout()?,
        },
        "state-change" => {
            let step = f.get("step")?;
            let pair = |rk: &str, ik: &str| -> Result<Option<(Round, ValueId)>, String> {
                match (f.opt_round(rk)?, f.opt_id(ik)?) {
                    (Some(r), Some(id)) => Ok(Some((r, id))),
                    (None, None) => Ok(None),
                    _ => Err(format!("`{rk}` and `{ik}` disagree on nil")),
                }
            };
            TraceEvent::State(StateSnapshot {
                height: f.num("h")?,
                round: f.num("r")?,
                step: Step::parse(step).ok_or_else(|| format!("bad step `{step}`"))?,
                locked: pair("lr", "lv")?,
                valid: pair("vr", "vv")?,
            })
        }
        "decide" => {
            let value = f.payload("value")?;
            if Some(value.id()) != f.opt_id("id")? {
                return Err("decided value does not match its id".into());
            }
            TraceEvent::Decide {
                height: f.num("h")?,
                round: f.num("r")?,
                value,
            }
        }
        "evidence" => TraceEvent::Evidence {
            sender: f.process("sender")?,
            kind: f.kind()?,
            height: f.num("h")?,
            round: f.num("r")?,
            first: f.opt_id("first")?,
            second: f.opt_id("second")?,
        },
        "anomaly" => TraceEvent::Anomaly {
            reason: f.get("reason")?.to_string(),
        },
        "end" => TraceEvent::End {
            status: {
                let raw = f.get("status")?;
                RunStatus::parse(raw).ok_or_else(|| format!("bad status `{raw}`"))?
            },
        },
        other => return Err(format!("unknown event `{other}`")),
    };
    Ok(TraceRecord {
        time,
        process,
        event,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_event_roundtrips() {
        let v = Value::new(b"payload".to_vec());
        let id = v.id();
        let events = vec![
            TraceEvent::Header {
                version: 1,
                seed: 9,
                processes: 4,
                scenario: "abcd".into(),
            },
            TraceEvent::Send {
                msg: Message::proposal(0, 2, ProcessId(1), v.clone(), Some(1)),
                to: Recipients::All,
            },
            TraceEvent::Send {
                msg: Message::prevote(0, 2, ProcessId(1), VoteValue::Nil),
                to: Recipients::Only(vec![ProcessId(0), ProcessId(3)]),
            },
            TraceEvent::Deliver {
                msg: Message::precommit(1, 0, ProcessId(2), VoteValue::Id(id)),
            },
            TraceEvent::Rule {
                rule: Rule::Lock,
                height: 0,
                round: 2,
            },
            TraceEvent::TimeoutSchedule {
                timeout: Timeout {
                    kind: TimeoutKind::Prevote,
                    height: 0,
                    round: 2,
                },
                fire_at: 99,
            },
            TraceEvent::TimeoutFire {
                timeout: Timeout {
                    kind: TimeoutKind::Precommit,
                    height: 0,
                    round: 2,
                },
            },
            TraceEvent::State(StateSnapshot {
                height: 0,
                round: 2,
                step: Step::Precommit,
                locked: Some((2, id)),
                valid: Some((2, id)),
            }),
            TraceEvent::State(StateSnapshot {
                height: 1,
                round: 0,
                step: Step::Propose,
                locked: None,
                valid: None,
            }),
            TraceEvent::Decide {
                height: 0,
                round: 2,
                value: v.clone(),
            },
            TraceEvent::Evidence {
                sender: ProcessId(3),
                kind: MessageKind::Prevote,
                height: 0,
                round: 0,
                first: Some(id),
                second: None,
            },
            TraceEvent::Anomaly {
                reason: "invalid-decision-value".into(),
            },
            TraceEvent::End {
                status: RunStatus::TimeCapReached,
            },
        ];
        let mut trace = Trace::default();
        for (i, e) in events.into_iter().enumerate() {
            trace.push(i as u64, if i % 2 == 0 { Some(ProcessId(1)) } else { None }, e);
        }
        let text = trace.to_text();
        assert_eq!(Trace::parse(&text).unwrap(), trace);
        assert_eq!(trace.status(), Some(RunStatus::TimeCapReached));
        assert_eq!(trace.seed(), Some(9));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Trace::parse("t=0 p=- ev=end status=complete\nt=1 p=0 ev=bogus\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(Trace::parse("t=x p=- ev=end status=complete").is_err());
    }
}
