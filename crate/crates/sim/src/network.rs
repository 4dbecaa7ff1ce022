//! Partially synchronous network with gossip.
//!
//! A message sent at time `t` reaches each other process at a time drawn from
//! `[t, max(t, gst) + delta)`. Delivery times come from a keyed hash of the
//! seed, the message bytes, the recipient and a copy counter, so a schedule
//! does not depend on the order in which sends happen to be issued.
//!
//! Gossip: when a correct process receives a message, every correct process
//! whose earliest scheduled copy would arrive after `max(now, gst) + delta`
//! gets a fresh copy inside that window.

use std::collections::{BTreeMap, HashMap};

use sha2::{Digest, Sha256};

use tenderbft_core::{Duration, Message, ProcessId, Time, Timeout};

use crate::scenario::Gst;
use crate::trace::encode_message;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkParams {
    pub gst: Gst,
    pub delta: Duration,
    pub seed: u64,
    pub duplicate_permille: u32,
    pub lossy_pre_gst: bool,
    pub async_max_delay: Duration,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Deliver { to: ProcessId, msg: Message },
    TimeoutFire { process: ProcessId, timeout: Timeout },
    /// A Byzantine send held back until this instant.
    Release {
        from: ProcessId,
        msg: Message,
        to: Vec<ProcessId>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub time: Time,
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct MsgKey([u8; 32]);

#[derive(Clone, Debug)]
struct Tracking {
    /// Earliest scheduled arrival per recipient.
    earliest: Vec<Option<Time>>,
    copies: u32,
}

#[derive(Clone, Debug)]
pub struct Network {
    params: NetworkParams,
    correct: Vec<bool>,
    queue: BTreeMap<(Time, u64), EventKind>,
    seq: u64,
    tracked: HashMap<MsgKey, Tracking>,
    deliveries: u64,
}

impl Network {
    pub fn new(params: NetworkParams, correct: Vec<bool>) -> Self {
        Network {
            params,
            correct,
            queue: BTreeMap::new(),
            seq: 0,
            tracked: HashMap::new(),
            deliveries: 0,
        }
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.correct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correct.is_empty()
    }

    /// Number of delivery events scheduled so far.
    pub fn deliveries_scheduled(&self) -> u64 {
        self.deliveries
    }

    /// Latest admissible arrival time (inclusive) for something in flight at `now`.
    pub fn deadline(&self, now: Time) -> Time {
        match self.params.gst {
            Gst::At(g) => now.max(g) + self.params.delta - 1,
            Gst::Never => now + self.params.async_max_delay,
        }
    }

    pub fn pop(&mut self) -> Option<Event> {
        let ((time, _), kind) = self.queue.pop_first()?;
        Some(Event { time, kind })
    }

    pub fn peek_time(&self) -> Option<Time> {
        self.queue.keys().next().map(|(t, _)| *t)
    }

    fn push(&mut self, time: Time, kind: EventKind) {
        if matches!(kind, EventKind::Deliver { .. }) {
            self.deliveries += 1;
        }
        self.queue.insert((time, self.seq), kind);
        self.seq += 1;
    }

    pub fn schedule_timeout(&mut self, process: ProcessId, timeout: Timeout, at: Time) {
        self.push(at, EventKind::TimeoutFire { process, timeout });
    }

    pub fn schedule_release(&mut self, at: Time, from: ProcessId, msg: Message, to: Vec<ProcessId>) {
        self.push(at, EventKind::Release { from, msg, to });
    }

    /// Sends `msg` from `from` to every other process.
    pub fn broadcast(&mut self, now: Time, from: ProcessId, msg: &Message) {
        let to: Vec<ProcessId> = (0..self.len() as u32)
            .map(ProcessId)
            .filter(|p| *p != from)
            .collect();
        self.send(now, msg, &to);
    }

    /// Sends `msg` to the listed processes.
    pub fn send(&mut self, now: Time, msg: &Message, to: &[ProcessId]) {
        let key = key_of(msg);
        let n = self.len();
        let mut tracking = self.tracked.remove(&key).unwrap_or(Tracking {
            earliest: vec![None; n],
            copies: 0,
        });
        for &q in to {
            if q.index() >= n {
                continue;
            }
            let copy = tracking.copies;
            tracking.copies += 1;
            let at = self.original_arrival(now, &key, q, copy);
            self.note(&mut tracking, q, at);
            self.push(at, EventKind::Deliver { to: q, msg: msg.clone() });
            if self.params.duplicate_permille > 0 {
                let coin = self.prf(&key, q, copy, 1) % 1000;
                if coin < u64::from(self.params.duplicate_permille) {
                    let at = self.window(now, self.deadline(now), &key, q, copy, 2);
                    self.push(at, EventKind::Deliver { to: q, msg: msg.clone() });
                }
            }
        }
        self.tracked.insert(key, tracking);
    }

    /// Gossip on receipt: makes sure every correct process gets `msg` by
    /// `deadline(now)`.
    pub fn relay(&mut self, now: Time, receiver: ProcessId, msg: &Message) {
        let key = key_of(msg);
        let deadline = self.deadline(now);
        let n = self.len();
        let mut tracking = self.tracked.remove(&key).unwrap_or(Tracking {
            earliest: vec![None; n],
            copies: 0,
        });
        for i in 0..n {
            let q = ProcessId(i as u32);
            if q == receiver || q == msg.sender || !self.correct[i] {
                continue;
            }
            if tracking.earliest[i].is_some_and(|t| t <= deadline) {
                continue;
            }
            let copy = tracking.copies;
            tracking.copies += 1;
            let at = self.window(now, deadline, &key, q, copy, 0);
            self.note(&mut tracking, q, at);
            self.push(at, EventKind::Deliver { to: q, msg: msg.clone() });
        }
        self.tracked.insert(key, tracking);
    }

    fn note(&self, tracking: &mut Tracking, q: ProcessId, at: Time) {
        let slot = &mut tracking.earliest[q.index()];
        *slot = Some(slot.map_or(at, |t| t.min(at)));
    }

    fn original_arrival(&self, now: Time, key: &MsgKey, q: ProcessId, copy: u32) -> Time {
        if let Gst::At(g) = self.params.gst {
            if self.params.lossy_pre_gst && now < g && self.prf(key, q, copy, 3).is_multiple_of(2) {
                // lost, then retransmitted once the network stabilises
                return self.window(g, self.deadline(g), key, q, copy, 4);
            }
        }
        self.window(now, self.deadline(now), key, q, copy, 0)
    }

    /// Uniform-ish point of `[lo, hi]`.
    fn window(&self, lo: Time, hi: Time, key: &MsgKey, q: ProcessId, copy: u32, salt: u8) -> Time {
        let span = hi.saturating_sub(lo) + 1;
        lo + self.prf(key, q, copy, salt) % span
    }

    fn prf(&self, key: &MsgKey, q: ProcessId, copy: u32, salt: u8) -> u64 {
        let mut h = Sha256::new();
        h.update(self.params.seed.to_be_bytes());
        h.update(key.0);
        h.update(q.0.to_be_bytes());
        h.update(copy.to_be_bytes());
        h.update([salt]);
        let d = h.finalize();
        u64::from_be_bytes(d[..8].try_into().expect("digest has 8 bytes"))
    }
}

fn key_of(msg: &Message) -> MsgKey {
    MsgKey(Sha256::digest(encode_message(msg).as_bytes()).into())
}
