use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::LatencyModel;
use crate::consensus::{Dest, Envelope, MessageKind};
use crate::ledger::{sha256_parts, Digest};
use crate::trust::NodeId;

/// Timers sort after every real sender at the same tick.
pub const TIMER_SENDER: u32 = u32::MAX;

/// Independent generator for one subsystem, derived from the scenario seed
/// and a fixed label.
pub fn subsystem_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let d = sha256_parts(&[&seed.to_be_bytes(), label.as_bytes()]);
    ChaCha8Rng::from_seed(d.0)
}

/// Everything that identifies one transmission for latency sampling.
#[derive(Debug, Clone, Copy)]
pub struct LinkKey<'a> {
    pub channel: &'a str,
    pub round: u64,
    pub attempt: u32,
    pub sender: NodeId,
    pub dest: Dest,
    pub kind: MessageKind,
    pub block_hash: &'a Digest,
}

/// Delay and drop decision as a pure function of the seed and the message,
/// so the outcome does not depend on how many messages came before it.
pub fn sample_link(seed: u64, model: &LatencyModel, key: &LinkKey<'_>) -> Option<u64> {
    let (dest_tag, dest_id) = match key.dest {
        Dest::Node(n) => (0u8, n.0),
        Dest::Client(n) => (1u8, n.0),
    };
    let d = sha256_parts(&[
        b"latency",
        &seed.to_be_bytes(),
        key.channel.as_bytes(),
        &key.round.to_be_bytes(),
        &key.attempt.to_be_bytes(),
        &key.sender.0.to_be_bytes(),
        &[dest_tag],
        &dest_id.to_be_bytes(),
        &[key.kind.tag()],
        key.block_hash.as_bytes(),
    ]);
    let word = |i: usize| u64::from_be_bytes(d.0[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
    let unit = (word(1) >> 11) as f64 / (1u64 << 53) as f64;
    if unit < model.drop_probability {
        return None;
    }
    let span = model.max - model.min + 1;
    Some(model.min + word(0) % span)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Deliver(Envelope),
    StageTimeout(NodeId),
    Deadline,
}

/// Pending events in (tick, sender, sequence) order.
#[derive(Debug, Default)]
pub struct EventQueue {
    events: BTreeMap<(u64, u32, u64), Event>,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tick: u64, sender: u32, event: Event) {
        self.seq += 1;
        self.events.insert((tick, sender, self.seq), event);
    }

    pub fn pop(&mut self) -> Option<(u64, Event)> {
        self.events.pop_first().map(|((t, _, _), e)| (t, e))
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn key(h: &Digest, sender: u32) -> LinkKey<'_> {
        LinkKey {
            channel: "c",
            round: 3,
            attempt: 0,
            sender: NodeId(sender),
            dest: Dest::Node(NodeId(2)),
            kind: MessageKind::Prepare,
            block_hash: h,
        }
    }

    #[test]
    fn latency_in_range_and_stable() {
        let m = LatencyModel { min: 2, max: 6, drop_probability: 0.0 };
        let h = Digest::ZERO;
        for s in 0..200 {
            let d = sample_link(s, &m, &key(&h, 1)).unwrap();
            assert!((2..=6).contains(&d));
            assert_eq!(sample_link(s, &m, &key(&h, 1)), Some(d));
        }
    }

    #[test]
    fn drop_rate_roughly_matches() {
        let m = LatencyModel { min: 1, max: 1, drop_probability: 0.25 };
        let h = Digest::ZERO;
        let dropped = (0..4000).filter(|&s| sample_link(s, &m, &key(&h, 1)).is_none()).count();
        assert!((800..1200).contains(&dropped), "{dropped}");
    }

    #[test]
    fn queue_orders_by_tick_then_sender() {
        let mut q = EventQueue::new();
        q.push(5, 3, Event::Deadline);
        q.push(5, 1, Event::StageTimeout(NodeId(1)));
        q.push(2, TIMER_SENDER, Event::StageTimeout(NodeId(9)));
        q.push(5, 1, Event::StageTimeout(NodeId(2)));
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(
            order,
            vec![
                (2, Event::StageTimeout(NodeId(9))),
                (5, Event::StageTimeout(NodeId(1))),
                (5, Event::StageTimeout(NodeId(2))),
                (5, Event::Deadline),
            ]
        );
    }

    #[test]
    fn labels_split_streams() {
        let a: u64 = subsystem_rng(42, "workload").gen();
        let b: u64 = subsystem_rng(42, "faults").gen();
        let c: u64 = subsystem_rng(42, "workload").gen();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
