use std::collections::BTreeSet;

use crate::types::{AckEcho, PacketKind, SimTime};

pub const DELAYED_ACK_TIMEOUT: f64 = 0.1;

/// What the receiver wants to do after a data packet arrives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReceiverAction {
    Ack(PacketKind, AckEcho),
    /// Ack withheld; send it if nothing else arrives within the delayed-ack timeout.
    Hold,
}

/// Cumulative-ack receiver with an out-of-order buffer.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    cumulative: u64,
    buffered: BTreeSet<u64>,
    delayed_ack: bool,
    held: Option<AckEcho>,
    hold_generation: u64,
    distinct_delivered: u64,
}

impl Receiver {
    pub fn new(delayed_ack: bool) -> Self {
        Receiver {
            delayed_ack,
            ..Self::default()
        }
    }

    pub fn cumulative(&self) -> u64 {
        self.cumulative
    }

    pub fn distinct_delivered(&self) -> u64 {
        self.distinct_delivered
    }

    pub fn hold_generation(&self) -> u64 {
        self.hold_generation
    }

    pub fn on_data(
        &mut self,
        seq: u64,
        send_time: SimTime,
        receiver_timestamp: SimTime,
        hop_count: u32,
    ) -> ReceiverAction {
        let was_new = seq > self.cumulative && !self.buffered.contains(&seq);
        if was_new {
            self.distinct_delivered += 1;
        }
        let in_order = seq == self.cumulative + 1;
        if in_order {
            self.cumulative = seq;
            while self.buffered.remove(&(self.cumulative + 1)) {
                self.cumulative += 1;
            }
        } else if seq > self.cumulative {
            self.buffered.insert(seq);
        }
        let echo = AckEcho {
            acked_seq: self.cumulative,
            receiver_timestamp,
            hop_count,
            trigger_seq: seq,
            data_send_time: send_time,
        };
        if !in_order {
            self.held = None;
            return ReceiverAction::Ack(PacketKind::DupAck, echo);
        }
        if self.delayed_ack && self.buffered.is_empty() {
            if self.held.take().is_none() {
                self.held = Some(echo);
                self.hold_generation += 1;
                return ReceiverAction::Hold;
            }
        } else {
            self.held = None;
        }
        ReceiverAction::Ack(PacketKind::Ack, echo)
    }

    /// Release a held ack if `generation` still names it.
    pub fn on_delayed_ack_timer(&mut self, generation: u64) -> Option<AckEcho> {
        if generation != self.hold_generation {
            return None;
        }
        self.held.take()
    }
}
