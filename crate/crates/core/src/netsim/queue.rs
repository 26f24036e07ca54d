use std::collections::VecDeque;

use crate::types::Packet;

pub const DEFAULT_QUEUE_CAPACITY: u32 = 50_000;

/// Byte-counted drop-tail FIFO.
#[derive(Debug, Clone)]
pub struct NodeQueue {
    capacity_bytes: u32,
    occupancy_bytes: u32,
    fifo: VecDeque<Packet>,
}

impl NodeQueue {
    pub fn new(capacity_bytes: u32) -> Self {
        NodeQueue {
            capacity_bytes,
            occupancy_bytes: 0,
            fifo: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> u32 {
        self.capacity_bytes
    }

    pub fn occupancy(&self) -> u32 {
        self.occupancy_bytes
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    /// Accept the packet if it fits; otherwise hand it back untouched.
    pub fn try_enqueue(&mut self, pkt: Packet) -> Result<(), Packet> {
        if u64::from(self.occupancy_bytes) + u64::from(pkt.size_bytes)
            > u64::from(self.capacity_bytes)
        {
            return Err(pkt);
        }
        self.occupancy_bytes += pkt.size_bytes;
        self.fifo.push_back(pkt);
        Ok(())
    }

    pub fn dequeue(&mut self) -> Option<Packet> {
        let pkt = self.fifo.pop_front()?;
        self.occupancy_bytes -= pkt.size_bytes;
        Some(pkt)
    }

    pub fn flush(&mut self) -> Vec<Packet> {
        self.occupancy_bytes = 0;
        self.fifo.drain(..).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.fifo.iter()
    }
}
