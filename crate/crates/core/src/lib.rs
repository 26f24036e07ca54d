//! Deterministic multi-hop wireless simulator and TCP-like senders that tell
//! congestion, wireless-error and link-failure losses apart from relative
//! one-way trip times.

pub mod classifier;
pub mod error;
pub mod harness;
pub mod netsim;
pub mod rng;
pub mod sender;
pub mod trip_time;
pub mod types;

pub use types::{
    AckEcho, AlgorithmId, DetectionKind, FlowId, LossCause, LossEvent, NodeId, Packet, PacketKind,
    SimTime,
};
