//! Discrete-event multi-hop network.
//!
//! Every node owns one byte-counted drop-tail queue and one transmitter
//! shared by data and acks. A packet occupies the transmitter for its
//! serialization time, then propagates to the next hop of the active
//! route (forward for data, backward for acks). The wireless-error lottery
//! is drawn when a packet starts transmission; a losing packet still uses
//! the transmitter and is dropped when transmission ends.
//!
//! Mobility is a [`RouteScript`] of breaks and restorations. A break
//! flushes every queue on the old route and kills every packet on a
//! transmitter or in propagation; packets that show up while no route
//! exists are dropped on the spot.
//!
//! Each drop is recorded with its cause. When a sender later detects a
//! loss, the detection is labelled with the most recent drop of that
//! sequence number, or failing that with the most recent ack drop of the
//! flow since the sender last made progress.

mod events;
mod queue;
mod receiver;
mod sim;
mod topology;

use thiserror::Error;

pub use events::EventQueue;
pub use queue::{NodeQueue, DEFAULT_QUEUE_CAPACITY};
pub use receiver::{Receiver, ReceiverAction, DELAYED_ACK_TIMEOUT};
pub use sim::{
    run, staggered_starts, Conservation, DropRecord, DropSite, FlowOutcome, FlowSpec,
    LabelledLoss, NetEvent, NetTraceRecord, SimConfig, SimOutput, Simulation, DEFAULT_ACK_SIZE,
};
pub use topology::{
    build_chain, build_mobile, default_mobile_script, mobile_route, speed_script, LinkParams,
    Route, RouteScript, ScriptAction, ScriptEntry, Topology, DEFAULT_BANDWIDTH_BPS,
    DEFAULT_PROPAGATION_DELAY, MOBILE_NODE_COUNT, MOBILE_ROUTES,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("event scheduled at {at:.9} but clock is already at {now:.9}")]
    PastEvent { now: f64, at: f64 },
    #[error("flow {flow} at t={time:.9}: {source}")]
    Sender {
        flow: usize,
        time: f64,
        #[source]
        source: crate::sender::SenderError,
    },
    #[error("internal error: {0}")]
    Internal(String),
}
