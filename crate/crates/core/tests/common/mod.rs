#![allow(dead_code)]

use rottcc_core::netsim::{
    build_chain, build_mobile, default_mobile_script, FlowSpec, LinkParams, SimConfig, Topology,
    DEFAULT_ACK_SIZE, DEFAULT_QUEUE_CAPACITY,
};
use rottcc_core::sender::SenderConfig;
use rottcc_core::{AlgorithmId, SimTime};

pub fn link(per: f64) -> LinkParams {
    LinkParams {
        packet_error_rate: per,
        ..LinkParams::default()
    }
}

pub fn chain(n_hops: usize, per: f64) -> Topology {
    build_chain(n_hops, link(per)).unwrap()
}

pub fn mobile(duration: f64, outage: f64, per: f64) -> Topology {
    build_mobile(default_mobile_script(duration, outage).unwrap(), link(per)).unwrap()
}

pub fn flows(n: usize, algorithm: AlgorithmId, stagger: f64) -> Vec<FlowSpec> {
    (0..n)
        .map(|i| FlowSpec {
            start: SimTime::from_secs(stagger * i as f64),
            algorithm,
            sender: SenderConfig::default().with_algorithm(algorithm),
        })
        .collect()
}

pub fn config(topology: Topology, flows: Vec<FlowSpec>, duration: f64, seed: u64) -> SimConfig {
    SimConfig {
        topology,
        queue_capacity: DEFAULT_QUEUE_CAPACITY,
        ack_size: DEFAULT_ACK_SIZE,
        flows,
        duration: SimTime::from_secs(duration),
        seed,
        delayed_ack: false,
        receiver_clock_offset: 0.0,
        record_trace: true,
    }
}
