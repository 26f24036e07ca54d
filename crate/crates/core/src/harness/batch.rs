use rayon::prelude::*;

use crate::harness::metrics::{CellMetrics, MetricsReport};
use crate::harness::scenario::Scenario;
use crate::netsim::{self, FlowSpec, NetError, SimConfig, SimOutput};
use crate::rng::SimRng;
use crate::types::{AlgorithmId, SimTime};

const START_SALT: u64 = 0x5eed;

/// Flow start times drawn uniformly from `[0, stagger)`, flow 0 first.
pub fn random_starts(flow_count: usize, stagger: f64, seed: u64) -> Vec<SimTime> {
    let mut rng = SimRng::new(seed ^ START_SALT);
    (0..flow_count)
        .map(|_| SimTime::from_secs(rng.next_uniform() * stagger))
        .collect()
}

/// Simulator input for one point of a scenario.
pub fn sim_config(
    point: &Scenario,
    algorithm: AlgorithmId,
    seed: u64,
    record_trace: bool,
) -> Result<SimConfig, NetError> {
    let sender = point.sender_for(algorithm);
    let flows = random_starts(point.flow_count, point.stagger, seed)
        .into_iter()
        .map(|start| FlowSpec {
            start,
            algorithm,
            sender: sender.clone(),
        })
        .collect();
    Ok(SimConfig {
        topology: point.build_topology()?,
        queue_capacity: point.queue_capacity,
        ack_size: point.ack_size,
        flows,
        duration: SimTime::from_secs(point.duration),
        seed,
        delayed_ack: point.delayed_ack,
        receiver_clock_offset: point.clock_offset,
        record_trace,
    })
}

/// Outages per minute implied by a topology's script.
pub fn outage_rate(cfg: &SimConfig) -> f64 {
    cfg.topology.script.outages().len() as f64 * 60.0 / cfg.duration.secs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub point: usize,
    pub x: Option<f64>,
    pub algorithm: AlgorithmId,
    pub seed: u64,
}

pub struct BatchResult {
    pub report: MetricsReport,
    /// Raw simulator output per cell, kept only when traces were requested.
    pub outputs: Vec<(CellKey, SimOutput)>,
}

/// Run every (point, algorithm, seed) cell of a scenario in parallel.
/// Results come back in a fixed order regardless of scheduling.
pub fn run_batch(scenario: &Scenario, keep_outputs: bool) -> Result<BatchResult, NetError> {
    let points = scenario.points();
    let mut jobs = Vec::new();
    for (pi, (x, point)) in points.iter().enumerate() {
        for &algorithm in &scenario.algorithms {
            for &seed in &scenario.seeds {
                jobs.push((
                    CellKey {
                        point: pi,
                        x: *x,
                        algorithm,
                        seed,
                    },
                    point,
                ));
            }
        }
    }
    let results: Vec<(CellKey, CellMetrics, Option<SimOutput>)> = jobs
        .par_iter()
        .map(|(key, point)| {
            let cfg = sim_config(point, key.algorithm, key.seed, keep_outputs)?;
            let speed = outage_rate(&cfg);
            let out = netsim::run(cfg)?;
            let cell = CellMetrics::from_output(
                key.point,
                key.x,
                key.algorithm,
                key.seed,
                speed,
                point.link.packet_error_rate,
                &out,
            );
            Ok((*key, cell, keep_outputs.then_some(out)))
        })
        .collect::<Result<_, NetError>>()?;

    let mut cells = Vec::with_capacity(results.len());
    let mut outputs = Vec::new();
    for (key, cell, out) in results {
        cells.push(cell);
        if let Some(out) = out {
            outputs.push((key, out));
        }
    }
    Ok(BatchResult {
        report: MetricsReport {
            scenario: scenario.name.clone(),
            sweep_parameter: scenario.sweep.as_ref().map(|s| s.parameter.as_str()),
            cells,
        },
        outputs,
    })
}
