use crate::netsim::SimOutput;
use crate::sender::SenderTraceRow;
use crate::types::{AlgorithmId, LossCause, LossEvent};

/// Counts indexed by `[truth][verdict]`, with verdict column 3 for abstentions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub counts: [[u64; 4]; 3],
}

pub const ABSTAIN_COLUMN: usize = 3;

impl Confusion {
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a LossEvent>) -> Self {
        let mut c = Confusion::default();
        for e in events {
            c.add(e);
        }
        c
    }

    pub fn add(&mut self, e: &LossEvent) {
        let col = e.verdict.map_or(ABSTAIN_COLUMN, LossCause::index);
        self.counts[e.truth.index()][col] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn truth_total(&self, truth: LossCause) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn verdict_total(&self, verdict: LossCause) -> u64 {
        self.counts.iter().map(|row| row[verdict.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correct fraction of losses whose truth is `class`; `None` if there were none.
    pub fn recall(&self, class: LossCause) -> Option<f64> {
        let n = self.truth_total(class);
        (n > 0).then(|| self.counts[class.index()][class.index()] as f64 / n as f64)
    }

    /// Fraction of `class` verdicts that were right; `None` if never issued.
    pub fn precision(&self, class: LossCause) -> Option<f64> {
        let n = self.verdict_total(class);
        (n > 0).then(|| self.counts[class.index()][class.index()] as f64 / n as f64)
    }
}

/// Per-class accuracy: AC, AW and AL.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accuracy {
    pub congestion: Option<f64>,
    pub wireless: Option<f64>,
    pub link_failure: Option<f64>,
}

impl Accuracy {
    pub fn get(&self, class: LossCause) -> Option<f64> {
        match class {
            LossCause::Congestion => self.congestion,
            LossCause::WirelessError => self.wireless,
            LossCause::LinkFailure => self.link_failure,
        }
    }
}

pub fn accuracy(events: &[LossEvent]) -> Accuracy {
    let c = Confusion::from_events(events);
    Accuracy {
        congestion: c.recall(LossCause::Congestion),
        wireless: c.recall(LossCause::WirelessError),
        link_failure: c.recall(LossCause::LinkFailure),
    }
}

/// Distinct packets delivered per second.
pub fn throughput(distinct_delivered: u64, duration: f64) -> f64 {
    distinct_delivered as f64 / duration
}

/// Sum of the RTO in force at every data transmission, retransmissions included.
pub fn sum_rto(trace: &[SenderTraceRow]) -> f64 {
    trace
        .iter()
        .filter(|r| r.event.is_transmission())
        .map(|r| r.rto)
        .sum()
}

/// Median of the values present; `None` if there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Everything measured in one (point, algorithm, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub point: usize,
    /// Swept value for this point, if the scenario sweeps.
    pub x: Option<f64>,
    pub algorithm: AlgorithmId,
    pub seed: u64,
    pub flow_count: usize,
    pub per: f64,
    /// Outages per minute implied by the route script.
    pub speed: f64,
    pub accuracy: Accuracy,
    pub confusion: Confusion,
    pub throughput: f64,
    pub sum_rto: f64,
    pub spurious: u64,
    pub losses: Vec<LossEvent>,
}

impl CellMetrics {
    pub fn from_output(
        point: usize,
        x: Option<f64>,
        algorithm: AlgorithmId,
        seed: u64,
        speed: f64,
        per: f64,
        out: &SimOutput,
    ) -> Self {
        let losses: Vec<LossEvent> = out.loss_events().copied().collect();
        let delivered: u64 = out.flows.iter().map(|f| f.distinct_delivered).sum();
        CellMetrics {
            point,
            x,
            algorithm,
            seed,
            flow_count: out.flows.len(),
            per,
            speed,
            accuracy: accuracy(&losses),
            confusion: Confusion::from_events(&losses),
            throughput: throughput(delivered, out.duration.secs()),
            sum_rto: out.flows.iter().map(|f| sum_rto(&f.sender_trace)).sum(),
            spurious: out.spurious_detections,
            losses,
        }
    }
}

/// Medians over seeds for one (point, algorithm).
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub point: usize,
    pub x: Option<f64>,
    pub algorithm: AlgorithmId,
    pub flow_count: usize,
    pub per: f64,
    pub speed: f64,
    pub seeds: usize,
    pub accuracy: Accuracy,
    pub throughput: f64,
    pub sum_rto: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scenario: String,
    pub sweep_parameter: Option<&'static str>,
    pub cells: Vec<CellMetrics>,
}

impl MetricsReport {
    pub fn cells_for(&self, point: usize, algorithm: AlgorithmId) -> impl Iterator<Item = &CellMetrics> {
        self.cells
            .iter()
            .filter(move |c| c.point == point && c.algorithm == algorithm)
    }

    /// One summary per (point, algorithm), in first-appearance order.
    pub fn summaries(&self) -> Vec<Summary> {
        let mut keys: Vec<(usize, AlgorithmId)> = Vec::new();
        for c in &self.cells {
            if !keys.contains(&(c.point, c.algorithm)) {
                keys.push((c.point, c.algorithm));
            }
        }
        keys.into_iter()
            .map(|(point, algorithm)| {
                let cells: Vec<&CellMetrics> = self.cells_for(point, algorithm).collect();
                let first = cells[0];
                let med = |class: LossCause| median(cells.iter().filter_map(|c| c.accuracy.get(class)));
                let mut confusion = Confusion::default();
                for c in &cells {
                    confusion.merge(&c.confusion);
                }
                Summary {
                    point,
                    x: first.x,
                    algorithm,
                    flow_count: first.flow_count,
                    per: first.per,
                    speed: first.speed,
                    seeds: cells.len(),
                    accuracy: Accuracy {
                        congestion: med(LossCause::Congestion),
                        wireless: med(LossCause::WirelessError),
                        link_failure: med(LossCause::LinkFailure),
                    },
                    throughput: median(cells.iter().map(|c| c.throughput)).unwrap_or(0.0),
                    sum_rto: median(cells.iter().map(|c| c.sum_rto)).unwrap_or(0.0),
                    confusion,
                }
            })
            .collect()
    }

    pub fn summary(&self, point: usize, algorithm: AlgorithmId) -> Option<Summary> {
        self.summaries()
            .into_iter()
            .find(|s| s.point == point && s.algorithm == algorithm)
    }
}
