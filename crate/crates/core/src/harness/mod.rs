//! Scenario files, batch execution and CSV reports.

mod batch;
mod metrics;
mod report;
mod scenario;

pub use batch::{outage_rate, random_starts, run_batch, sim_config, BatchResult, CellKey};
pub use metrics::{
    accuracy, median, sum_rto, throughput, Accuracy, CellMetrics, Confusion, MetricsReport, Summary,
    ABSTAIN_COLUMN,
};
pub use report::{
    fmt_g9, read_losses, write_losses, write_report, write_traces, LossRow, ReportError, NA,
    OUTPUT_FILES,
};
pub use scenario::{
    parse_scenario, ParseError, Scenario, ScriptSpec, Sweep, SweepParameter, TopologyKind,
    DEFAULT_CHAIN_HOPS, DEFAULT_OUTAGE, DEFAULT_STAGGER,
};
