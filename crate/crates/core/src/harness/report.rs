//! CSV output.
//!
//! Floating-point fields carry 9 significant digits. Metrics that are
//! undefined for a run (no losses of that class) are written as `n/a`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::batch::CellKey;
use crate::harness::metrics::{MetricsReport, Summary, ABSTAIN_COLUMN};
use crate::netsim::SimOutput;
use crate::types::{verdict_str, parse_verdict, FlowId, LossCause, LossEvent, SimTime};

pub const NA: &str = "n/a";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad field `{field}` = `{value}`: {message}")]
    Field {
        field: &'static str,
        value: String,
        message: String,
    },
}

/// Format like C's `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_owned(), fmt_g9)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, ReportError> {
    let file = fs::File::create(path).map_err(|source| ReportError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

/// One row of `losses.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub point: usize,
    pub x: String,
    pub algorithm: String,
    pub seed: u64,
    pub flow: usize,
    pub seq: u64,
    pub time: String,
    pub detection: String,
    pub q_at_decision: String,
    pub verdict: String,
    pub truth: String,
}

impl LossRow {
    pub fn new(point: usize, x: Option<f64>, seed: u64, e: &LossEvent) -> Self {
        LossRow {
            point,
            x: opt(x),
            algorithm: e.algorithm.as_str().to_owned(),
            seed,
            flow: e.flow.0,
            seq: e.seq,
            time: fmt_g9(e.time.secs()),
            detection: e.detection.as_str().to_owned(),
            q_at_decision: fmt_g9(e.q_at_decision),
            verdict: verdict_str(e.verdict).to_owned(),
            truth: e.truth.as_str().to_owned(),
        }
    }

    pub fn to_event(&self) -> Result<LossEvent, ReportError> {
        fn field<T, E: std::fmt::Display>(
            name: &'static str,
            value: &str,
            r: Result<T, E>,
        ) -> Result<T, ReportError> {
            r.map_err(|e| ReportError::Field {
                field: name,
                value: value.to_owned(),
                message: e.to_string(),
            })
        }
        let time: f64 = field("time", &self.time, self.time.parse())?;
        let time = field(
            "time",
            &self.time,
            SimTime::try_from_secs(time).ok_or("negative or non-finite time"),
        )?;
        Ok(LossEvent {
            flow: FlowId(self.flow),
            seq: self.seq,
            time,
            detection: field("detection", &self.detection, self.detection.parse())?,
            q_at_decision: field("q_at_decision", &self.q_at_decision, self.q_at_decision.parse())?,
            verdict: field("verdict", &self.verdict, parse_verdict(&self.verdict))?,
            truth: field("truth", &self.truth, self.truth.parse())?,
            algorithm: field("algorithm", &self.algorithm, self.algorithm.parse())?,
        })
    }
}

pub fn write_losses<W: io::Write>(report: &MetricsReport, w: W) -> Result<(), ReportError> {
    let mut wtr = csv::Writer::from_writer(w);
    for c in &report.cells {
        for e in &c.losses {
            wtr.serialize(LossRow::new(c.point, c.x, c.seed, e))?;
        }
    }
    if report.cells.iter().all(|c| c.losses.is_empty()) {
        wtr.write_record([
            "point", "x", "algorithm", "seed", "flow", "seq", "time", "detection",
            "q_at_decision", "verdict", "truth",
        ])?;
    }
    wtr.flush().map_err(|source| ReportError::Io {
        path: PathBuf::from("<losses>"),
        source,
    })
}

pub fn read_losses<R: io::Read>(r: R) -> Result<Vec<LossEvent>, ReportError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize::<LossRow>()
        .map(|row| row?.to_event())
        .collect()
}

fn write_metrics(report: &MetricsReport, path: &Path) -> Result<(), ReportError> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "point", "x", "algorithm", "seed", "flows", "per", "speed", "ac", "aw", "al",
        "throughput", "sum_rto", "losses", "spurious",
    ])?;
    for c in &report.cells {
        w.write_record([
            c.point.to_string(),
            opt(c.x),
            c.algorithm.as_str().into(),
            c.seed.to_string(),
            c.flow_count.to_string(),
            fmt_g9(c.per),
            fmt_g9(c.speed),
            opt(c.accuracy.congestion),
            opt(c.accuracy.wireless),
            opt(c.accuracy.link_failure),
            fmt_g9(c.throughput),
            fmt_g9(c.sum_rto),
            c.losses.len().to_string(),
            c.spurious.to_string(),
        ])?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_confusion(summaries: &[Summary], path: &Path) -> Result<(), ReportError> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "point", "x", "algorithm", "truth", "congestion", "wireless_error", "link_failure",
        "abstain", "total", "recall", "precision",
    ])?;
    for s in summaries {
        for class in LossCause::ALL {
            let row = s.confusion.counts[class.index()];
            w.write_record([
                s.point.to_string(),
                opt(s.x),
                s.algorithm.as_str().into(),
                class.as_str().into(),
                row[0].to_string(),
                row[1].to_string(),
                row[2].to_string(),
                row[ABSTAIN_COLUMN].to_string(),
                s.confusion.truth_total(class).to_string(),
                opt(s.confusion.recall(class)),
                opt(s.confusion.precision(class)),
            ])?;
        }
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_figure(
    summaries: &[Summary],
    path: &Path,
    header: [&str; 4],
    row: impl Fn(&Summary) -> (String, String),
) -> Result<(), ReportError> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for s in summaries {
        let (x, y) = row(s);
        w.write_record([x, s.algorithm.as_str().to_owned(), y, s.seeds.to_string()])?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_owned(),
        source,
    })
}

pub const OUTPUT_FILES: [&str; 8] = [
    "metrics.csv",
    "confusion.csv",
    "losses.csv",
    "fig8_accuracy_vs_flows.csv",
    "fig9_accuracy_vs_per.csv",
    "fig10_accuracy_vs_speed.csv",
    "fig11_throughput.csv",
    "fig13_sum_rto.csv",
];

fn create_dir(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_owned(),
        source,
    })
}

/// Write all report files into `dir`, creating it if needed.
pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<(), ReportError> {
    create_dir(dir)?;
    let summaries = report.summaries();
    write_metrics(report, &dir.join("metrics.csv"))?;
    write_confusion(&summaries, &dir.join("confusion.csv"))?;
    let losses = dir.join("losses.csv");
    let file = fs::File::create(&losses).map_err(|source| ReportError::Io {
        path: losses.clone(),
        source,
    })?;
    write_losses(report, file)?;
    write_figure(
        &summaries,
        &dir.join("fig8_accuracy_vs_flows.csv"),
        ["flows", "algorithm", "median_ac", "seeds"],
        |s| (s.flow_count.to_string(), opt(s.accuracy.congestion)),
    )?;
    write_figure(
        &summaries,
        &dir.join("fig9_accuracy_vs_per.csv"),
        ["per", "algorithm", "median_aw", "seeds"],
        |s| (fmt_g9(s.per), opt(s.accuracy.wireless)),
    )?;
    write_figure(
        &summaries,
        &dir.join("fig10_accuracy_vs_speed.csv"),
        ["speed", "algorithm", "median_al", "seeds"],
        |s| (fmt_g9(s.speed), opt(s.accuracy.link_failure)),
    )?;
    write_figure(
        &summaries,
        &dir.join("fig11_throughput.csv"),
        ["x", "algorithm", "median_throughput", "seeds"],
        |s| (opt(s.x), fmt_g9(s.throughput)),
    )?;
    write_figure(
        &summaries,
        &dir.join("fig13_sum_rto.csv"),
        ["x", "algorithm", "median_sum_rto", "seeds"],
        |s| (opt(s.x), fmt_g9(s.sum_rto)),
    )?;
    Ok(())
}

fn cell_stem(key: &CellKey) -> String {
    format!("{}_p{}_s{}", key.algorithm.as_str(), key.point, key.seed)
}

/// Write the network, sender and sample traces of one run into `dir`.
pub fn write_traces(key: &CellKey, out: &SimOutput, dir: &Path) -> Result<(), ReportError> {
    create_dir(dir)?;
    let stem = cell_stem(key);

    let path = dir.join(format!("{stem}_net.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record([
        "time", "event_kind", "node", "seq", "detail", "flow", "uid", "packet_kind", "size_bytes",
    ])?;
    for r in &out.trace {
        w.write_record([
            fmt_g9(r.time.secs()),
            r.event.as_str().into(),
            r.node.to_string(),
            r.seq.to_string(),
            r.detail(),
            r.flow.0.to_string(),
            r.uid.to_string(),
            r.kind.as_str().into(),
            r.size_bytes.to_string(),
        ])?;
    }
    w.flush().map_err(|source| ReportError::Io { path, source })?;

    let path = dir.join(format!("{stem}_sender.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record([
        "flow", "time", "event", "seq", "cwnd", "ssthresh", "rto", "q", "link_failure",
        "route_recovery",
    ])?;
    for f in &out.flows {
        for r in &f.sender_trace {
            w.write_record([
                f.flow.0.to_string(),
                fmt_g9(r.time.secs()),
                r.event.as_str().into(),
                r.seq.to_string(),
                fmt_g9(r.cwnd),
                fmt_g9(r.ssthresh),
                fmt_g9(r.rto),
                fmt_g9(r.q),
                r.link_failure.to_string(),
                r.route_recovery.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|source| ReportError::Io { path, source })?;

    let path = dir.join(format!("{stem}_samples.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record([
        "flow", "seq", "send_time", "receiver_timestamp", "ack_arrival_time", "hop_count", "rott",
        "rtt", "erott", "min_erott", "max_erott",
    ])?;
    for f in &out.flows {
        for t in &f.trips {
            w.write_record([
                f.flow.0.to_string(),
                t.sample.seq.to_string(),
                fmt_g9(t.sample.send_time.secs()),
                fmt_g9(t.sample.receiver_timestamp.secs()),
                fmt_g9(t.sample.ack_arrival_time.secs()),
                t.sample.hop_count.to_string(),
                fmt_g9(t.rott),
                fmt_g9(t.rtt),
                fmt_g9(t.erott),
                fmt_g9(t.min_erott),
                fmt_g9(t.max_erott),
            ])?;
        }
    }
    w.flush().map_err(|source| ReportError::Io { path, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_formatting() {
        assert_eq!(fmt_g9(0.0), "0");
        assert_eq!(fmt_g9(1.0), "1");
        assert_eq!(fmt_g9(0.5), "0.5");
        assert_eq!(fmt_g9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_g9(123.456789012), "123.456789");
        assert_eq!(fmt_g9(9.9999999999), "10");
        assert_eq!(fmt_g9(1e-7), "1e-07");
        assert_eq!(fmt_g9(1.5e12), "1.5e+12");
        assert_eq!(fmt_g9(-2.25), "-2.25");
        assert_eq!(fmt_g9(0.0001234), "0.0001234");
    }
}
