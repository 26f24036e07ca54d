//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! [scenario]
//! name = chain-congestion
//! duration = 60
//! seeds = 1, 2, 3          # or: seed_count = 10  (seeds 1..=10)
//!
//! [network]
//! topology = chain         # chain | mobile
//! n_hops = 6
//! bandwidth = 2e6
//! propagation_delay = 0.001
//! per = 0
//! queue_bytes = 50000
//! ack_bytes = 40
//! delayed_ack = false
//! clock_offset = 0
//!
//! [flows]
//! count = 4
//! stagger = 1.0
//! packet_size = 1000
//!
//! [script]
//! outage = 5               # standard three-route script for mobile
//! speed = 2                # or: periodic script, outages per minute
//! route = 0,2,1,3,5        # or: explicit script
//! break = 30
//! restore = 35 : 0,1,5
//!
//! [algorithms]
//! list = enhanced, reno, welcome
//!
//! [sender]
//! max_window = 64
//! initial_rto = 1.0
//! rto_min = 0.2
//! rto_max = 64
//! erott_gain = 0.125
//! alpha_ack = 0.8
//! alpha_timeout = 0.1
//! threshold = 0.5
//! welcome_window = 10
//! welcome_ascent = 3
//! initial_ttl = 64
//!
//! [sweep]
//! parameter = flows        # flows | per | speed
//! values = 2, 4, 6, 8, 10
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::classifier::QueueUsage;
use crate::netsim::{
    build_chain, build_mobile, default_mobile_script, speed_script, LinkParams, Route,
    RouteScript, ScriptAction, ScriptEntry, Topology, DEFAULT_ACK_SIZE, DEFAULT_QUEUE_CAPACITY,
};
use crate::sender::{RtoBounds, SenderConfig};
use crate::types::{AlgorithmId, SimTime};

pub const DEFAULT_OUTAGE: f64 = 5.0;
pub const DEFAULT_STAGGER: f64 = 1.0;
pub const DEFAULT_CHAIN_HOPS: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    /// 1-based; 0 when the problem is not tied to one line.
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Chain { n_hops: usize },
    Mobile,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptSpec {
    /// Chain: static route. Mobile: standard three-route script.
    Default { outage: f64 },
    Speed { outages_per_minute: f64, outage: f64 },
    Explicit(RouteScript),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Flows,
    Per,
    Speed,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Flows => "flows",
            SweepParameter::Per => "per",
            SweepParameter::Speed => "speed",
        }
    }
}

impl FromStr for SweepParameter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flows" => Ok(SweepParameter::Flows),
            "per" => Ok(SweepParameter::Per),
            "speed" => Ok(SweepParameter::Speed),
            _ => Err(format!("unknown sweep parameter `{s}` (valid: flows, per, speed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub seeds: Vec<u64>,
    pub topology: TopologyKind,
    pub link: LinkParams,
    pub queue_capacity: u32,
    pub ack_size: u32,
    pub delayed_ack: bool,
    pub clock_offset: f64,
    pub flow_count: usize,
    pub stagger: f64,
    pub script: ScriptSpec,
    pub algorithms: Vec<AlgorithmId>,
    /// Parameters shared by every flow; the algorithm preset is applied per run.
    pub sender: SenderConfig,
    pub sweep: Option<Sweep>,
}

impl Scenario {
    /// Defaults for everything except the duration.
    pub fn with_duration(duration: f64) -> Self {
        Scenario {
            name: "scenario".into(),
            duration,
            seeds: vec![1],
            topology: TopologyKind::Chain {
                n_hops: DEFAULT_CHAIN_HOPS,
            },
            link: LinkParams::default(),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            ack_size: DEFAULT_ACK_SIZE,
            delayed_ack: false,
            clock_offset: 0.0,
            flow_count: 1,
            stagger: DEFAULT_STAGGER,
            script: ScriptSpec::Default {
                outage: DEFAULT_OUTAGE,
            },
            algorithms: AlgorithmId::ALL.to_vec(),
            sender: SenderConfig::default(),
            sweep: None,
        }
    }

    /// Scenario variants, one per sweep value (or just `self`), with the
    /// swept value.
    pub fn points(&self) -> Vec<(Option<f64>, Scenario)> {
        let Some(sweep) = &self.sweep else {
            return vec![(None, self.clone())];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut s = self.clone();
                s.sweep = None;
                match sweep.parameter {
                    SweepParameter::Flows => s.flow_count = v as usize,
                    SweepParameter::Per => s.link.packet_error_rate = v,
                    SweepParameter::Speed => {
                        let outage = match s.script {
                            ScriptSpec::Default { outage } | ScriptSpec::Speed { outage, .. } => {
                                outage
                            }
                            ScriptSpec::Explicit(_) => DEFAULT_OUTAGE,
                        };
                        s.script = ScriptSpec::Speed {
                            outages_per_minute: v,
                            outage,
                        };
                    }
                }
                (Some(v), s)
            })
            .collect()
    }

    pub fn build_topology(&self) -> Result<Topology, crate::netsim::NetError> {
        match (self.topology, &self.script) {
            (TopologyKind::Chain { n_hops }, ScriptSpec::Default { .. }) => {
                build_chain(n_hops, self.link)
            }
            (TopologyKind::Chain { n_hops }, ScriptSpec::Explicit(script)) => {
                build_chain(n_hops, self.link)?.with_script(script.clone())
            }
            (TopologyKind::Chain { .. }, ScriptSpec::Speed { .. }) => Err(
                crate::netsim::NetError::Config("speed scripts need the mobile topology".into()),
            ),
            (TopologyKind::Mobile, ScriptSpec::Default { outage }) => {
                build_mobile(default_mobile_script(self.duration, *outage)?, self.link)
            }
            (
                TopologyKind::Mobile,
                ScriptSpec::Speed {
                    outages_per_minute,
                    outage,
                },
            ) => build_mobile(
                speed_script(*outages_per_minute, *outage, self.duration)?,
                self.link,
            ),
            (TopologyKind::Mobile, ScriptSpec::Explicit(script)) => {
                build_mobile(script.clone(), self.link)
            }
        }
    }

    /// Sender configuration for one algorithm.
    pub fn sender_for(&self, algorithm: AlgorithmId) -> SenderConfig {
        self.sender.clone().with_algorithm(algorithm)
    }
}

type Section = BTreeMap<String, Vec<(usize, String)>>;

struct Sections {
    map: BTreeMap<String, (usize, Section)>,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("scenario", &["name", "duration", "seeds", "seed_count"]),
    (
        "network",
        &[
            "topology",
            "n_hops",
            "bandwidth",
            "propagation_delay",
            "per",
            "queue_bytes",
            "ack_bytes",
            "delayed_ack",
            "clock_offset",
        ],
    ),
    ("flows", &["count", "stagger", "packet_size"]),
    ("script", &["outage", "speed", "route", "break", "restore"]),
    ("algorithms", &["list"]),
    (
        "sender",
        &[
            "max_window",
            "initial_rto",
            "rto_min",
            "rto_max",
            "erott_gain",
            "alpha_ack",
            "alpha_timeout",
            "threshold",
            "welcome_window",
            "welcome_ascent",
            "initial_ttl",
        ],
    ),
    ("sweep", &["parameter", "values"]),
];

const REPEATABLE: &[(&str, &str)] = &[("script", "break"), ("script", "restore")];

fn split_sections(text: &str) -> Result<Sections, ParseError> {
    let mut map: BTreeMap<String, (usize, Section)> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(line_no, format!("malformed section header `{line}`"));
            };
            let name = name.trim().to_owned();
            if !KNOWN.iter().any(|(s, _)| *s == name) {
                let valid: Vec<_> = KNOWN.iter().map(|(s, _)| *s).collect();
                return err(
                    line_no,
                    format!("unknown section [{name}] (valid: {})", valid.join(", ")),
                );
            }
            if map.contains_key(&name) {
                return err(line_no, format!("section [{name}] appears twice"));
            }
            map.insert(name.clone(), (line_no, Section::new()));
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(line_no, format!("expected `key = value`, got `{line}`"));
        };
        let (key, value) = (key.trim().to_owned(), value.trim().to_owned());
        let Some(section) = current.as_ref() else {
            return err(line_no, format!("key `{key}` outside any section"));
        };
        let keys = KNOWN
            .iter()
            .find(|(s, _)| s == section)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !keys.contains(&key.as_str()) {
            return err(
                line_no,
                format!(
                    "unknown key `{key}` in [{section}] (valid: {})",
                    keys.join(", ")
                ),
            );
        }
        let entries = map.get_mut(section).expect("section inserted").1.entry(key.clone()).or_default();
        if !entries.is_empty() && !REPEATABLE.contains(&(section.as_str(), key.as_str())) {
            return err(line_no, format!("key `{key}` repeated in [{section}]"));
        }
        entries.push((line_no, value));
    }
    Ok(Sections { map })
}

impl Sections {
    fn get(&self, section: &str, key: &str) -> Option<(usize, &str)> {
        self.map
            .get(section)?
            .1
            .get(key)?
            .first()
            .map(|(l, v)| (*l, v.as_str()))
    }

    fn all(&self, section: &str, key: &str) -> Vec<(usize, &str)> {
        self.map
            .get(section)
            .and_then(|(_, s)| s.get(key))
            .map(|v| v.iter().map(|(l, s)| (*l, s.as_str())).collect())
            .unwrap_or_default()
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<(usize, T)>, ParseError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(|x| Some((line, x)))
                .map_err(|e| ParseError {
                    line,
                    message: format!("bad value `{v}` for `{key}`: {e}"),
                }),
        }
    }
}

fn parse_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>, ParseError>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>().map_err(|e| ParseError {
                line,
                message: format!("bad entry `{s}` in `{key}`: {e}"),
            })
        })
        .collect()
}

fn parse_route(line: usize, v: &str) -> Result<Route, ParseError> {
    let nodes = parse_list::<usize>(line, "route", v)?;
    Route::new(nodes).map_err(|e| ParseError {
        line,
        message: e.to_string(),
    })
}

fn positive(line: usize, key: &str, v: f64) -> Result<f64, ParseError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        err(line, format!("`{key}` must be positive, got {v}"))
    }
}

fn unit(line: usize, key: &str, v: f64, open: bool) -> Result<f64, ParseError> {
    let ok = if open {
        v > 0.0 && v < 1.0
    } else {
        (0.0..=1.0).contains(&v)
    };
    if ok {
        Ok(v)
    } else {
        let range = if open { "(0,1)" } else { "[0,1]" };
        err(line, format!("`{key}` must lie in {range}, got {v}"))
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let s = split_sections(text)?;
    let Some((line, duration)) = s.parse::<f64>("scenario", "duration")? else {
        return err(0, "missing required field `duration` in [scenario]");
    };
    let mut sc = Scenario::with_duration(positive(line, "duration", duration)?);

    if let Some((_, name)) = s.get("scenario", "name") {
        sc.name = name.to_owned();
    }
    match (s.get("scenario", "seeds"), s.parse::<u64>("scenario", "seed_count")?) {
        (Some(_), Some((line, _))) => {
            return err(line, "give either `seeds` or `seed_count`, not both")
        }
        (Some((line, v)), None) => {
            sc.seeds = parse_list(line, "seeds", v)?;
            if sc.seeds.is_empty() {
                return err(line, "`seeds` is empty");
            }
        }
        (None, Some((line, n))) => {
            if n == 0 {
                return err(line, "`seed_count` must be at least 1");
            }
            sc.seeds = (1..=n).collect();
        }
        (None, None) => {}
    }

    let topology = s.get("network", "topology").map(|(l, v)| (l, v.to_owned()));
    let n_hops = s.parse::<usize>("network", "n_hops")?;
    sc.topology = match topology.as_ref().map(|(l, v)| (*l, v.as_str())) {
        None | Some((_, "chain")) => {
            let n = match n_hops {
                Some((line, 0)) => return err(line, "`n_hops` must be at least 1"),
                Some((_, n)) => n,
                None => DEFAULT_CHAIN_HOPS,
            };
            TopologyKind::Chain { n_hops: n }
        }
        Some((line, "mobile")) => {
            if let Some((l, _)) = n_hops {
                return err(l, "`n_hops` applies only to the chain topology");
            }
            let _ = line;
            TopologyKind::Mobile
        }
        Some((line, other)) => {
            return err(line, format!("unknown topology `{other}` (valid: chain, mobile)"))
        }
    };
    if let Some((l, v)) = s.parse::<f64>("network", "bandwidth")? {
        sc.link.bandwidth_bps = positive(l, "bandwidth", v)?;
    }
    if let Some((l, v)) = s.parse::<f64>("network", "propagation_delay")? {
        if !(v >= 0.0 && v.is_finite()) {
            return err(l, format!("`propagation_delay` must be nonnegative, got {v}"));
        }
        sc.link.propagation_delay = v;
    }
    if let Some((l, v)) = s.parse::<f64>("network", "per")? {
        sc.link.packet_error_rate = unit(l, "per", v, false)?;
    }
    if let Some((l, v)) = s.parse::<u32>("network", "queue_bytes")? {
        if v == 0 {
            return err(l, "`queue_bytes` must be positive");
        }
        sc.queue_capacity = v;
    }
    if let Some((l, v)) = s.parse::<u32>("network", "ack_bytes")? {
        if v == 0 {
            return err(l, "`ack_bytes` must be positive");
        }
        sc.ack_size = v;
    }
    if let Some((_, v)) = s.parse::<bool>("network", "delayed_ack")? {
        sc.delayed_ack = v;
    }
    if let Some((l, v)) = s.parse::<f64>("network", "clock_offset")? {
        if !(v >= 0.0 && v.is_finite()) {
            return err(l, format!("`clock_offset` must be nonnegative, got {v}"));
        }
        sc.clock_offset = v;
    }

    if let Some((l, v)) = s.parse::<usize>("flows", "count")? {
        if v == 0 {
            return err(l, "flow `count` must be at least 1");
        }
        sc.flow_count = v;
    }
    if let Some((l, v)) = s.parse::<f64>("flows", "stagger")? {
        if !(v >= 0.0 && v.is_finite()) {
            return err(l, format!("`stagger` must be nonnegative, got {v}"));
        }
        sc.stagger = v;
    }
    if let Some((l, v)) = s.parse::<u32>("flows", "packet_size")? {
        if v == 0 {
            return err(l, "`packet_size` must be positive");
        }
        sc.sender.packet_size = v;
    }

    sc.script = parse_script(&s, &sc)?;

    if let Some((line, v)) = s.get("algorithms", "list") {
        let algos: Vec<AlgorithmId> = parse_list(line, "list", v)?;
        if algos.is_empty() {
            return err(line, "algorithm list is empty");
        }
        sc.algorithms = algos;
    }

    parse_sender(&s, &mut sc.sender)?;

    let param = s.parse::<SweepParameter>("sweep", "parameter")?;
    let values = s.get("sweep", "values");
    sc.sweep = match (param, values) {
        (None, None) => None,
        (Some((line, _)), None) => return err(line, "sweep needs `values`"),
        (None, Some((line, _))) => return err(line, "sweep needs `parameter`"),
        (Some((_, parameter)), Some((line, v))) => {
            let values: Vec<f64> = parse_list(line, "values", v)?;
            if values.is_empty() {
                return err(line, "sweep `values` is empty");
            }
            for &x in &values {
                let ok = match parameter {
                    SweepParameter::Flows => x >= 1.0 && x.fract() == 0.0,
                    SweepParameter::Per => (0.0..=1.0).contains(&x),
                    SweepParameter::Speed => x >= 0.0 && x.is_finite(),
                };
                if !ok {
                    return err(
                        line,
                        format!("sweep value {x} is invalid for `{}`", parameter.as_str()),
                    );
                }
            }
            if parameter == SweepParameter::Speed && sc.topology != TopologyKind::Mobile {
                return err(line, "a speed sweep needs the mobile topology");
            }
            Some(Sweep { parameter, values })
        }
    };

    for (_, point) in sc.points() {
        point.build_topology().map_err(|e| ParseError {
            line: 0,
            message: e.to_string(),
        })?;
    }
    Ok(sc)
}

fn parse_script(s: &Sections, sc: &Scenario) -> Result<ScriptSpec, ParseError> {
    let outage = match s.parse::<f64>("script", "outage")? {
        Some((l, v)) => positive(l, "outage", v)?,
        None => DEFAULT_OUTAGE,
    };
    let speed = s.parse::<f64>("script", "speed")?;
    let route = s.get("script", "route");
    let breaks = s.all("script", "break");
    let restores = s.all("script", "restore");
    let explicit = route.is_some() || !breaks.is_empty() || !restores.is_empty();

    if let Some((line, v)) = speed {
        if explicit {
            return err(line, "`speed` cannot be combined with an explicit script");
        }
        if sc.topology != TopologyKind::Mobile {
            return err(line, "`speed` needs the mobile topology");
        }
        if !(v >= 0.0 && v.is_finite()) {
            return err(line, format!("`speed` must be nonnegative, got {v}"));
        }
        return Ok(ScriptSpec::Speed {
            outages_per_minute: v,
            outage,
        });
    }
    if !explicit {
        return Ok(ScriptSpec::Default { outage });
    }

    let initial = match (route, sc.topology) {
        (Some((line, v)), _) => parse_route(line, v)?,
        (None, TopologyKind::Chain { n_hops }) => {
            Route::new((0..=n_hops).collect()).expect("chain route")
        }
        (None, TopologyKind::Mobile) => crate::netsim::mobile_route(0),
    };
    let mut entries: Vec<(usize, ScriptEntry)> = Vec::new();
    for (line, v) in breaks {
        let t = v.parse::<f64>().map_err(|e| ParseError {
            line,
            message: format!("bad break time `{v}`: {e}"),
        })?;
        let time = SimTime::try_from_secs(t).ok_or(ParseError {
            line,
            message: format!("break time must be nonnegative, got {t}"),
        })?;
        entries.push((
            line,
            ScriptEntry {
                time,
                action: ScriptAction::Break,
            },
        ));
    }
    for (line, v) in restores {
        let Some((t, nodes)) = v.split_once(':') else {
            return err(line, format!("expected `restore = <time> : <route>`, got `{v}`"));
        };
        let t = t.trim().parse::<f64>().map_err(|e| ParseError {
            line,
            message: format!("bad restore time `{}`: {e}", t.trim()),
        })?;
        let time = SimTime::try_from_secs(t).ok_or(ParseError {
            line,
            message: format!("restore time must be nonnegative, got {t}"),
        })?;
        let route = match nodes.trim() {
            "" => initial.clone(),
            r => parse_route(line, r)?,
        };
        entries.push((
            line,
            ScriptEntry {
                time,
                action: ScriptAction::Restore(route),
            },
        ));
    }
    entries.sort_by(|a, b| a.1.time.cmp(&b.1.time).then(a.0.cmp(&b.0)));
    let first_line = entries.first().map(|e| e.0).unwrap_or(0);
    let script = RouteScript {
        initial,
        actions: entries.into_iter().map(|(_, e)| e).collect(),
    };
    script.validate().map_err(|e| ParseError {
        line: first_line,
        message: e.to_string(),
    })?;
    Ok(ScriptSpec::Explicit(script))
}

fn parse_sender(s: &Sections, cfg: &mut SenderConfig) -> Result<(), ParseError> {
    if let Some((l, v)) = s.parse::<u32>("sender", "max_window")? {
        if v == 0 {
            return err(l, "`max_window` must be at least 1");
        }
        cfg.max_window = v;
    }
    if let Some((l, v)) = s.parse::<f64>("sender", "initial_rto")? {
        cfg.initial_rto = positive(l, "initial_rto", v)?;
    }
    let mut bounds = RtoBounds::default();
    let mut bounds_line = 0;
    if let Some((l, v)) = s.parse::<f64>("sender", "rto_min")? {
        bounds.min = positive(l, "rto_min", v)?;
        bounds_line = l;
    }
    if let Some((l, v)) = s.parse::<f64>("sender", "rto_max")? {
        bounds.max = positive(l, "rto_max", v)?;
        bounds_line = bounds_line.max(l);
    }
    if bounds.min > bounds.max {
        return err(
            bounds_line,
            format!("rto_min {} exceeds rto_max {}", bounds.min, bounds.max),
        );
    }
    cfg.rto_bounds = bounds;
    if let Some((l, v)) = s.parse::<f64>("sender", "erott_gain")? {
        if !(v > 0.0 && v <= 1.0) {
            return err(l, format!("`erott_gain` must lie in (0,1], got {v}"));
        }
        cfg.erott_gain = v;
    }
    if let Some((l, v)) = s.parse::<f64>("sender", "alpha_ack")? {
        cfg.alpha_ack = unit(l, "alpha_ack", v, true)?;
    }
    if let Some((l, v)) = s.parse::<f64>("sender", "alpha_timeout")? {
        cfg.alpha_timeout = unit(l, "alpha_timeout", v, true)?;
    }
    if let Some((l, v)) = s.parse::<f64>("sender", "threshold")? {
        cfg.threshold = unit(l, "threshold", v, true)?;
    }
    QueueUsage::new(cfg.alpha_ack, cfg.alpha_timeout, cfg.threshold).map_err(|e| ParseError {
        line: 0,
        message: e.to_string(),
    })?;
    if let Some((l, v)) = s.parse::<usize>("sender", "welcome_window")? {
        if v == 0 {
            return err(l, "`welcome_window` must be at least 1");
        }
        cfg.welcome_window = v;
    }
    if let Some((l, v)) = s.parse::<usize>("sender", "welcome_ascent")? {
        if v == 0 || v >= cfg.welcome_window {
            return err(
                l,
                format!("`welcome_ascent` must lie in [1, welcome_window), got {v}"),
            );
        }
        cfg.welcome_ascent = v;
    }
    if let Some((l, v)) = s.parse::<u32>("sender", "initial_ttl")? {
        if v == 0 {
            return err(l, "`initial_ttl` must be at least 1");
        }
        cfg.initial_ttl = v;
    }
    Ok(())
}
