use std::collections::BTreeSet;

use crate::netsim::NetError;
use crate::types::{NodeId, SimTime};

pub const DEFAULT_BANDWIDTH_BPS: f64 = 2e6;
pub const DEFAULT_PROPAGATION_DELAY: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub bandwidth_bps: f64,
    pub propagation_delay: f64,
    pub packet_error_rate: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
            propagation_delay: DEFAULT_PROPAGATION_DELAY,
            packet_error_rate: 0.0,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.bandwidth_bps > 0.0 && self.bandwidth_bps.is_finite()) {
            return Err(NetError::Config(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth_bps
            )));
        }
        if !(self.propagation_delay >= 0.0 && self.propagation_delay.is_finite()) {
            return Err(NetError::Config(format!(
                "propagation delay must be nonnegative, got {}",
                self.propagation_delay
            )));
        }
        if !(0.0..=1.0).contains(&self.packet_error_rate) {
            return Err(NetError::Config(format!(
                "packet error rate must lie in [0,1], got {}",
                self.packet_error_rate
            )));
        }
        Ok(())
    }

    pub fn serialization_time(&self, size_bytes: u32) -> f64 {
        f64::from(size_bytes) * 8.0 / self.bandwidth_bps
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Route {
    nodes: Vec<NodeId>,
}

impl Route {
    pub fn new(nodes: Vec<NodeId>) -> Result<Self, NetError> {
        if nodes.len() < 2 {
            return Err(NetError::Config(format!(
                "route needs at least two nodes, got {nodes:?}"
            )));
        }
        let distinct: BTreeSet<_> = nodes.iter().collect();
        if distinct.len() != nodes.len() {
            return Err(NetError::Config(format!("route {nodes:?} revisits a node")));
        }
        Ok(Route { nodes })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn hop_count(&self) -> u32 {
        (self.nodes.len() - 1) as u32
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    /// Neighbour of `node` towards the destination (`forward`) or the source.
    pub fn next_hop(&self, node: NodeId, forward: bool) -> Option<NodeId> {
        let i = self.nodes.iter().position(|&n| n == node)?;
        if forward {
            self.nodes.get(i + 1).copied()
        } else {
            i.checked_sub(1).map(|j| self.nodes[j])
        }
    }

    fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.windows(2).map(|w| edge(w[0], w[1]))
    }
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

fn edge(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptAction {
    Break,
    Restore(Route),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    pub time: SimTime,
    pub action: ScriptAction,
}

/// The route in force at time zero plus timed breaks and restorations.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteScript {
    pub initial: Route,
    pub actions: Vec<ScriptEntry>,
}

impl RouteScript {
    pub fn fixed(route: Route) -> Self {
        RouteScript {
            initial: route,
            actions: Vec::new(),
        }
    }

    pub fn routes(&self) -> impl Iterator<Item = &Route> {
        std::iter::once(&self.initial).chain(self.actions.iter().filter_map(|e| match &e.action {
            ScriptAction::Restore(r) => Some(r),
            ScriptAction::Break => None,
        }))
    }

    /// `(break_time, restore_time)` pairs; an unrestored break runs to infinity.
    pub fn outages(&self) -> Vec<(SimTime, Option<SimTime>)> {
        let mut out = Vec::new();
        let mut open: Option<SimTime> = None;
        for e in &self.actions {
            match e.action {
                ScriptAction::Break => open = Some(e.time),
                ScriptAction::Restore(_) => {
                    if let Some(start) = open.take() {
                        out.push((start, Some(e.time)));
                    }
                }
            }
        }
        if let Some(start) = open {
            out.push((start, None));
        }
        out
    }

    /// Times strictly increase and breaks alternate with restorations.
    pub fn validate(&self) -> Result<(), NetError> {
        let mut active = true;
        let mut last: Option<SimTime> = None;
        for e in &self.actions {
            if last.is_some_and(|t| e.time <= t) {
                return Err(NetError::Config(format!(
                    "script times must strictly increase (at {})",
                    e.time
                )));
            }
            last = Some(e.time);
            match (&e.action, active) {
                (ScriptAction::Break, true) => active = false,
                (ScriptAction::Break, false) => {
                    return Err(NetError::Config(format!(
                        "break at {} while no route is active",
                        e.time
                    )))
                }
                (ScriptAction::Restore(_), false) => active = true,
                (ScriptAction::Restore(_), true) => {
                    return Err(NetError::Config(format!(
                        "restore at {} while a route is active",
                        e.time
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Node count, which node pairs can talk, and the route script.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub node_count: usize,
    pub link: LinkParams,
    pub script: RouteScript,
    links: BTreeSet<(NodeId, NodeId)>,
}

impl Topology {
    pub fn source(&self) -> NodeId {
        self.script.initial.source()
    }

    pub fn destination(&self) -> NodeId {
        self.script.initial.destination()
    }

    pub fn has_link(&self, a: NodeId, b: NodeId) -> bool {
        self.links.contains(&edge(a, b))
    }

    /// Replace the route script, checking it against the existing links.
    pub fn with_script(mut self, script: RouteScript) -> Result<Self, NetError> {
        self.script = script;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), NetError> {
        self.link.validate()?;
        self.script.validate()?;
        let (src, dst) = (self.source(), self.destination());
        for r in self.script.routes() {
            if let Some(&n) = r.nodes().iter().find(|&&n| n >= self.node_count) {
                return Err(NetError::Config(format!(
                    "route {r} references unknown node {n} (topology has {} nodes)",
                    self.node_count
                )));
            }
            if r.source() != src || r.destination() != dst {
                return Err(NetError::Config(format!(
                    "route {r} must run from node {src} to node {dst}"
                )));
            }
            if let Some((a, b)) = r.edges().find(|&(a, b)| !self.has_link(a, b)) {
                return Err(NetError::Config(format!(
                    "route {r} uses missing link {a}-{b}"
                )));
            }
        }
        Ok(())
    }
}

/// Linear topology `0 - 1 - ... - n_hops`.
pub fn build_chain(n_hops: usize, link: LinkParams) -> Result<Topology, NetError> {
    if n_hops == 0 {
        return Err(NetError::Config("chain needs at least one hop".into()));
    }
    let route = Route::new((0..=n_hops).collect())?;
    let topo = Topology {
        node_count: n_hops + 1,
        link,
        links: route.edges().collect(),
        script: RouteScript::fixed(route),
    };
    topo.validate()?;
    Ok(topo)
}

pub const MOBILE_NODE_COUNT: usize = 6;
pub const MOBILE_ROUTES: [&[NodeId]; 3] = [&[0, 2, 1, 3, 5], &[0, 1, 5], &[0, 1, 4, 5]];

pub fn mobile_route(i: usize) -> Route {
    Route::new(MOBILE_ROUTES[i % MOBILE_ROUTES.len()].to_vec()).expect("static route is valid")
}

/// Six-node topology whose active route follows `script`. Any node pair used
/// by the script, or by the three standard routes, is linkable.
pub fn build_mobile(script: RouteScript, link: LinkParams) -> Result<Topology, NetError> {
    let mut links: BTreeSet<_> = (0..MOBILE_ROUTES.len())
        .flat_map(|i| mobile_route(i).edges().collect::<Vec<_>>())
        .collect();
    for r in script.routes() {
        links.extend(r.edges());
    }
    let topo = Topology {
        node_count: MOBILE_NODE_COUNT,
        link,
        script,
        links,
    };
    topo.validate()?;
    Ok(topo)
}

/// Standard three-route sequence: each route holds for a third of the run
/// and the breaks between them last `outage` seconds.
pub fn default_mobile_script(duration: f64, outage: f64) -> Result<RouteScript, NetError> {
    let third = duration / 3.0;
    if outage <= 0.0 || outage >= third {
        return Err(NetError::Config(format!(
            "outage {outage} must lie in (0, duration/3 = {third})"
        )));
    }
    let mut actions = Vec::new();
    for i in 1..3 {
        let at = third * i as f64;
        actions.push(ScriptEntry {
            time: SimTime::from_secs(at - outage),
            action: ScriptAction::Break,
        });
        actions.push(ScriptEntry {
            time: SimTime::from_secs(at),
            action: ScriptAction::Restore(mobile_route(i)),
        });
    }
    Ok(RouteScript {
        initial: mobile_route(0),
        actions,
    })
}

/// Periodic script for a mobility level given as outages per minute. Each
/// period ends with an `outage`-second break, after which the next of the
/// three standard routes takes over.
pub fn speed_script(
    outages_per_minute: f64,
    outage: f64,
    duration: f64,
) -> Result<RouteScript, NetError> {
    if outages_per_minute < 0.0 || !outages_per_minute.is_finite() {
        return Err(NetError::Config(format!(
            "speed must be a nonnegative outage rate, got {outages_per_minute}"
        )));
    }
    let initial = mobile_route(0);
    if outages_per_minute == 0.0 {
        return Ok(RouteScript::fixed(initial));
    }
    let period = 60.0 / outages_per_minute;
    if outage <= 0.0 || outage >= period {
        return Err(NetError::Config(format!(
            "outage {outage} must lie in (0, period = {period})"
        )));
    }
    let mut actions = Vec::new();
    let mut k = 1;
    while period * k as f64 <= duration {
        let restore_at = period * k as f64;
        actions.push(ScriptEntry {
            time: SimTime::from_secs(restore_at - outage),
            action: ScriptAction::Break,
        });
        actions.push(ScriptEntry {
            time: SimTime::from_secs(restore_at),
            action: ScriptAction::Restore(mobile_route(k)),
        });
        k += 1;
    }
    Ok(RouteScript { initial, actions })
}
