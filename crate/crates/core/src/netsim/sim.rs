use std::collections::BTreeMap;

use crate::netsim::events::EventQueue;
use crate::netsim::queue::NodeQueue;
use crate::netsim::receiver::{Receiver, ReceiverAction, DELAYED_ACK_TIMEOUT};
use crate::netsim::topology::{Route, ScriptAction, Topology};
use crate::netsim::NetError;
use crate::rng::SimRng;
use crate::sender::{Detection, Sender, SenderConfig, SenderOutput, SenderTraceRow, TripRecord};
use crate::types::{AlgorithmId, FlowId, LossCause, LossEvent, NodeId, Packet, PacketKind, SimTime};

pub const DEFAULT_ACK_SIZE: u32 = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub start: SimTime,
    pub algorithm: AlgorithmId,
    pub sender: SenderConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub topology: Topology,
    pub queue_capacity: u32,
    pub ack_size: u32,
    pub flows: Vec<FlowSpec>,
    pub duration: SimTime,
    pub seed: u64,
    pub delayed_ack: bool,
    /// Constant added to every receiver timestamp (unsynchronised clocks).
    pub receiver_clock_offset: f64,
    /// Keep the per-packet network trace (needed for audits and `--trace`).
    pub record_trace: bool,
}

/// Start times spread evenly over `[0, stagger)`.
pub fn staggered_starts(flow_count: usize, stagger: f64) -> Vec<SimTime> {
    (0..flow_count)
        .map(|i| SimTime::from_secs(stagger * i as f64 / flow_count as f64))
        .collect()
}

/// Where and why a packet was discarded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropSite {
    QueueFull { occupancy: u32, capacity: u32 },
    ErrorLottery { draw: f64, per: f64 },
    NoRoute,
    Flush,
}

impl DropSite {
    pub fn cause(self) -> LossCause {
        match self {
            DropSite::QueueFull { .. } => LossCause::Congestion,
            DropSite::ErrorLottery { .. } => LossCause::WirelessError,
            DropSite::NoRoute | DropSite::Flush => LossCause::LinkFailure,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DropSite::QueueFull { .. } => "queue_full",
            DropSite::ErrorLottery { .. } => "error_lottery",
            DropSite::NoRoute => "no_route",
            DropSite::Flush => "flush",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropRecord {
    pub time: SimTime,
    pub node: NodeId,
    pub uid: u64,
    pub flow: FlowId,
    pub seq: u64,
    pub kind: PacketKind,
    pub size_bytes: u32,
    pub site: DropSite,
    pub cause: LossCause,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetEvent {
    /// A packet left its originating endpoint.
    Originate,
    Enqueue { occupancy: u32 },
    /// Head of queue moved onto the transmitter; `draw` is the error lottery.
    Dequeue { occupancy: u32, draw: f64 },
    Deliver,
    Drop { site: DropSite, cause: LossCause },
    RouteBreak,
    RouteRestore { hops: u32 },
}

impl NetEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            NetEvent::Originate => "originate",
            NetEvent::Enqueue { .. } => "enqueue",
            NetEvent::Dequeue { .. } => "dequeue",
            NetEvent::Deliver => "deliver",
            NetEvent::Drop { .. } => "drop",
            NetEvent::RouteBreak => "route_break",
            NetEvent::RouteRestore { .. } => "route_restore",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetTraceRecord {
    pub time: SimTime,
    pub node: NodeId,
    pub uid: u64,
    pub flow: FlowId,
    pub seq: u64,
    pub kind: PacketKind,
    pub size_bytes: u32,
    pub event: NetEvent,
}

impl NetTraceRecord {
    pub fn detail(&self) -> String {
        match self.event {
            NetEvent::Enqueue { occupancy } => format!("occupancy={occupancy}"),
            NetEvent::Dequeue { occupancy, draw } => {
                format!("occupancy={occupancy};draw={draw:.9}")
            }
            NetEvent::Drop { site, cause } => {
                let extra = match site {
                    DropSite::QueueFull {
                        occupancy,
                        capacity,
                    } => format!(";occupancy={occupancy};capacity={capacity}"),
                    DropSite::ErrorLottery { draw, per } => {
                        format!(";draw={draw:.9};per={per:.9}")
                    }
                    DropSite::NoRoute | DropSite::Flush => String::new(),
                };
                format!("site={};cause={}{}", site.as_str(), cause.as_str(), extra)
            }
            NetEvent::RouteRestore { hops } => format!("hops={hops}"),
            _ => String::new(),
        }
    }
}

/// A classified loss and the drop that supplied its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelledLoss {
    pub event: LossEvent,
    pub drop_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Conservation {
    pub data_sent: u64,
    pub data_delivered: u64,
    pub data_dropped: u64,
    pub data_in_network: u64,
}

impl Conservation {
    pub fn balanced(&self) -> bool {
        self.data_sent == self.data_delivered + self.data_dropped + self.data_in_network
    }
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub flow: FlowId,
    pub algorithm: AlgorithmId,
    pub distinct_delivered: u64,
    pub sender_trace: Vec<SenderTraceRow>,
    pub trips: Vec<TripRecord>,
}

impl FlowOutcome {
    /// Sum of the RTO in force at every data transmission.
    pub fn sum_rto(&self) -> f64 {
        crate::harness::sum_rto(&self.sender_trace)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub duration: SimTime,
    pub losses: Vec<LabelledLoss>,
    /// Detections for which no drop was pending (spurious timeouts and the like).
    pub spurious_detections: u64,
    pub drops: Vec<DropRecord>,
    pub trace: Vec<NetTraceRecord>,
    pub flows: Vec<FlowOutcome>,
    pub conservation: Conservation,
}

impl SimOutput {
    pub fn loss_events(&self) -> impl Iterator<Item = &LossEvent> {
        self.losses.iter().map(|l| &l.event)
    }
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    FlowStart(usize),
    Arrival { node: NodeId, uid: u64 },
    TxDone { node: NodeId, uid: u64 },
    Timer { flow: usize, generation: u64 },
    DelayedAck { flow: usize, generation: u64 },
    Script(usize),
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    pkt: Packet,
    next_hop: NodeId,
    corrupted: bool,
    draw: f64,
}

struct FlowState {
    spec: FlowSpec,
    sender: Sender,
    receiver: Receiver,
    scheduled_timer: Option<u64>,
    /// Unresolved data drops by sequence number (latest drop wins).
    pending: BTreeMap<u64, usize>,
    /// Latest ack drop since the sender's last forward progress.
    ack_loss: Option<usize>,
}

/// Discrete-event run of one configuration.
pub struct Simulation {
    cfg: SimConfig,
    events: EventQueue<Ev>,
    rng: SimRng,
    route: Option<Route>,
    queues: Vec<NodeQueue>,
    busy: Vec<Option<u64>>,
    in_flight: BTreeMap<u64, InFlight>,
    flows: Vec<FlowState>,
    next_uid: u64,
    drops: Vec<DropRecord>,
    trace: Vec<NetTraceRecord>,
    losses: Vec<LabelledLoss>,
    spurious: u64,
    stats: Conservation,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, NetError> {
        if !(cfg.duration.secs() > 0.0) {
            return Err(NetError::Config("duration must be positive".into()));
        }
        if cfg.receiver_clock_offset < 0.0 || !cfg.receiver_clock_offset.is_finite() {
            return Err(NetError::Config(format!(
                "receiver clock offset must be nonnegative, got {}",
                cfg.receiver_clock_offset
            )));
        }
        if cfg.queue_capacity == 0 {
            return Err(NetError::Config("queue capacity must be positive".into()));
        }
        cfg.topology.script.validate()?;
        let n = cfg.topology.node_count;
        let flows = cfg
            .flows
            .iter()
            .enumerate()
            .map(|(i, spec)| FlowState {
                sender: Sender::new(FlowId(i), spec.sender.clone()),
                receiver: Receiver::new(cfg.delayed_ack),
                spec: spec.clone(),
                scheduled_timer: None,
                pending: BTreeMap::new(),
                ack_loss: None,
            })
            .collect();
        let mut events = EventQueue::new();
        for (i, spec) in cfg.flows.iter().enumerate() {
            events.schedule(spec.start, Ev::FlowStart(i))?;
        }
        for (i, entry) in cfg.topology.script.actions.iter().enumerate() {
            events.schedule(entry.time, Ev::Script(i))?;
        }
        Ok(Simulation {
            rng: SimRng::new(cfg.seed),
            route: Some(cfg.topology.script.initial.clone()),
            queues: (0..n).map(|_| NodeQueue::new(cfg.queue_capacity)).collect(),
            busy: vec![None; n],
            in_flight: BTreeMap::new(),
            flows,
            next_uid: 0,
            drops: Vec::new(),
            trace: Vec::new(),
            losses: Vec::new(),
            spurious: 0,
            stats: Conservation::default(),
            events,
            cfg,
        })
    }

    pub fn run(mut self) -> Result<SimOutput, NetError> {
        while let Some(t) = self.events.peek_time() {
            if t > self.cfg.duration {
                break;
            }
            let (now, ev) = self.events.pop().expect("peeked");
            self.dispatch(now, ev)?;
        }
        self.stats.data_in_network = self
            .queues
            .iter()
            .flat_map(|q| q.iter())
            .chain(self.in_flight.values().map(|f| &f.pkt))
            .filter(|p| p.kind.is_data())
            .count() as u64;
        let flows = self
            .flows
            .into_iter()
            .map(|f| FlowOutcome {
                flow: f.sender.flow(),
                algorithm: f.spec.algorithm,
                distinct_delivered: f.receiver.distinct_delivered(),
                sender_trace: f.sender.trace().to_vec(),
                trips: f.sender.trips().to_vec(),
            })
            .collect();
        Ok(SimOutput {
            duration: self.cfg.duration,
            losses: self.losses,
            spurious_detections: self.spurious,
            drops: self.drops,
            trace: self.trace,
            flows,
            conservation: self.stats,
        })
    }

    fn dispatch(&mut self, now: SimTime, ev: Ev) -> Result<(), NetError> {
        match ev {
            Ev::FlowStart(i) => {
                let out = self.flows[i].sender.start(now);
                self.apply_sender_output(now, i, out)?;
            }
            Ev::Arrival { node, uid } => self.on_arrival(now, node, uid)?,
            Ev::TxDone { node, uid } => self.on_tx_done(now, node, uid)?,
            Ev::Timer { flow, generation } => {
                let out = self.flows[flow].sender.on_timer(now, generation);
                self.apply_sender_output(now, flow, out)?;
            }
            Ev::DelayedAck { flow, generation } => {
                if let Some(echo) = self.flows[flow].receiver.on_delayed_ack_timer(generation) {
                    self.send_ack(now, flow, PacketKind::Ack, echo)?;
                }
            }
            Ev::Script(i) => self.apply_script(now, i)?,
        }
        Ok(())
    }

    fn apply_script(&mut self, now: SimTime, i: usize) -> Result<(), NetError> {
        let action = self.cfg.topology.script.actions[i].action.clone();
        match action {
            ScriptAction::Break => {
                let Some(old) = self.route.take() else {
                    return Err(NetError::Config(format!("break at {now} with no active route")));
                };
                self.record_route(now, NetEvent::RouteBreak);
                for &node in old.nodes() {
                    for pkt in self.queues[node].flush() {
                        self.drop_packet(now, node, pkt, DropSite::Flush);
                    }
                    self.busy[node] = None;
                }
                let moving = std::mem::take(&mut self.in_flight);
                for (_, f) in moving {
                    self.drop_packet(now, f.next_hop, f.pkt, DropSite::Flush);
                }
            }
            ScriptAction::Restore(route) => {
                if self.route.is_some() {
                    return Err(NetError::Config(format!(
                        "restore at {now} while a route is active"
                    )));
                }
                let hops = route.hop_count();
                self.route = Some(route);
                self.record_route(now, NetEvent::RouteRestore { hops });
            }
        }
        Ok(())
    }

    fn record_route(&mut self, now: SimTime, event: NetEvent) {
        if self.cfg.record_trace {
            self.trace.push(NetTraceRecord {
                time: now,
                node: self.cfg.topology.source(),
                uid: 0,
                flow: FlowId(0),
                seq: 0,
                kind: PacketKind::Data,
                size_bytes: 0,
                event,
            });
        }
    }

    fn record(&mut self, now: SimTime, node: NodeId, pkt: &Packet, event: NetEvent) {
        if self.cfg.record_trace {
            self.trace.push(NetTraceRecord {
                time: now,
                node,
                uid: pkt.uid,
                flow: pkt.flow,
                seq: pkt.seq,
                kind: pkt.kind,
                size_bytes: pkt.size_bytes,
                event,
            });
        }
    }

    fn drop_packet(&mut self, now: SimTime, node: NodeId, pkt: Packet, site: DropSite) {
        let cause = site.cause();
        self.record(now, node, &pkt, NetEvent::Drop { site, cause });
        let idx = self.drops.len();
        self.drops.push(DropRecord {
            time: now,
            node,
            uid: pkt.uid,
            flow: pkt.flow,
            seq: pkt.seq,
            kind: pkt.kind,
            size_bytes: pkt.size_bytes,
            site,
            cause,
        });
        let flow = &mut self.flows[pkt.flow.0];
        if pkt.kind.is_data() {
            self.stats.data_dropped += 1;
            flow.pending.insert(pkt.seq, idx);
        } else {
            flow.ack_loss = Some(idx);
        }
    }

    fn originate(&mut self, now: SimTime, node: NodeId, mut pkt: Packet) -> Result<(), NetError> {
        pkt.uid = self.next_uid;
        self.next_uid += 1;
        if pkt.kind.is_data() {
            self.stats.data_sent += 1;
        }
        self.record(now, node, &pkt, NetEvent::Originate);
        self.enqueue(now, node, pkt)
    }

    fn enqueue(&mut self, now: SimTime, node: NodeId, pkt: Packet) -> Result<(), NetError> {
        if self.route.as_ref().is_none_or(|r| !r.contains(node)) {
            self.drop_packet(now, node, pkt, DropSite::NoRoute);
            return Ok(());
        }
        let q = &mut self.queues[node];
        let (occupancy, capacity) = (q.occupancy(), q.capacity());
        match q.try_enqueue(pkt) {
            Ok(()) => {
                let occ = self.queues[node].occupancy();
                self.record(now, node, &pkt, NetEvent::Enqueue { occupancy: occ });
                self.start_tx(now, node)
            }
            Err(pkt) => {
                self.drop_packet(
                    now,
                    node,
                    pkt,
                    DropSite::QueueFull {
                        occupancy,
                        capacity,
                    },
                );
                Ok(())
            }
        }
    }

    fn start_tx(&mut self, now: SimTime, node: NodeId) -> Result<(), NetError> {
        if self.busy[node].is_some() {
            return Ok(());
        }
        let Some(pkt) = self.queues[node].dequeue() else {
            return Ok(());
        };
        let draw = self.rng.next_uniform();
        let occupancy = self.queues[node].occupancy();
        self.record(now, node, &pkt, NetEvent::Dequeue { occupancy, draw });
        let forward = pkt.kind.is_data();
        let next_hop = self.route.as_ref().and_then(|r| r.next_hop(node, forward));
        let Some(next_hop) = next_hop else {
            self.drop_packet(now, node, pkt, DropSite::NoRoute);
            return self.start_tx(now, node);
        };
        let link = self.cfg.topology.link;
        self.in_flight.insert(
            pkt.uid,
            InFlight {
                pkt,
                next_hop,
                corrupted: draw < link.packet_error_rate,
                draw,
            },
        );
        self.busy[node] = Some(pkt.uid);
        let done = now.after(link.serialization_time(pkt.size_bytes));
        self.events.schedule(done, Ev::TxDone { node, uid: pkt.uid })
    }

    fn on_tx_done(&mut self, now: SimTime, node: NodeId, uid: u64) -> Result<(), NetError> {
        if self.busy[node] != Some(uid) {
            return Ok(());
        }
        self.busy[node] = None;
        let Some(f) = self.in_flight.get(&uid).copied() else {
            return self.start_tx(now, node);
        };
        if f.corrupted {
            self.in_flight.remove(&uid);
            let per = self.cfg.topology.link.packet_error_rate;
            self.drop_packet(now, node, f.pkt, DropSite::ErrorLottery { draw: f.draw, per });
        } else {
            let at = now.after(self.cfg.topology.link.propagation_delay);
            self.events.schedule(
                at,
                Ev::Arrival {
                    node: f.next_hop,
                    uid,
                },
            )?;
        }
        self.start_tx(now, node)
    }

    fn on_arrival(&mut self, now: SimTime, node: NodeId, uid: u64) -> Result<(), NetError> {
        let Some(f) = self.in_flight.remove(&uid) else {
            return Ok(());
        };
        let mut pkt = f.pkt;
        pkt.ttl = pkt.ttl.saturating_sub(1);
        let topo = &self.cfg.topology;
        let (src, dst) = (topo.source(), topo.destination());
        match pkt.kind {
            PacketKind::Data if node == dst => self.deliver_data(now, node, pkt),
            PacketKind::Ack | PacketKind::DupAck if node == src => self.deliver_ack(now, node, pkt),
            _ => self.enqueue(now, node, pkt),
        }
    }

    fn deliver_data(&mut self, now: SimTime, node: NodeId, pkt: Packet) -> Result<(), NetError> {
        self.stats.data_delivered += 1;
        self.record(now, node, &pkt, NetEvent::Deliver);
        let i = pkt.flow.0;
        let initial_ttl = self.flows[i].spec.sender.initial_ttl;
        let hop_count = initial_ttl - pkt.ttl;
        let stamp = now.after(self.cfg.receiver_clock_offset);
        match self.flows[i]
            .receiver
            .on_data(pkt.seq, pkt.send_time, stamp, hop_count)
        {
            ReceiverAction::Ack(kind, echo) => self.send_ack(now, i, kind, echo),
            ReceiverAction::Hold => {
                let generation = self.flows[i].receiver.hold_generation();
                self.events.schedule(
                    now.after(DELAYED_ACK_TIMEOUT),
                    Ev::DelayedAck { flow: i, generation },
                )
            }
        }
    }

    fn send_ack(
        &mut self,
        now: SimTime,
        flow: usize,
        kind: PacketKind,
        echo: crate::types::AckEcho,
    ) -> Result<(), NetError> {
        let pkt = Packet {
            uid: 0,
            flow: FlowId(flow),
            seq: echo.acked_seq,
            kind,
            size_bytes: self.cfg.ack_size,
            send_time: now,
            ttl: self.flows[flow].spec.sender.initial_ttl,
            echo: Some(echo),
        };
        let dst = self.cfg.topology.destination();
        self.originate(now, dst, pkt)
    }

    fn deliver_ack(&mut self, now: SimTime, node: NodeId, pkt: Packet) -> Result<(), NetError> {
        self.record(now, node, &pkt, NetEvent::Deliver);
        let i = pkt.flow.0;
        let echo = pkt.echo.ok_or(NetError::Internal("ack without echo".into()))?;
        let flow = &mut self.flows[i];
        if echo.acked_seq > flow.sender.highest_acked() {
            flow.pending = flow.pending.split_off(&(echo.acked_seq + 1));
            flow.ack_loss = None;
        }
        let out = flow
            .sender
            .on_ack(now, &echo)
            .map_err(|e| NetError::Sender {
                flow: i,
                time: now.secs(),
                source: e,
            })?;
        self.apply_sender_output(now, i, out)
    }

    fn apply_sender_output(
        &mut self,
        now: SimTime,
        i: usize,
        out: SenderOutput,
    ) -> Result<(), NetError> {
        for d in &out.detections {
            self.label(i, d);
        }
        let src = self.cfg.topology.source();
        for pkt in out.packets {
            self.originate(now, src, pkt)?;
        }
        let flow = &mut self.flows[i];
        if let Some((at, generation)) = flow.sender.timer() {
            if flow.scheduled_timer != Some(generation) {
                flow.scheduled_timer = Some(generation);
                self.events.schedule(at, Ev::Timer { flow: i, generation })?;
            }
        }
        Ok(())
    }

    fn label(&mut self, i: usize, d: &Detection) {
        let flow = &mut self.flows[i];
        let source = flow.pending.remove(&d.seq).or_else(|| flow.ack_loss.take());
        let Some(drop_index) = source else {
            self.spurious += 1;
            return;
        };
        self.losses.push(LabelledLoss {
            event: LossEvent {
                flow: FlowId(i),
                seq: d.seq,
                time: d.time,
                detection: d.detection,
                q_at_decision: d.q_at_decision,
                verdict: d.verdict,
                truth: self.drops[drop_index].cause,
                algorithm: flow.spec.algorithm,
            },
            drop_index,
        });
    }
}

pub fn run(cfg: SimConfig) -> Result<SimOutput, NetError> {
    Simulation::new(cfg)?.run()
}
