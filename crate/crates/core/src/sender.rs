//! Reno-style sender with pluggable loss classification and route-change
//! RTO handling.
//!
//! Every variant measures the same things: ROTT, EROTT, queue usage and
//! SRTT once per RTT round, and the RTT history and jitter window on every
//! ack triggered by a packet that was sent once. What differs between algorithms
//! is only how a detected loss is classified and how the timer behaves
//! around a suspected link failure:
//!
//! * a timeout classified as link failure raises the link-failure flag,
//!   drops `cwnd` to one and, with `freeze_on_failure`, stops doubling the RTO;
//! * while the flag is up, the first RTT-ending ack means a new route
//!   carries traffic: the RTO is re-based by the configured
//!   [`RecoveryPolicy`], the EROTT tracker restarts for the new route and
//!   both flags clear;
//! * a triple duplicate ack while the flag is up sets the route-recovery
//!   flag and is not treated as congestion.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::classifier::{
    jtcp_jitter, lda_rq_gap_trigger, ClassifierKind, LossContext, QueueUsage, WelcomeState,
    DEFAULT_ALPHA_ACK, DEFAULT_ALPHA_TIMEOUT, DEFAULT_THRESHOLD, DEFAULT_WELCOME_ASCENT,
    DEFAULT_WELCOME_WINDOW,
};
use crate::trip_time::{compute_rott, ErottTracker, RttEstimator, TripSample, DEFAULT_EROTT_GAIN};
use crate::types::{AckEcho, AlgorithmId, DetectionKind, FlowId, LossCause, Packet, PacketKind, SimTime};

pub const DEFAULT_INITIAL_RTO: f64 = 1.0;
pub const DEFAULT_RTO_MIN: f64 = 0.2;
pub const DEFAULT_RTO_MAX: f64 = 64.0;
pub const DEFAULT_PACKET_SIZE: u32 = 1000;
pub const DEFAULT_MAX_WINDOW: u32 = 64;
pub const DEFAULT_INITIAL_TTL: u32 = 64;
pub const DUPACK_THRESHOLD: u32 = 3;
const MIN_SSTHRESH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SenderError {
    #[error("ack for seq {acked} but highest sent is {highest_sent}")]
    AckForUnsent { acked: u64, highest_sent: u64 },
    #[error("malformed trip sample: {0}")]
    Trip(#[from] crate::trip_time::TripError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RtoError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<f64, RtoError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(RtoError::NonPositive { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtoBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for RtoBounds {
    fn default() -> Self {
        RtoBounds {
            min: DEFAULT_RTO_MIN,
            max: DEFAULT_RTO_MAX,
        }
    }
}

impl RtoBounds {
    pub fn clamp(&self, rto: f64) -> f64 {
        rto.clamp(self.min, self.max)
    }
}

/// Unclamped scale factor `sqrt((erott_new / erott_old) * (hop_old / hop_new))`.
pub fn rto_scale_eq12(
    erott_old: f64,
    erott_new: f64,
    hop_old: u32,
    hop_new: u32,
) -> Result<f64, RtoError> {
    let erott_old = positive("erott_old", erott_old)?;
    let erott_new = positive("erott_new", erott_new)?;
    let hop_old = positive("hop_old", f64::from(hop_old))?;
    let hop_new = positive("hop_new", f64::from(hop_new))?;
    Ok(((erott_new / erott_old) * (hop_old / hop_new)).sqrt())
}

/// Re-base the RTO for a new route from the ratio of forward delays and the
/// inverse ratio of hop counts, combined as a geometric mean.
pub fn adjust_rto_eq12(
    rto_old: f64,
    erott_old: f64,
    erott_new: f64,
    hop_old: u32,
    hop_new: u32,
    bounds: RtoBounds,
) -> Result<f64, RtoError> {
    let rto_old = positive("rto_old", rto_old)?;
    Ok(bounds.clamp(rto_old * rto_scale_eq12(erott_old, erott_new, hop_old, hop_new)?))
}

/// RTO scales with the RTT ratio of new to old route.
pub fn adjust_rto_welcome(
    rto_old: f64,
    rtt_old: f64,
    rtt_new: f64,
    bounds: RtoBounds,
) -> Result<f64, RtoError> {
    let rto_old = positive("rto_old", rto_old)?;
    let rtt_old = positive("rtt_old", rtt_old)?;
    let rtt_new = positive("rtt_new", rtt_new)?;
    Ok(bounds.clamp(rto_old * rtt_new / rtt_old))
}

/// Adaptive back-off response: `1 + (last - min) / (max - min)` of the old
/// RTO. A degenerate SRTT history (`max == min`) gives a factor of one.
pub fn adjust_rto_abra(
    rto_old: f64,
    last_srtt: f64,
    min_srtt: f64,
    max_srtt: f64,
    bounds: RtoBounds,
) -> Result<f64, RtoError> {
    let rto_old = positive("rto_old", rto_old)?;
    let span = max_srtt - min_srtt;
    let factor = if span > 0.0 {
        1.0 + ((last_srtt - min_srtt) / span).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(bounds.clamp(rto_old * factor))
}

/// How the RTO is set when a new route is detected after a link failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecoveryPolicy {
    /// Keep whatever the RTT estimator says.
    Standard,
    /// Forward-delay and hop-count ratio against the broken route.
    HopErott,
    /// RTT ratio against the broken route.
    RttRatio,
    /// SRTT position within its historical range.
    SrttRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenderConfig {
    pub packet_size: u32,
    pub initial_ttl: u32,
    /// Receiver window, in packets. Caps `cwnd`.
    pub max_window: u32,
    pub initial_rto: f64,
    pub rto_bounds: RtoBounds,
    pub erott_gain: f64,
    pub alpha_ack: f64,
    pub alpha_timeout: f64,
    pub threshold: f64,
    pub welcome_window: usize,
    pub welcome_ascent: usize,
    pub classifier: ClassifierKind,
    pub recovery: RecoveryPolicy,
    /// Stop exponential back-off while the link-failure flag is up.
    pub freeze_on_failure: bool,
}

impl Default for SenderConfig {
    fn default() -> Self {
        SenderConfig {
            packet_size: DEFAULT_PACKET_SIZE,
            initial_ttl: DEFAULT_INITIAL_TTL,
            max_window: DEFAULT_MAX_WINDOW,
            initial_rto: DEFAULT_INITIAL_RTO,
            rto_bounds: RtoBounds::default(),
            erott_gain: DEFAULT_EROTT_GAIN,
            alpha_ack: DEFAULT_ALPHA_ACK,
            alpha_timeout: DEFAULT_ALPHA_TIMEOUT,
            threshold: DEFAULT_THRESHOLD,
            welcome_window: DEFAULT_WELCOME_WINDOW,
            welcome_ascent: DEFAULT_WELCOME_ASCENT,
            classifier: ClassifierKind::Enhanced,
            recovery: RecoveryPolicy::HopErott,
            freeze_on_failure: true,
        }
    }
}

impl SenderConfig {
    /// Set classifier, recovery policy and failure-mode timer for a named algorithm.
    pub fn with_algorithm(mut self, algorithm: AlgorithmId) -> Self {
        let (classifier, recovery, freeze) = match algorithm {
            AlgorithmId::Enhanced => (ClassifierKind::Enhanced, RecoveryPolicy::HopErott, true),
            AlgorithmId::Reno => (ClassifierKind::AlwaysCongestion, RecoveryPolicy::Standard, false),
            AlgorithmId::FixedRto => (ClassifierKind::FixedRto, RecoveryPolicy::Standard, true),
            AlgorithmId::Welcome => (ClassifierKind::Welcome, RecoveryPolicy::RttRatio, true),
            AlgorithmId::Jtcp => (ClassifierKind::Jtcp, RecoveryPolicy::Standard, false),
            AlgorithmId::LdaRq => (ClassifierKind::LdaRq, RecoveryPolicy::Standard, false),
        };
        self.classifier = classifier;
        self.recovery = recovery;
        self.freeze_on_failure = freeze;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FailureFlags {
    pub link_failure: bool,
    pub route_recovery: bool,
}

/// What the sender remembers about the current route, for comparison with
/// the next one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteSnapshot {
    pub erott: f64,
    pub rto: f64,
    pub hop_count: u32,
    pub rtt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SenderEvent {
    Send,
    Retransmit,
    Ack,
    DupAck,
    Timeout,
    FastRetransmit,
    RouteRecovery,
}

impl SenderEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            SenderEvent::Send => "send",
            SenderEvent::Retransmit => "retransmit",
            SenderEvent::Ack => "ack",
            SenderEvent::DupAck => "dupack",
            SenderEvent::Timeout => "timeout",
            SenderEvent::FastRetransmit => "fast_retransmit",
            SenderEvent::RouteRecovery => "route_recovery",
        }
    }

    /// Whether the row stands for a data packet leaving the sender.
    pub fn is_transmission(self) -> bool {
        matches!(self, SenderEvent::Send | SenderEvent::Retransmit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenderTraceRow {
    pub time: SimTime,
    pub event: SenderEvent,
    pub seq: u64,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub rto: f64,
    pub q: f64,
    pub link_failure: bool,
    pub route_recovery: bool,
}

/// One accepted ROTT/RTT measurement and the tracker state right after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    pub sample: TripSample,
    pub rott: f64,
    pub rtt: f64,
    pub erott: f64,
    pub min_erott: f64,
    pub max_erott: f64,
}

/// A loss the sender noticed, before the simulator attaches ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub seq: u64,
    pub time: SimTime,
    pub detection: DetectionKind,
    pub verdict: Option<LossCause>,
    pub q_at_decision: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SenderOutput {
    pub packets: Vec<Packet>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, Default)]
struct TxRecord {
    transmissions: u32,
}

#[derive(Debug, Clone, Copy)]
struct JitterSample {
    send: f64,
    recv: f64,
    arrival: SimTime,
}

/// Per-connection sender state.
#[derive(Debug, Clone)]
pub struct Sender {
    cfg: SenderConfig,
    flow: FlowId,
    cwnd: f64,
    ssthresh: f64,
    rto: f64,
    /// Next sequence number to put on the wire (rewinds on timeout).
    next_seq: u64,
    highest_sent: u64,
    highest_acked: u64,
    dup_ack_count: u32,
    first_dupack_at: Option<SimTime>,
    consecutive_timeouts: u32,
    /// No fast retransmit while `highest_acked < recover`.
    recover: u64,
    timed_seq: Option<u64>,
    tx: BTreeMap<u64, TxRecord>,
    flags: FailureFlags,
    snapshot: Option<RouteSnapshot>,
    erott: ErottTracker,
    rtt: RttEstimator,
    queue: QueueUsage,
    welcome: WelcomeState,
    jitter: VecDeque<JitterSample>,
    gap_triggered: bool,
    timer: Option<SimTime>,
    timer_generation: u64,
    trace: Vec<SenderTraceRow>,
    trips: Vec<TripRecord>,
}

impl Sender {
    /// Panics if the classifier parameters in `cfg` are out of range; the
    /// scenario parser validates them first.
    pub fn new(flow: FlowId, cfg: SenderConfig) -> Self {
        let queue = QueueUsage::new(cfg.alpha_ack, cfg.alpha_timeout, cfg.threshold)
            .expect("queue-usage parameters validated by caller");
        let erott = ErottTracker::new(cfg.erott_gain);
        let welcome = WelcomeState::new(cfg.welcome_window, cfg.welcome_ascent);
        let rto = cfg.rto_bounds.clamp(cfg.initial_rto);
        Sender {
            ssthresh: f64::from(cfg.max_window).max(MIN_SSTHRESH),
            cfg,
            flow,
            cwnd: 1.0,
            rto,
            next_seq: 1,
            highest_sent: 0,
            highest_acked: 0,
            dup_ack_count: 0,
            first_dupack_at: None,
            consecutive_timeouts: 0,
            recover: 0,
            timed_seq: None,
            tx: BTreeMap::new(),
            flags: FailureFlags::default(),
            snapshot: None,
            erott,
            rtt: RttEstimator::new(),
            queue,
            welcome,
            jitter: VecDeque::new(),
            gap_triggered: false,
            timer: None,
            timer_generation: 0,
            trace: Vec::new(),
            trips: Vec::new(),
        }
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }
    pub fn config(&self) -> &SenderConfig {
        &self.cfg
    }
    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }
    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }
    pub fn rto(&self) -> f64 {
        self.rto
    }
    pub fn highest_acked(&self) -> u64 {
        self.highest_acked
    }
    pub fn highest_sent(&self) -> u64 {
        self.highest_sent
    }
    pub fn dup_ack_count(&self) -> u32 {
        self.dup_ack_count
    }
    pub fn consecutive_timeouts(&self) -> u32 {
        self.consecutive_timeouts
    }
    pub fn flags(&self) -> FailureFlags {
        self.flags
    }
    pub fn snapshot(&self) -> Option<RouteSnapshot> {
        self.snapshot
    }
    pub fn queue_usage(&self) -> &QueueUsage {
        &self.queue
    }
    pub fn erott_tracker(&self) -> &ErottTracker {
        &self.erott
    }
    pub fn rtt_estimator(&self) -> &RttEstimator {
        &self.rtt
    }
    pub fn trace(&self) -> &[SenderTraceRow] {
        &self.trace
    }
    pub fn trips(&self) -> &[TripRecord] {
        &self.trips
    }
    /// Number of packets sent and not yet cumulatively acked or rewound.
    pub fn in_flight(&self) -> u64 {
        self.next_seq - 1 - self.highest_acked
    }
    /// Retransmission deadline and the generation that identifies it.
    pub fn timer(&self) -> Option<(SimTime, u64)> {
        self.timer.map(|t| (t, self.timer_generation))
    }

    /// Open the connection: send the initial window.
    pub fn start(&mut self, now: SimTime) -> SenderOutput {
        let mut out = SenderOutput::default();
        self.send_window(now, &mut out);
        out
    }

    pub fn on_ack(&mut self, now: SimTime, echo: &AckEcho) -> Result<SenderOutput, SenderError> {
        if echo.acked_seq > self.highest_sent {
            return Err(SenderError::AckForUnsent {
                acked: echo.acked_seq,
                highest_sent: self.highest_sent,
            });
        }
        let mut out = SenderOutput::default();
        if echo.acked_seq > self.highest_acked {
            self.on_new_ack(now, echo, &mut out)?;
        } else if echo.acked_seq == self.highest_acked && self.highest_sent > self.highest_acked {
            self.on_dup_ack(now, echo, &mut out);
        }
        Ok(out)
    }

    /// Retransmission timer expiry. `generation` must match [`Sender::timer`];
    /// stale expiries are ignored.
    pub fn on_timer(&mut self, now: SimTime, generation: u64) -> SenderOutput {
        let mut out = SenderOutput::default();
        if self.timer.is_none() || generation != self.timer_generation {
            return out;
        }
        self.timer = None;
        if self.highest_acked >= self.highest_sent {
            return out;
        }
        self.on_timeout(now, &mut out);
        out
    }

    fn on_new_ack(
        &mut self,
        now: SimTime,
        echo: &AckEcho,
        out: &mut SenderOutput,
    ) -> Result<(), SenderError> {
        let trigger_fresh = self
            .tx
            .get(&echo.trigger_seq)
            .is_some_and(|r| r.transmissions == 1);
        let ends_round = self.timed_seq.is_some_and(|t| echo.acked_seq >= t);
        if ends_round {
            self.timed_seq = None;
        }
        if trigger_fresh {
            self.welcome.push(now - echo.data_send_time);
            self.jitter.push_back(JitterSample {
                send: echo.data_send_time.secs(),
                recv: echo.receiver_timestamp.secs(),
                arrival: now,
            });
        }

        self.tx = self.tx.split_off(&(echo.acked_seq + 1));
        self.highest_acked = echo.acked_seq;
        self.next_seq = self.next_seq.max(self.highest_acked + 1);
        self.dup_ack_count = 0;
        self.first_dupack_at = None;
        self.consecutive_timeouts = 0;

        if self.cwnd < self.ssthresh {
            self.cwnd += 1.0;
        } else {
            self.cwnd += 1.0 / self.cwnd;
        }
        self.cwnd = self.cwnd.min(f64::from(self.cfg.max_window));

        // Karn: only a never-retransmitted packet yields a measurement.
        if ends_round && trigger_fresh {
            let sample = TripSample {
                seq: echo.trigger_seq,
                send_time: echo.data_send_time,
                receiver_timestamp: echo.receiver_timestamp,
                ack_arrival_time: now,
                hop_count: echo.hop_count,
            };
            self.on_round_end(now, sample)?;
        }
        self.record(now, SenderEvent::Ack, echo.acked_seq);

        if self.highest_acked < self.highest_sent {
            self.arm_timer(now);
        } else {
            self.cancel_timer();
        }
        self.send_window(now, out);
        Ok(())
    }

    fn on_round_end(&mut self, now: SimTime, sample: TripSample) -> Result<(), SenderError> {
        sample.validate()?;
        let rott = compute_rott(&sample)?;
        let rtt = sample.rtt();

        self.rtt.update(rtt);
        if let Some(rto) = self.rtt.rto(self.cfg.rto_bounds.min, self.cfg.rto_bounds.max) {
            self.rto = rto;
        }
        self.erott.update(rott);
        let (erott, min, max) = self.erott_triple();
        self.queue.on_ack(erott, min, max);
        if lda_rq_gap_trigger(self.erott.min_erott(), self.erott.max_erott()) {
            self.gap_triggered = true;
        }
        self.trips.push(TripRecord {
            sample,
            rott,
            rtt,
            erott,
            min_erott: min,
            max_erott: max,
        });

        if self.flags.link_failure {
            self.flags.route_recovery = true;
            self.rto = self.recovery_rto(rott, rtt, sample.hop_count);
            self.record(now, SenderEvent::RouteRecovery, sample.seq);
            self.erott.reset_for_new_route();
            self.erott.update(rott);
            self.flags = FailureFlags::default();
            self.snapshot = Some(RouteSnapshot {
                erott: rott,
                rto: self.rto,
                hop_count: sample.hop_count,
                rtt,
            });
        } else {
            self.snapshot = Some(RouteSnapshot {
                erott,
                rto: self.rto,
                hop_count: sample.hop_count,
                rtt,
            });
        }
        Ok(())
    }

    fn erott_triple(&self) -> (f64, f64, f64) {
        match (self.erott.erott(), self.erott.min_erott(), self.erott.max_erott()) {
            (Some(e), Some(lo), Some(hi)) => (e, lo, hi),
            _ => unreachable!("tracker updated just before"),
        }
    }

    fn recovery_rto(&self, rott_new: f64, rtt_new: f64, hop_new: u32) -> f64 {
        let bounds = self.cfg.rto_bounds;
        let Some(old) = self.snapshot else {
            return self.rto;
        };
        let adjusted = match self.cfg.recovery {
            RecoveryPolicy::Standard => return self.rto,
            RecoveryPolicy::HopErott => {
                adjust_rto_eq12(old.rto, old.erott, rott_new, old.hop_count, hop_new, bounds)
            }
            RecoveryPolicy::RttRatio => adjust_rto_welcome(old.rto, old.rtt, rtt_new, bounds),
            RecoveryPolicy::SrttRange => match (
                self.rtt.last_srtt(),
                self.rtt.min_srtt(),
                self.rtt.max_srtt(),
            ) {
                (Some(last), Some(min), Some(max)) => {
                    adjust_rto_abra(old.rto, last, min, max, bounds)
                }
                _ => return self.rto,
            },
        };
        // A zero-delay sample cannot re-base anything; keep the estimator's value.
        adjusted.unwrap_or(self.rto)
    }

    fn on_dup_ack(&mut self, now: SimTime, echo: &AckEcho, out: &mut SenderOutput) {
        if self.tx.get(&echo.trigger_seq).is_some_and(|r| r.transmissions == 1) {
            self.welcome.push(now - echo.data_send_time);
        }
        self.dup_ack_count += 1;
        if self.dup_ack_count == 1 {
            self.first_dupack_at = Some(now);
        }
        self.record(now, SenderEvent::DupAck, self.highest_acked);
        if self.dup_ack_count == DUPACK_THRESHOLD && self.highest_acked >= self.recover {
            self.on_triple_dup_ack(now, out);
        }
    }

    fn on_triple_dup_ack(&mut self, now: SimTime, out: &mut SenderOutput) {
        let seq = self.highest_acked + 1;
        if self.flags.link_failure {
            self.flags.route_recovery = true;
        }
        let srtt = self.rtt.srtt();
        let within = match (self.first_dupack_at, srtt) {
            (Some(first), Some(srtt)) => now - first <= srtt,
            _ => true,
        };
        let jitter = self.round_jitter(now);
        let verdict = self.classify(DetectionKind::TripleDupAck, jitter, within);
        out.detections.push(Detection {
            seq,
            time: now,
            detection: DetectionKind::TripleDupAck,
            verdict,
            q_at_decision: self.queue.q(),
        });

        if matches!(verdict, Some(LossCause::Congestion) | None) {
            self.ssthresh = (self.cwnd / 2.0).max(MIN_SSTHRESH);
            self.cwnd = self.ssthresh;
        }
        self.record(now, SenderEvent::FastRetransmit, seq);
        self.retransmit(now, seq, out);
        self.recover = self.highest_sent + 1;
        self.arm_timer(now);
    }

    fn on_timeout(&mut self, now: SimTime, out: &mut SenderOutput) {
        let seq = self.highest_acked + 1;
        self.consecutive_timeouts += 1;
        self.queue.on_timeout();
        let verdict = self.classify(DetectionKind::Timeout, None, true);
        out.detections.push(Detection {
            seq,
            time: now,
            detection: DetectionKind::Timeout,
            verdict,
            q_at_decision: self.queue.q(),
        });

        match verdict {
            Some(LossCause::LinkFailure) => {
                self.flags.link_failure = true;
                self.cwnd = 1.0;
            }
            Some(LossCause::WirelessError) => {
                self.cwnd = 1.0;
            }
            Some(LossCause::Congestion) | None => {
                self.ssthresh = (self.cwnd / 2.0).max(MIN_SSTHRESH);
                self.cwnd = 1.0;
            }
        }
        let frozen = self.flags.link_failure && self.cfg.freeze_on_failure;
        let wireless = verdict == Some(LossCause::WirelessError);
        if !frozen && !wireless {
            self.rto = self.cfg.rto_bounds.clamp(2.0 * self.rto);
        }

        self.timed_seq = None;
        self.next_seq = self.highest_acked + 1;
        self.recover = self.highest_sent + 1;
        self.dup_ack_count = 0;
        self.first_dupack_at = None;
        self.record(now, SenderEvent::Timeout, seq);
        self.send_window(now, out);
        self.arm_timer(now);
    }

    fn classify(
        &self,
        detection: DetectionKind,
        jitter: Option<f64>,
        dupacks_within_one_rtt: bool,
    ) -> Option<LossCause> {
        let ctx = LossContext {
            detection,
            queue: &self.queue,
            failure_flag_set: self.flags.link_failure,
            consecutive_timeouts: self.consecutive_timeouts,
            welcome: &self.welcome,
            jitter,
            cwnd: self.cwnd.floor() as u32,
            dupacks_within_one_rtt,
            gap_triggered: self.gap_triggered,
        };
        self.cfg.classifier.classify(&ctx)
    }

    /// Jitter ratio between the oldest and newest fresh acks of the last SRTT.
    fn round_jitter(&mut self, now: SimTime) -> Option<f64> {
        let srtt = self.rtt.srtt()?;
        while self
            .jitter
            .front()
            .is_some_and(|s| now - s.arrival > srtt)
        {
            self.jitter.pop_front();
        }
        let (oldest, newest) = (self.jitter.front()?, self.jitter.back()?);
        jtcp_jitter(oldest.send, newest.send, oldest.recv, newest.recv).ok()
    }

    fn send_window(&mut self, now: SimTime, out: &mut SenderOutput) {
        let window = self.cwnd.min(f64::from(self.cfg.max_window)).floor().max(1.0) as u64;
        let limit = self.highest_acked + window;
        let sent_before = out.packets.len();
        while self.next_seq <= limit {
            let seq = self.next_seq;
            self.next_seq += 1;
            let fresh = self.tx.get(&seq).is_none_or(|r| r.transmissions == 0);
            if fresh {
                self.highest_sent = self.highest_sent.max(seq);
                if self.timed_seq.is_none() {
                    self.timed_seq = Some(seq);
                }
            }
            self.emit(now, seq, out);
        }
        if out.packets.len() > sent_before && self.timer.is_none() {
            self.arm_timer(now);
        }
    }

    fn retransmit(&mut self, now: SimTime, seq: u64, out: &mut SenderOutput) {
        self.emit(now, seq, out);
    }

    fn emit(&mut self, now: SimTime, seq: u64, out: &mut SenderOutput) {
        let rec = self.tx.entry(seq).or_default();
        rec.transmissions += 1;
        let event = if rec.transmissions > 1 {
            SenderEvent::Retransmit
        } else {
            SenderEvent::Send
        };
        self.record(now, event, seq);
        out.packets.push(Packet {
            uid: 0,
            flow: self.flow,
            seq,
            kind: PacketKind::Data,
            size_bytes: self.cfg.packet_size,
            send_time: now,
            ttl: self.cfg.initial_ttl,
            echo: None,
        });
    }

    fn arm_timer(&mut self, now: SimTime) {
        self.timer = Some(now.after(self.rto));
        self.timer_generation += 1;
    }

    fn cancel_timer(&mut self) {
        if self.timer.take().is_some() {
            self.timer_generation += 1;
        }
    }

    fn record(&mut self, time: SimTime, event: SenderEvent, seq: u64) {
        self.trace.push(SenderTraceRow {
            time,
            event,
            seq,
            cwnd: self.cwnd,
            ssthresh: self.ssthresh,
            rto: self.rto,
            q: self.queue.q(),
            link_failure: self.flags.link_failure,
            route_recovery: self.flags.route_recovery,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn b() -> RtoBounds {
        RtoBounds::default()
    }

    #[test]
    fn eq12_examples() {
        assert_relative_eq!(adjust_rto_eq12(1.0, 0.05, 0.05, 4, 4, b()).unwrap(), 1.0);
        assert_relative_eq!(
            adjust_rto_eq12(1.0, 0.05, 0.10, 4, 4, b()).unwrap(),
            std::f64::consts::SQRT_2,
            max_relative = 1e-12
        );
        // erott x2, hop_old/hop_new = 1/2
        assert_relative_eq!(
            adjust_rto_eq12(1.0, 0.05, 0.10, 2, 4, b()).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert!(adjust_rto_eq12(1.0, 0.0, 0.1, 2, 4, b()).is_err());
        assert!(adjust_rto_eq12(1.0, 0.1, 0.1, 0, 4, b()).is_err());
        assert!(adjust_rto_eq12(-1.0, 0.1, 0.1, 1, 4, b()).is_err());
    }

    #[test]
    fn eq12_clamps() {
        assert_eq!(adjust_rto_eq12(60.0, 0.01, 1.0, 4, 1, b()).unwrap(), 64.0);
        assert_eq!(adjust_rto_eq12(0.3, 1.0, 0.01, 1, 4, b()).unwrap(), 0.2);
    }

    #[test]
    fn welcome_rto_examples() {
        assert_relative_eq!(adjust_rto_welcome(1.0, 0.1, 0.1, b()).unwrap(), 1.0);
        assert_relative_eq!(adjust_rto_welcome(1.0, 0.1, 0.2, b()).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(adjust_rto_welcome(1.0, 0.2, 0.1, b()).unwrap(), 0.5, max_relative = 1e-12);
        assert!(adjust_rto_welcome(1.0, 0.0, 0.1, b()).is_err());
    }

    #[test]
    fn abra_examples() {
        assert_relative_eq!(adjust_rto_abra(1.0, 0.1, 0.1, 0.3, b()).unwrap(), 1.0);
        assert_relative_eq!(adjust_rto_abra(1.0, 0.3, 0.1, 0.3, b()).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(adjust_rto_abra(1.0, 0.2, 0.1, 0.3, b()).unwrap(), 1.5, max_relative = 1e-12);
        assert_relative_eq!(adjust_rto_abra(1.0, 0.2, 0.2, 0.2, b()).unwrap(), 1.0);
    }

    fn echo_for(sender: &Sender, acked: u64, trigger: u64, sent: f64, recv: f64, hops: u32) -> AckEcho {
        let _ = sender;
        AckEcho {
            acked_seq: acked,
            receiver_timestamp: t(recv),
            hop_count: hops,
            trigger_seq: trigger,
            data_send_time: t(sent),
        }
    }

    #[test]
    fn window_of_one_then_growth() {
        let mut s = Sender::new(FlowId(0), SenderConfig::default());
        let out = s.start(t(0.0));
        assert_eq!(out.packets.len(), 1);
        assert_eq!(out.packets[0].seq, 1);
        assert!(s.timer().is_some());
        let e = echo_for(&s, 1, 1, 0.0, 0.03, 6);
        let out = s.on_ack(t(0.04), &e).unwrap();
        // slow start: cwnd 2, two new packets
        assert_eq!(out.packets.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(s.cwnd(), 2.0);
    }

    #[test]
    fn full_window_sends_nothing() {
        let mut s = Sender::new(FlowId(0), SenderConfig::default());
        s.start(t(0.0));
        let mut out = SenderOutput::default();
        s.send_window(t(0.001), &mut out);
        assert!(out.packets.is_empty());
    }

    #[test]
    fn window_arithmetic() {
        let mut s = Sender::new(FlowId(0), SenderConfig::default());
        s.cwnd = 4.0;
        s.next_seq = 3;
        s.highest_sent = 2;
        s.tx.insert(1, TxRecord { transmissions: 1 });
        s.tx.insert(2, TxRecord { transmissions: 1 });
        let mut out = SenderOutput::default();
        s.send_window(t(0.0), &mut out);
        assert_eq!(out.packets.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn ack_for_unsent_is_rejected() {
        let mut s = Sender::new(FlowId(0), SenderConfig::default());
        s.start(t(0.0));
        let e = echo_for(&s, 5, 5, 0.0, 0.01, 1);
        assert!(matches!(
            s.on_ack(t(0.02), &e),
            Err(SenderError::AckForUnsent { .. })
        ));
    }

    /// Drive a sender to a steady window with RTT-ending acks on a route of `hops`.
    fn warmed(cfg: SenderConfig, hops: u32) -> (Sender, f64) {
        let mut s = Sender::new(FlowId(0), cfg);
        let mut now = 0.0;
        s.start(t(now));
        for _ in 0..20 {
            let seq = s.highest_acked + 1;
            now += 0.05;
            let e = echo_for(&s, seq, seq, now - 0.05, now - 0.02, hops);
            s.on_ack(t(now), &e).unwrap();
        }
        (s, now)
    }

    fn expire(s: &mut Sender) -> SenderOutput {
        let (at, generation) = s.timer().expect("timer armed");
        s.on_timer(at, generation)
    }

    #[test]
    fn congestion_timeout_doubles_rto() {
        let (mut s, _) = warmed(SenderConfig::default(), 4);
        s.queue = s.queue.with_q(0.8);
        let before = s.rto();
        let out = expire(&mut s);
        assert_eq!(out.detections[0].verdict, Some(LossCause::Congestion));
        assert_relative_eq!(s.rto(), (2.0 * before).min(64.0));
        assert_eq!(s.cwnd(), 1.0);
        assert_eq!(out.packets.len(), 1);
        assert!(!s.flags().link_failure);
    }

    #[test]
    fn seventh_timeout_from_full_raises_flag() {
        let (mut s, _) = warmed(SenderConfig::default(), 4);
        s.queue = s.queue.with_q(1.0);
        for n in 1..=7 {
            let out = expire(&mut s);
            let v = out.detections[0].verdict;
            if n < 7 {
                assert_eq!(v, Some(LossCause::Congestion), "timeout {n}");
                assert!(!s.flags().link_failure);
            } else {
                assert_eq!(v, Some(LossCause::LinkFailure));
                assert!(s.flags().link_failure);
            }
        }
    }

    #[test]
    fn flagged_timeouts_keep_rto_frozen() {
        let (mut s, _) = warmed(SenderConfig::default(), 4);
        s.queue = s.queue.with_q(0.1);
        expire(&mut s);
        assert!(s.flags().link_failure);
        let frozen = s.rto();
        for _ in 0..4 {
            let out = expire(&mut s);
            assert_eq!(out.detections[0].verdict, Some(LossCause::LinkFailure));
            assert_eq!(s.rto(), frozen);
            assert!(s.flags().link_failure);
            assert_eq!(out.packets.len(), 1);
        }
    }

    #[test]
    fn recovery_rebases_rto_and_clears_flags() {
        let (mut s, now) = warmed(SenderConfig::default(), 4);
        let snap = s.snapshot().unwrap();
        s.queue = s.queue.with_q(0.1);
        expire(&mut s);
        assert!(s.flags().link_failure);
        let seq = s.highest_acked + 1;
        let old_high = s.highest_sent();
        // retransmission acked: not a measurement, flags stay
        let e = echo_for(&s, old_high, seq, now, now + 0.01, 2);
        s.on_ack(t(now + 2.0), &e).unwrap();
        assert!(s.flags().link_failure);
        // first fresh packet on the new two-hop route ends a round
        let fresh = s.highest_acked + 1;
        let rott_new = 2.0 * snap.erott;
        let e = echo_for(&s, fresh, fresh, now + 2.0, now + 2.0 + rott_new, 2);
        s.on_ack(t(now + 2.0 + rott_new + 0.02), &e).unwrap();
        assert_eq!(s.flags(), FailureFlags::default());
        let expected = adjust_rto_eq12(snap.rto, snap.erott, rott_new, 4, 2, RtoBounds::default()).unwrap();
        assert_relative_eq!(s.rto(), expected, max_relative = 1e-12);
        assert!(s.trace().iter().any(|r| r.event == SenderEvent::RouteRecovery && r.route_recovery));
        let new_snap = s.snapshot().unwrap();
        assert_eq!(new_snap.hop_count, 2);
        assert_eq!(s.erott_tracker().sample_count(), 1);
    }

    #[test]
    fn unflagged_round_updates_snapshot_only() {
        let (mut s, now) = warmed(SenderConfig::default(), 4);
        let seq = s.highest_acked + 1;
        let e = echo_for(&s, seq, seq, now, now + 0.03, 4);
        s.on_ack(t(now + 0.05), &e).unwrap();
        assert_eq!(s.flags(), FailureFlags::default());
        assert_eq!(s.snapshot().unwrap().rto, s.rto());
    }

    #[test]
    fn non_round_ack_leaves_classifier_state() {
        let (mut s, now) = warmed(SenderConfig::default(), 4);
        // cwnd > 1 now; timing one packet, ack the one before it can't happen,
        // so ack a packet while no measurement is running
        s.timed_seq = None;
        let q = s.queue_usage().q();
        let n = s.erott_tracker().sample_count();
        let seq = s.highest_acked + 1;
        let e = echo_for(&s, seq, seq, now, now + 0.5, 4);
        s.on_ack(t(now + 0.6), &e).unwrap();
        assert_eq!(s.queue_usage().q(), q);
        assert_eq!(s.erott_tracker().sample_count(), n);
    }

    fn triple_dup(s: &mut Sender, now: f64) -> SenderOutput {
        let acked = s.highest_acked;
        let mut last = SenderOutput::default();
        for i in 0..3 {
            let e = echo_for(s, acked, acked + 2 + i, now, now + 0.01, 4);
            last = s.on_ack(t(now + 0.001 * i as f64), &e).unwrap();
        }
        last
    }

    #[test]
    fn triple_dupack_congestion_halves() {
        let (mut s, now) = warmed(SenderConfig::default(), 4);
        s.queue = s.queue.with_q(0.7);
        let cwnd = s.cwnd();
        let out = triple_dup(&mut s, now);
        assert_eq!(out.detections[0].verdict, Some(LossCause::Congestion));
        assert_relative_eq!(s.cwnd(), (cwnd / 2.0).max(2.0));
        assert_eq!(out.packets[0].seq, s.highest_acked + 1);
    }

    #[test]
    fn triple_dupack_wireless_keeps_window() {
        let (mut s, now) = warmed(SenderConfig::default(), 4);
        s.queue = s.queue.with_q(0.2);
        let cwnd = s.cwnd();
        let out = triple_dup(&mut s, now);
        assert_eq!(out.detections[0].verdict, Some(LossCause::WirelessError));
        assert_eq!(s.cwnd(), cwnd);
        assert_eq!(out.packets.len(), 1);
    }

    #[test]
    fn triple_dupack_under_flag_signals_recovery() {
        let (mut s, now) = warmed(SenderConfig::default(), 4);
        s.queue = s.queue.with_q(0.9);
        s.flags.link_failure = true;
        let cwnd = s.cwnd();
        let out = triple_dup(&mut s, now);
        assert_eq!(out.detections[0].verdict, Some(LossCause::LinkFailure));
        assert!(s.flags().route_recovery);
        assert_eq!(s.cwnd(), cwnd);
    }

    #[test]
    fn reno_never_freezes() {
        let (mut s, _) = warmed(SenderConfig::default().with_algorithm(AlgorithmId::Reno), 4);
        s.queue = s.queue.with_q(0.0);
        let mut rto = s.rto();
        for _ in 0..3 {
            expire(&mut s);
            assert!(!s.flags().link_failure);
            assert_relative_eq!(s.rto(), (2.0 * rto).min(64.0));
            rto = s.rto();
        }
    }

    #[test]
    fn stale_timer_is_ignored() {
        let (mut s, _) = warmed(SenderConfig::default(), 4);
        let (at, generation) = s.timer().unwrap();
        let out = s.on_timer(at, generation + 7);
        assert!(out.detections.is_empty());
        assert!(s.timer().is_some());
    }
}
