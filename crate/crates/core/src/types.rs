//! Shared vocabulary: simulated time, packets, loss causes and loss events.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Sub;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParseEnumError;

/// A point in simulated time, in seconds.
///
/// Always finite and nonnegative, which makes the total order below sound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics if `secs` is negative, NaN or infinite.
    pub fn from_secs(secs: f64) -> Self {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "invalid simulated time {secs}"
        );
        SimTime(secs)
    }

    pub fn try_from_secs(secs: f64) -> Option<Self> {
        (secs.is_finite() && secs >= 0.0).then_some(SimTime(secs))
    }

    #[inline]
    pub fn secs(self) -> f64 {
        self.0
    }

    /// `self + dt`; `dt` must keep the result valid.
    pub fn after(self, dt: f64) -> Self {
        SimTime::from_secs(self.0 + dt)
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Signed difference in seconds.
impl Sub for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId(pub usize);

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketKind {
    Data,
    Ack,
    DupAck,
}

impl PacketKind {
    pub fn is_data(self) -> bool {
        matches!(self, PacketKind::Data)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Data => "data",
            PacketKind::Ack => "ack",
            PacketKind::DupAck => "dupack",
        }
    }
}

/// What the receiver echoes back to the sender in every acknowledgment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckEcho {
    /// Highest in-order sequence number received.
    pub acked_seq: u64,
    /// Arrival time at the receiver of the data packet that triggered this ack.
    pub receiver_timestamp: SimTime,
    /// Hops the triggering data packet traversed.
    pub hop_count: u32,
    /// Sequence number of the data packet that triggered this ack.
    pub trigger_seq: u64,
    /// Sender timestamp carried by the triggering data packet.
    pub data_send_time: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    /// Unique per simulation; used for conservation accounting.
    pub uid: u64,
    pub flow: FlowId,
    pub seq: u64,
    pub kind: PacketKind,
    pub size_bytes: u32,
    pub send_time: SimTime,
    /// Remaining hop budget.
    pub ttl: u32,
    pub echo: Option<AckEcho>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossCause {
    Congestion,
    WirelessError,
    LinkFailure,
}

impl LossCause {
    pub const ALL: [LossCause; 3] = [
        LossCause::Congestion,
        LossCause::WirelessError,
        LossCause::LinkFailure,
    ];

    pub fn index(self) -> usize {
        match self {
            LossCause::Congestion => 0,
            LossCause::WirelessError => 1,
            LossCause::LinkFailure => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossCause::Congestion => "congestion",
            LossCause::WirelessError => "wireless_error",
            LossCause::LinkFailure => "link_failure",
        }
    }
}

impl fmt::Display for LossCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossCause {
    type Err = ParseEnumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossCause::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ParseEnumError::new("loss cause", s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionKind {
    Timeout,
    TripleDupAck,
}

impl DetectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionKind::Timeout => "timeout",
            DetectionKind::TripleDupAck => "triple_dupack",
        }
    }
}

impl fmt::Display for DetectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectionKind {
    type Err = ParseEnumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "timeout" => Ok(DetectionKind::Timeout),
            "triple_dupack" => Ok(DetectionKind::TripleDupAck),
            _ => Err(ParseEnumError::new("detection kind", s)),
        }
    }
}

/// Sender variants that can be compared in one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmId {
    Enhanced,
    Reno,
    FixedRto,
    Welcome,
    Jtcp,
    LdaRq,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 6] = [
        AlgorithmId::Enhanced,
        AlgorithmId::Reno,
        AlgorithmId::FixedRto,
        AlgorithmId::Welcome,
        AlgorithmId::Jtcp,
        AlgorithmId::LdaRq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::Enhanced => "enhanced",
            AlgorithmId::Reno => "reno",
            AlgorithmId::FixedRto => "fixed_rto",
            AlgorithmId::Welcome => "welcome",
            AlgorithmId::Jtcp => "jtcp",
            AlgorithmId::LdaRq => "lda_rq",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            AlgorithmId::Enhanced => {
                "ROTT queue-usage classifier with link-failure RTO freeze and hop/EROTT re-basing"
            }
            AlgorithmId::Reno => "plain Reno: every loss is congestion, exponential back-off",
            AlgorithmId::FixedRto => "two successive timeouts mean route failure; RTO is held",
            AlgorithmId::Welcome => "RTT-history classifier, RTT-ratio RTO re-basing",
            AlgorithmId::Jtcp => "jitter-ratio classifier for duplicate-ack losses",
            AlgorithmId::LdaRq => "queue-usage classifier gated on a 3x ROTT gap; no link-failure class",
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmId {
    type Err = ParseEnumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = AlgorithmId::ALL.iter().map(|a| a.as_str()).collect();
                ParseEnumError::with_valid("algorithm", s, &valid)
            })
    }
}

/// A loss the sender detected, with the classifier's opinion and what really happened.
///
/// `verdict == None` means the classifier abstained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEvent {
    pub flow: FlowId,
    pub seq: u64,
    pub time: SimTime,
    pub detection: DetectionKind,
    pub q_at_decision: f64,
    pub verdict: Option<LossCause>,
    pub truth: LossCause,
    pub algorithm: AlgorithmId,
}

pub fn verdict_str(v: Option<LossCause>) -> &'static str {
    v.map_or("abstain", LossCause::as_str)
}

pub fn parse_verdict(s: &str) -> Result<Option<LossCause>, ParseEnumError> {
    if s == "abstain" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}
