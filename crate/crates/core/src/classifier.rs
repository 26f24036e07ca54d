//! Loss classifiers.
//!
//! The enhanced classifier estimates how full the intermediate queues are
//! from ROTT ([`QueueUsage`]) and reads a timeout in a non-congested network
//! as a broken route. The baselines (RTT history, jitter ratio, two-timeout
//! rule, gap-gated queue usage) sit behind the same [`ClassifierKind`] entry
//! point so the sender can swap them.

use std::collections::VecDeque;

use thiserror::Error;

use crate::types::{DetectionKind, LossCause};

pub const DEFAULT_ALPHA_ACK: f64 = 0.8;
pub const DEFAULT_ALPHA_TIMEOUT: f64 = 0.1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_WELCOME_WINDOW: usize = 10;
pub const DEFAULT_WELCOME_ASCENT: usize = 3;
pub const LDA_RQ_GAP: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("RTT history is empty")]
    InsufficientData,
    #[error("jitter undefined: receive span {0:.9} s is not positive")]
    UndefinedJitter(f64),
    #[error("{name} = {value} must lie strictly between 0 and 1")]
    OutOfUnitInterval { name: &'static str, value: f64 },
}

/// Estimated queue usage `q` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueUsage {
    q: f64,
    alpha_ack: f64,
    alpha_timeout: f64,
    threshold: f64,
}

impl Default for QueueUsage {
    fn default() -> Self {
        QueueUsage {
            q: 0.0,
            alpha_ack: DEFAULT_ALPHA_ACK,
            alpha_timeout: DEFAULT_ALPHA_TIMEOUT,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<f64, ClassifierError> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(ClassifierError::OutOfUnitInterval { name, value })
    }
}

impl QueueUsage {
    pub fn new(alpha_ack: f64, alpha_timeout: f64, threshold: f64) -> Result<Self, ClassifierError> {
        Ok(QueueUsage {
            q: 0.0,
            alpha_ack: check_unit("alpha_ack", alpha_ack)?,
            alpha_timeout: check_unit("alpha_timeout", alpha_timeout)?,
            threshold: check_unit("threshold", threshold)?,
        })
    }

    /// Starts from an arbitrary `q` (clamped into `[0,1]`); mostly for tests.
    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q.clamp(0.0, 1.0);
        self
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `q >= threshold`. A tie counts as congested.
    pub fn is_congested(&self) -> bool {
        self.q >= self.threshold
    }

    /// Blend in the instantaneous usage `(erott - min) / max` after an
    /// RTT-ending ack. A nonpositive `max_erott` (no samples yet) leaves `q` alone.
    pub fn on_ack(&mut self, erott: f64, min_erott: f64, max_erott: f64) {
        if !(max_erott > 0.0) {
            return;
        }
        let instant = ((erott - min_erott) / max_erott).clamp(0.0, 1.0);
        self.q = (self.alpha_ack * instant + (1.0 - self.alpha_ack) * self.q).clamp(0.0, 1.0);
    }

    /// A timeout carries no delay sample, so the instantaneous term is zero
    /// and `q` simply decays by `1 - alpha_timeout`.
    pub fn on_timeout(&mut self) {
        self.q *= 1.0 - self.alpha_timeout;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManetMode {
    Congested,
    NonCongested,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierVerdict {
    pub cause: LossCause,
    pub manet_mode: ManetMode,
    pub q_at_decision: f64,
}

/// The enhanced decision table.
///
/// | detection | link-failure flag | q side | cause |
/// |---|---|---|---|
/// | timeout | any | congested | congestion |
/// | timeout | any | not | link failure |
/// | triple dup-ack | set | any | link failure (route change) |
/// | triple dup-ack | unset | congested | congestion |
/// | triple dup-ack | unset | not | wireless error |
pub fn enhanced_classify(
    detection: DetectionKind,
    qu: &QueueUsage,
    failure_flag_set: bool,
) -> ClassifierVerdict {
    let congested = qu.is_congested();
    let cause = match (detection, failure_flag_set, congested) {
        (DetectionKind::Timeout, _, true) => LossCause::Congestion,
        (DetectionKind::Timeout, _, false) => LossCause::LinkFailure,
        (DetectionKind::TripleDupAck, true, _) => LossCause::LinkFailure,
        (DetectionKind::TripleDupAck, false, true) => LossCause::Congestion,
        (DetectionKind::TripleDupAck, false, false) => LossCause::WirelessError,
    };
    ClassifierVerdict {
        cause,
        manet_mode: if congested {
            ManetMode::Congested
        } else {
            ManetMode::NonCongested
        },
        q_at_decision: qu.q(),
    }
}

/// Recent RTT samples for the RTT-history classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct WelcomeState {
    history: VecDeque<f64>,
    window: usize,
    ascent: usize,
}

impl Default for WelcomeState {
    fn default() -> Self {
        WelcomeState::new(DEFAULT_WELCOME_WINDOW, DEFAULT_WELCOME_ASCENT)
    }
}

impl WelcomeState {
    /// `ascent` strictly increasing steps count as "RTT is growing"; the
    /// window must hold at least `ascent + 1` samples.
    pub fn new(window: usize, ascent: usize) -> Self {
        assert!(ascent >= 1 && window > ascent, "window {window} too short for ascent {ascent}");
        WelcomeState {
            history: VecDeque::with_capacity(window),
            window,
            ascent,
        }
    }

    pub fn from_history(history: &[f64]) -> Self {
        let mut s = WelcomeState::new(DEFAULT_WELCOME_WINDOW.max(history.len()), DEFAULT_WELCOME_ASCENT);
        for &r in history {
            s.push(r);
        }
        s
    }

    pub fn push(&mut self, rtt: f64) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(rtt);
    }

    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Each of the last `ascent` samples is strictly above its predecessor.
    pub fn is_ascending(&self) -> bool {
        let n = self.history.len();
        if n < self.ascent + 1 {
            return false;
        }
        (n - self.ascent..n).all(|i| self.history[i] > self.history[i - 1])
    }

    pub fn classify(&self, detection: DetectionKind) -> Result<LossCause, ClassifierError> {
        if self.history.is_empty() {
            return Err(ClassifierError::InsufficientData);
        }
        Ok(if self.is_ascending() {
            LossCause::Congestion
        } else {
            match detection {
                DetectionKind::TripleDupAck => LossCause::WirelessError,
                DetectionKind::Timeout => LossCause::LinkFailure,
            }
        })
    }
}

/// Jitter ratio over one round: how much the receive spacing of the oldest
/// and newest acked packets exceeds their send spacing, relative to the
/// receive spacing.
pub fn jtcp_jitter(
    oldest_send: f64,
    newest_send: f64,
    oldest_recv: f64,
    newest_recv: f64,
) -> Result<f64, ClassifierError> {
    let recv_span = newest_recv - oldest_recv;
    if !(recv_span > 0.0) {
        return Err(ClassifierError::UndefinedJitter(recv_span));
    }
    Ok((recv_span - (newest_send - oldest_send)) / recv_span)
}

/// Congestion needs both a jitter ratio above `1/cwnd` and three dup-acks
/// that took longer than one RTT to collect.
pub fn jtcp_classify(jr: f64, cwnd: u32, acks_within_one_rtt: bool) -> LossCause {
    let cwnd = cwnd.max(1);
    if jr > 1.0 / f64::from(cwnd) && !acks_within_one_rtt {
        LossCause::Congestion
    } else {
        LossCause::WirelessError
    }
}

pub fn fixed_rto_detect(consecutive_timeouts: u32) -> bool {
    consecutive_timeouts >= 2
}

/// True once `max / min` strictly exceeds three. Unset or nonpositive
/// extremes mean the classifier is not operable yet.
pub fn lda_rq_gap_trigger(min_erott: Option<f64>, max_erott: Option<f64>) -> bool {
    match (min_erott, max_erott) {
        (Some(min), Some(max)) if min > 0.0 => max / min > LDA_RQ_GAP,
        _ => false,
    }
}

/// Which classifier a sender consults when it detects a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    Enhanced,
    /// Plain TCP: every loss is congestion.
    AlwaysCongestion,
    FixedRto,
    Welcome,
    Jtcp,
    LdaRq,
}

/// Everything a classifier may look at when a loss is detected.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub detection: DetectionKind,
    pub queue: &'a QueueUsage,
    pub failure_flag_set: bool,
    /// Including the timeout being classified.
    pub consecutive_timeouts: u32,
    pub welcome: &'a WelcomeState,
    /// Jitter ratio of the last round, when enough acks arrived to define it.
    pub jitter: Option<f64>,
    pub cwnd: u32,
    pub dupacks_within_one_rtt: bool,
    /// Latched once the ROTT gap has exceeded three.
    pub gap_triggered: bool,
}

impl ClassifierKind {
    /// `None` means the classifier abstains.
    pub fn classify(self, ctx: &LossContext<'_>) -> Option<LossCause> {
        match self {
            ClassifierKind::Enhanced => {
                Some(enhanced_classify(ctx.detection, ctx.queue, ctx.failure_flag_set).cause)
            }
            ClassifierKind::AlwaysCongestion => Some(LossCause::Congestion),
            ClassifierKind::FixedRto => Some(match ctx.detection {
                DetectionKind::Timeout if fixed_rto_detect(ctx.consecutive_timeouts) => {
                    LossCause::LinkFailure
                }
                _ => LossCause::Congestion,
            }),
            // No history yet: assume congestion.
            ClassifierKind::Welcome => {
                Some(ctx.welcome.classify(ctx.detection).unwrap_or(LossCause::Congestion))
            }
            ClassifierKind::Jtcp => Some(match ctx.detection {
                DetectionKind::Timeout => LossCause::Congestion,
                DetectionKind::TripleDupAck => jtcp_classify(
                    ctx.jitter.unwrap_or(0.0),
                    ctx.cwnd,
                    ctx.dupacks_within_one_rtt,
                ),
            }),
            ClassifierKind::LdaRq => match ctx.detection {
                // Timeouts get the standard response; this scheme has no
                // link-failure class.
                DetectionKind::Timeout => Some(LossCause::Congestion),
                DetectionKind::TripleDupAck if !ctx.gap_triggered => None,
                DetectionKind::TripleDupAck => Some(if ctx.queue.is_congested() {
                    LossCause::Congestion
                } else {
                    LossCause::WirelessError
                }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn q_starts_at_zero_on_first_measurement() {
        let mut qu = QueueUsage::default();
        qu.on_ack(0.05, 0.05, 0.05);
        assert_eq!(qu.q(), 0.0);
    }

    #[test]
    fn q_on_ack_by_hand() {
        let mut qu = QueueUsage::default().with_q(0.5);
        qu.on_ack(0.180, 0.100, 0.200);
        // 0.8 * 0.4 + 0.2 * 0.5
        assert_relative_eq!(qu.q(), 0.42, max_relative = 1e-12);
    }

    #[test]
    fn q_saturates_at_one() {
        let mut qu = QueueUsage::default().with_q(1.0);
        qu.on_ack(0.2, 1e-9, 0.2);
        assert!(qu.q() > 0.999_999 && qu.q() <= 1.0);
        // instantaneous term above the max is clamped
        let mut qu = QueueUsage::default().with_q(1.0);
        qu.on_ack(0.5, 0.0, 0.2);
        assert_eq!(qu.q(), 1.0);
    }

    #[test]
    fn q_on_ack_without_samples_is_noop() {
        let mut qu = QueueUsage::default().with_q(0.3);
        qu.on_ack(0.1, 0.0, 0.0);
        assert_eq!(qu.q(), 0.3);
    }

    #[test]
    fn q_on_timeout_decays() {
        let mut qu = QueueUsage::default().with_q(1.0);
        qu.on_timeout();
        assert_relative_eq!(qu.q(), 0.9, max_relative = 1e-12);
        let mut zero = QueueUsage::default();
        zero.on_timeout();
        assert_eq!(zero.q(), 0.0);
    }

    #[test]
    fn seven_timeouts_needed_from_full() {
        let mut qu = QueueUsage::default().with_q(1.0);
        let mut n = 0;
        while qu.is_congested() {
            qu.on_timeout();
            n += 1;
        }
        assert_eq!(n, 7);
        assert_relative_eq!(qu.q(), 0.9f64.powi(7), max_relative = 1e-12);
    }

    #[test]
    fn queue_usage_rejects_bad_gains() {
        assert!(QueueUsage::new(0.0, 0.1, 0.5).is_err());
        assert!(QueueUsage::new(0.8, 1.0, 0.5).is_err());
        assert!(QueueUsage::new(0.8, 0.1, 1.5).is_err());
        assert!(QueueUsage::new(0.8, 0.1, 0.5).is_ok());
    }

    #[test]
    fn enhanced_examples() {
        let hi = QueueUsage::default().with_q(0.6);
        let lo = QueueUsage::default().with_q(0.3);
        assert_eq!(
            enhanced_classify(DetectionKind::Timeout, &hi, false).cause,
            LossCause::Congestion
        );
        assert_eq!(
            enhanced_classify(DetectionKind::Timeout, &lo, false).cause,
            LossCause::LinkFailure
        );
        assert_eq!(
            enhanced_classify(DetectionKind::TripleDupAck, &lo, false).cause,
            LossCause::WirelessError
        );
        assert_eq!(
            enhanced_classify(DetectionKind::TripleDupAck, &hi, true).cause,
            LossCause::LinkFailure
        );
    }

    #[test]
    fn enhanced_threshold_tie_is_congestion() {
        let tie = QueueUsage::default().with_q(0.5);
        let v = enhanced_classify(DetectionKind::TripleDupAck, &tie, false);
        assert_eq!(v.cause, LossCause::Congestion);
        assert_eq!(v.manet_mode, ManetMode::Congested);
        assert_eq!(v.q_at_decision, 0.5);
    }

    #[test]
    fn enhanced_is_total() {
        for detection in [DetectionKind::Timeout, DetectionKind::TripleDupAck] {
            for q in [0.2, 0.8] {
                for flag in [false, true] {
                    let qu = QueueUsage::default().with_q(q);
                    let v = enhanced_classify(detection, &qu, flag);
                    assert_eq!(v.manet_mode == ManetMode::Congested, q >= 0.5);
                    assert!(LossCause::ALL.contains(&v.cause));
                }
            }
        }
    }

    #[test]
    fn welcome_examples() {
        let up = WelcomeState::from_history(&[0.10, 0.12, 0.15, 0.19]);
        assert_eq!(up.classify(DetectionKind::Timeout).unwrap(), LossCause::Congestion);
        assert_eq!(
            up.classify(DetectionKind::TripleDupAck).unwrap(),
            LossCause::Congestion
        );
        let flat = WelcomeState::from_history(&[0.10, 0.10, 0.10]);
        assert_eq!(
            flat.classify(DetectionKind::TripleDupAck).unwrap(),
            LossCause::WirelessError
        );
        assert_eq!(flat.classify(DetectionKind::Timeout).unwrap(), LossCause::LinkFailure);
        assert_eq!(
            WelcomeState::default().classify(DetectionKind::Timeout),
            Err(ClassifierError::InsufficientData)
        );
    }

    #[test]
    fn welcome_needs_full_ascent() {
        // only two increasing steps at the tail
        let s = WelcomeState::from_history(&[0.2, 0.1, 0.12, 0.15]);
        assert!(!s.is_ascending());
        let mut w = WelcomeState::new(4, 3);
        for r in [0.5, 0.1, 0.2, 0.3, 0.4] {
            w.push(r);
        }
        assert_eq!(w.len(), 4);
        assert!(w.is_ascending());
    }

    #[test]
    fn jitter_examples() {
        assert_relative_eq!(jtcp_jitter(0.0, 0.1, 1.0, 1.1).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            jtcp_jitter(0.0, 0.100, 1.0, 1.120).unwrap(),
            0.020 / 0.120,
            max_relative = 1e-12
        );
        assert!(matches!(
            jtcp_jitter(0.0, 0.1, 1.0, 1.0),
            Err(ClassifierError::UndefinedJitter(_))
        ));
    }

    #[test]
    fn jtcp_rule() {
        assert_eq!(jtcp_classify(0.2, 8, false), LossCause::Congestion);
        assert_eq!(jtcp_classify(0.05, 8, false), LossCause::WirelessError);
        assert_eq!(jtcp_classify(0.05, 8, true), LossCause::WirelessError);
        assert_eq!(jtcp_classify(0.2, 8, true), LossCause::WirelessError);
        // boundary is strict
        assert_eq!(jtcp_classify(0.125, 8, false), LossCause::WirelessError);
    }

    #[test]
    fn fixed_rto_rule() {
        assert!(fixed_rto_detect(2));
        assert!(fixed_rto_detect(5));
        assert!(!fixed_rto_detect(1));
        assert!(!fixed_rto_detect(0));
    }

    #[test]
    fn lda_rq_gap() {
        assert!(lda_rq_gap_trigger(Some(0.02), Some(0.07)));
        assert!(!lda_rq_gap_trigger(Some(0.02), Some(0.06)));
        assert!(!lda_rq_gap_trigger(Some(0.05), Some(0.05)));
        assert!(!lda_rq_gap_trigger(None, None));
        assert!(!lda_rq_gap_trigger(Some(0.0), Some(1.0)));
    }

    fn ctx<'a>(
        detection: DetectionKind,
        queue: &'a QueueUsage,
        welcome: &'a WelcomeState,
    ) -> LossContext<'a> {
        LossContext {
            detection,
            queue,
            failure_flag_set: false,
            consecutive_timeouts: 1,
            welcome,
            jitter: None,
            cwnd: 8,
            dupacks_within_one_rtt: true,
            gap_triggered: false,
        }
    }

    #[test]
    fn lda_rq_abstains_until_triggered_and_never_says_link_failure() {
        let qu = QueueUsage::default().with_q(0.1);
        let w = WelcomeState::default();
        let mut c = ctx(DetectionKind::TripleDupAck, &qu, &w);
        assert_eq!(ClassifierKind::LdaRq.classify(&c), None);
        c.gap_triggered = true;
        assert_eq!(ClassifierKind::LdaRq.classify(&c), Some(LossCause::WirelessError));
        c.detection = DetectionKind::Timeout;
        assert_eq!(ClassifierKind::LdaRq.classify(&c), Some(LossCause::Congestion));
    }

    #[test]
    fn fixed_rto_through_dispatch() {
        let qu = QueueUsage::default();
        let w = WelcomeState::default();
        let mut c = ctx(DetectionKind::Timeout, &qu, &w);
        assert_eq!(ClassifierKind::FixedRto.classify(&c), Some(LossCause::Congestion));
        c.consecutive_timeouts = 2;
        assert_eq!(ClassifierKind::FixedRto.classify(&c), Some(LossCause::LinkFailure));
        c.detection = DetectionKind::TripleDupAck;
        assert_eq!(ClassifierKind::FixedRto.classify(&c), Some(LossCause::Congestion));
    }

    #[test]
    fn welcome_dispatch_defaults_to_congestion_without_history() {
        let qu = QueueUsage::default();
        let w = WelcomeState::default();
        let c = ctx(DetectionKind::Timeout, &qu, &w);
        assert_eq!(ClassifierKind::Welcome.classify(&c), Some(LossCause::Congestion));
    }
}
