//! Relative one-way trip time (ROTT) measurement, its smoothed estimate
//! (EROTT) with running extremes, and the usual SRTT/RTTVAR estimator.

use thiserror::Error;

use crate::types::SimTime;

pub const DEFAULT_EROTT_GAIN: f64 = 0.125;

const SRTT_GAIN: f64 = 0.125;
const RTTVAR_GAIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TripError {
    #[error("receiver timestamp {receiver:.9} precedes send time {send:.9} for seq {seq}")]
    NegativeRott { seq: u64, send: f64, receiver: f64 },
    #[error("ack arrival {arrival:.9} precedes receiver timestamp {receiver:.9} for seq {seq}")]
    AckBeforeReceipt { seq: u64, receiver: f64, arrival: f64 },
}

/// Timestamps of one data packet's trip and the ack that came back for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripSample {
    pub seq: u64,
    pub send_time: SimTime,
    pub receiver_timestamp: SimTime,
    pub ack_arrival_time: SimTime,
    pub hop_count: u32,
}

impl TripSample {
    pub fn validate(&self) -> Result<(), TripError> {
        if self.receiver_timestamp < self.send_time {
            return Err(TripError::NegativeRott {
                seq: self.seq,
                send: self.send_time.secs(),
                receiver: self.receiver_timestamp.secs(),
            });
        }
        if self.ack_arrival_time < self.receiver_timestamp {
            return Err(TripError::AckBeforeReceipt {
                seq: self.seq,
                receiver: self.receiver_timestamp.secs(),
                arrival: self.ack_arrival_time.secs(),
            });
        }
        Ok(())
    }

    pub fn rtt(&self) -> f64 {
        self.ack_arrival_time - self.send_time
    }
}

/// Forward-path delay of a sample: `receiver_timestamp - send_time`.
pub fn compute_rott(sample: &TripSample) -> Result<f64, TripError> {
    let rott = sample.receiver_timestamp - sample.send_time;
    if rott < 0.0 {
        return Err(TripError::NegativeRott {
            seq: sample.seq,
            send: sample.send_time.secs(),
            receiver: sample.receiver_timestamp.secs(),
        });
    }
    Ok(rott)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ErottState {
    erott: f64,
    min: f64,
    max: f64,
}

/// EWMA of ROTT samples plus the min/max of the raw samples since the
/// last route change.
#[derive(Debug, Clone, PartialEq)]
pub struct ErottTracker {
    gain: f64,
    state: Option<ErottState>,
    sample_count: u64,
}

impl Default for ErottTracker {
    fn default() -> Self {
        Self::new(DEFAULT_EROTT_GAIN)
    }
}

impl ErottTracker {
    /// `gain` must lie in `(0, 1]`.
    pub fn new(gain: f64) -> Self {
        assert!(gain > 0.0 && gain <= 1.0, "EROTT gain {gain} outside (0,1]");
        ErottTracker {
            gain,
            state: None,
            sample_count: 0,
        }
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn update(&mut self, rott: f64) {
        debug_assert!(rott >= 0.0);
        self.state = Some(match self.state {
            None => ErottState {
                erott: rott,
                min: rott,
                max: rott,
            },
            Some(s) => ErottState {
                erott: (1.0 - self.gain) * s.erott + self.gain * rott,
                min: s.min.min(rott),
                max: s.max.max(rott),
            },
        });
        self.sample_count += 1;
    }

    /// Forget everything; the next sample seeds a fresh estimate.
    pub fn reset_for_new_route(&mut self) {
        self.state = None;
        self.sample_count = 0;
    }

    pub fn erott(&self) -> Option<f64> {
        self.state.map(|s| s.erott)
    }

    pub fn min_erott(&self) -> Option<f64> {
        self.state.map(|s| s.min)
    }

    pub fn max_erott(&self) -> Option<f64> {
        self.state.map(|s| s.max)
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RttState {
    srtt: f64,
    rttvar: f64,
    min_srtt: f64,
    max_srtt: f64,
    latest_rtt: f64,
}

/// Jacobson/Karels smoothed RTT (gains 1/8, 1/4) that also remembers the
/// extremes of SRTT, which the adaptive back-off rule needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RttEstimator {
    state: Option<RttState>,
}

impl RttEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, rtt: f64) {
        debug_assert!(rtt >= 0.0);
        self.state = Some(match self.state {
            None => RttState {
                srtt: rtt,
                rttvar: rtt / 2.0,
                min_srtt: rtt,
                max_srtt: rtt,
                latest_rtt: rtt,
            },
            Some(s) => {
                let rttvar = (1.0 - RTTVAR_GAIN) * s.rttvar + RTTVAR_GAIN * (s.srtt - rtt).abs();
                let srtt = (1.0 - SRTT_GAIN) * s.srtt + SRTT_GAIN * rtt;
                RttState {
                    srtt,
                    rttvar,
                    min_srtt: s.min_srtt.min(srtt),
                    max_srtt: s.max_srtt.max(srtt),
                    latest_rtt: rtt,
                }
            }
        });
    }

    pub fn srtt(&self) -> Option<f64> {
        self.state.map(|s| s.srtt)
    }

    pub fn rttvar(&self) -> Option<f64> {
        self.state.map(|s| s.rttvar)
    }

    /// Most recent SRTT; the same as `srtt()` but named for the back-off rule.
    pub fn last_srtt(&self) -> Option<f64> {
        self.srtt()
    }

    pub fn min_srtt(&self) -> Option<f64> {
        self.state.map(|s| s.min_srtt)
    }

    pub fn max_srtt(&self) -> Option<f64> {
        self.state.map(|s| s.max_srtt)
    }

    /// Raw value of the most recent RTT sample.
    pub fn latest_rtt(&self) -> Option<f64> {
        self.state.map(|s| s.latest_rtt)
    }

    /// `srtt + 4 * rttvar` clamped to `[min, max]`, or `None` before the first sample.
    pub fn rto(&self, min: f64, max: f64) -> Option<f64> {
        self.state
            .map(|s| (s.srtt + 4.0 * s.rttvar).clamp(min, max))
    }
}
