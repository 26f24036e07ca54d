mod common;

use common::*;
use proptest::prelude::*;
use rottcc_core::classifier::{enhanced_classify, QueueUsage};
use rottcc_core::harness::{accuracy, read_losses, write_losses, CellMetrics, Confusion, MetricsReport};
use rottcc_core::netsim::run;
use rottcc_core::sender::{adjust_rto_eq12, rto_scale_eq12, RtoBounds, SenderConfig, SenderEvent};
use rottcc_core::trip_time::ErottTracker;
use rottcc_core::{AlgorithmId, DetectionKind, FlowId, LossCause, LossEvent, SimTime};

#[derive(Debug, Clone)]
enum QOp {
    Ack { erott: f64, min: f64, max: f64 },
    Timeout,
}

fn q_op() -> impl Strategy<Value = QOp> {
    prop_oneof![
        // erott may fall below min or above max between extreme updates.
        (1e-4..10.0f64, 0.0..5.0f64, -0.5..1.5f64).prop_map(|(min, span, pos)| {
            let max = min * (1.0 + span);
            QOp::Ack {
                erott: (min + pos * (max - min)).max(0.0),
                min,
                max,
            }
        }),
        Just(QOp::Timeout),
    ]
}

fn cause() -> impl Strategy<Value = LossCause> {
    prop::sample::select(LossCause::ALL.to_vec())
}

fn loss_event() -> impl Strategy<Value = LossEvent> {
    (
        0usize..8,
        1u64..100_000,
        0u64..999_999_999,
        any::<bool>(),
        0u64..=100_000_000,
        prop::option::of(cause()),
        cause(),
        prop::sample::select(AlgorithmId::ALL.to_vec()),
    )
        .prop_map(|(flow, seq, micros, timeout, q, verdict, truth, algorithm)| LossEvent {
            flow: FlowId(flow),
            seq,
            time: SimTime::from_secs(micros as f64 / 1e6),
            detection: if timeout {
                DetectionKind::Timeout
            } else {
                DetectionKind::TripleDupAck
            },
            q_at_decision: q as f64 / 1e8,
            verdict,
            truth,
            algorithm,
        })
}

fn report_of(events: Vec<LossEvent>) -> MetricsReport {
    MetricsReport {
        scenario: "prop".into(),
        sweep_parameter: None,
        cells: vec![CellMetrics {
            point: 0,
            x: None,
            algorithm: AlgorithmId::Enhanced,
            seed: 1,
            flow_count: 1,
            per: 0.0,
            speed: 0.0,
            accuracy: accuracy(&events),
            confusion: Confusion::from_events(&events),
            throughput: 0.0,
            sum_rto: 0.0,
            spurious: 0,
            losses: events,
        }],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn q_stays_in_unit_interval(q0 in 0.0..=1.0f64, ops in prop::collection::vec(q_op(), 0..200)) {
        let mut q = QueueUsage::default().with_q(q0);
        for op in ops {
            match op {
                QOp::Ack { erott, min, max } => q.on_ack(erott, min, max),
                QOp::Timeout => q.on_timeout(),
            }
            prop_assert!((0.0..=1.0).contains(&q.q()), "{}", q.q());
        }
    }

    #[test]
    fn timeouts_decay_geometrically(q0 in 0.0..=1.0f64, n in 0i32..40) {
        let mut q = QueueUsage::default().with_q(q0);
        for _ in 0..n {
            q.on_timeout();
        }
        let expect = 0.9f64.powi(n) * q0;
        prop_assert!((q.q() - expect).abs() <= 1e-12 * expect.max(1e-300) || q.q() == expect);
    }

    #[test]
    fn first_sample_contributes_zero(rott in 1e-4..5.0f64, q0 in 0.0..=1.0f64) {
        let mut t = ErottTracker::new(0.125);
        t.update(rott);
        let mut q = QueueUsage::default().with_q(q0);
        q.on_ack(t.erott().unwrap(), t.min_erott().unwrap(), t.max_erott().unwrap());
        prop_assert!((q.q() - 0.2 * q0).abs() <= 1e-15);
    }

    #[test]
    fn tracker_extremes_bound_samples(samples in prop::collection::vec(1e-4..5.0f64, 1..60)) {
        let mut t = ErottTracker::new(0.125);
        for &s in &samples {
            t.update(s);
        }
        let (min, max) = (t.min_erott().unwrap(), t.max_erott().unwrap());
        prop_assert!(samples.iter().all(|&s| min <= s && s <= max));
        prop_assert_eq!(min, samples.iter().copied().fold(f64::INFINITY, f64::min));
        prop_assert_eq!(max, samples.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        // Smoothed estimate: independent fold of the EWMA.
        let oracle = samples[1..].iter().fold(samples[0], |e, &s| e + 0.125 * (s - e));
        prop_assert!((t.erott().unwrap() - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn tracker_extremes_ignore_order(
        samples in prop::collection::vec(1e-4..5.0f64, 1..40).prop_flat_map(|v| {
            (Just(v.clone()), Just(v).prop_shuffle())
        })
    ) {
        let (a, b) = samples;
        let mut ta = ErottTracker::new(0.125);
        let mut tb = ErottTracker::new(0.125);
        a.iter().for_each(|&s| ta.update(s));
        b.iter().for_each(|&s| tb.update(s));
        prop_assert_eq!(ta.min_erott(), tb.min_erott());
        prop_assert_eq!(ta.max_erott(), tb.max_erott());
    }

    #[test]
    fn eq12_round_trip_is_identity(
        rto in 0.01..100.0f64,
        a in 1e-3..2.0f64,
        b in 1e-3..2.0f64,
        h in 1u32..20,
        k in 1u32..20,
    ) {
        let there = rto * rto_scale_eq12(a, b, h, k).unwrap();
        let back = there * rto_scale_eq12(b, a, k, h).unwrap();
        prop_assert!((back - rto).abs() <= 1e-12 * rto);
    }

    #[test]
    fn eq12_monotone(
        a in 1e-3..2.0f64,
        b in 1e-3..2.0f64,
        db in 1e-3..1.0f64,
        h in 1u32..20,
        k in 1u32..19,
    ) {
        let wide = RtoBounds { min: 1e-9, max: 1e9 };
        let base = adjust_rto_eq12(1.0, a, b, h, k, wide).unwrap();
        prop_assert!(adjust_rto_eq12(1.0, a, b + db, h, k, wide).unwrap() > base);
        prop_assert!(adjust_rto_eq12(1.0, a, b, h, k + 1, wide).unwrap() < base);
    }

    /// A receiver clock offset shifts erott and min equally and only grows the
    /// max denominator, so verdicts agree except where q sits within the
    /// denominator's relative change of the threshold.
    #[test]
    fn clock_offset_preserves_verdicts(
        rotts in prop::collection::vec(0.01..0.2f64, 2..80),
        frac in 0.0..=0.1f64,
        timeouts in prop::collection::vec(any::<bool>(), 80),
    ) {
        let min_rott = rotts.iter().copied().fold(f64::INFINITY, f64::min);
        let c = frac * min_rott;
        let mut plain = (ErottTracker::new(0.125), QueueUsage::default());
        let mut shifted = (ErottTracker::new(0.125), QueueUsage::default());
        for (i, &r) in rotts.iter().enumerate() {
            for ((t, q), rott) in [(&mut plain, r), (&mut shifted, r + c)] {
                if timeouts[i] {
                    q.on_timeout();
                } else {
                    t.update(rott);
                    q.on_ack(t.erott().unwrap(), t.min_erott().unwrap(), t.max_erott().unwrap());
                }
            }
            let (qa, qb) = (plain.1.q(), shifted.1.q());
            let shift = plain.0.erott().unwrap_or(0.0) - shifted.0.erott().unwrap_or(0.0);
            prop_assert!(shift.abs() <= c + 1e-12);
            // Every blended term had a max of at least min_rott.
            let band = qa * c / (min_rott + c);
            prop_assert!(qb <= qa + 1e-12 && qb >= qa - band - 1e-12, "{} {} {}", qa, qb, band);
            if (qa - 0.5).abs() > band + 1e-12 {
                for detection in [DetectionKind::Timeout, DetectionKind::TripleDupAck] {
                    for flag in [false, true] {
                        prop_assert_eq!(
                            enhanced_classify(detection, &plain.1, flag).cause,
                            enhanced_classify(detection, &shifted.1, flag).cause
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn accuracy_matches_brute_force(
        events in prop::collection::vec((cause(), prop::option::of(cause())), 0..=10)
    ) {
        let evs: Vec<LossEvent> = events
            .iter()
            .map(|&(truth, verdict)| LossEvent {
                flow: FlowId(0),
                seq: 1,
                time: SimTime::ZERO,
                detection: DetectionKind::Timeout,
                q_at_decision: 0.0,
                verdict,
                truth,
                algorithm: AlgorithmId::Enhanced,
            })
            .collect();
        let got = accuracy(&evs);
        for class in LossCause::ALL {
            let mut n = 0;
            let mut k = 0;
            for &(t, v) in &events {
                if t == class {
                    n += 1;
                    if v == Some(t) {
                        k += 1;
                    }
                }
            }
            let want = if n == 0 { None } else { Some(k as f64 / n as f64) };
            prop_assert_eq!(got.get(class), want);
        }
        let c = Confusion::from_events(&evs);
        for class in LossCause::ALL {
            let n = events.iter().filter(|e| e.0 == class).count() as u64;
            prop_assert_eq!(c.truth_total(class), n);
        }
    }

    #[test]
    fn loss_csv_round_trip(events in prop::collection::vec(loss_event(), 0..30)) {
        let mut buf = Vec::new();
        write_losses(&report_of(events.clone()), &mut buf).unwrap();
        let back = read_losses(buf.as_slice()).unwrap();
        prop_assert_eq!(back, events);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sender_traces_are_well_formed(
        seed in 0u64..1000,
        per in 0.0..0.05f64,
        n in 1usize..4,
        algorithm in prop::sample::select(AlgorithmId::ALL.to_vec()),
    ) {
        let cfg = config(mobile(24.0, 2.5, per), flows(n, algorithm, 0.2), 24.0, seed);
        let bounds = SenderConfig::default().rto_bounds;
        let out = run(cfg).unwrap();
        prop_assert!(out.conservation.balanced());
        prop_assert!(out.trace.iter().all(|r| r.time.secs() >= 0.0 && !r.time.secs().is_nan()));
        for f in &out.flows {
            let mut prev: Option<&rottcc_core::sender::SenderTraceRow> = None;
            for r in &f.sender_trace {
                prop_assert!(r.rto >= bounds.min && r.rto <= bounds.max, "rto {}", r.rto);
                prop_assert!(!r.route_recovery || r.link_failure);
                prop_assert!(r.time.secs() >= 0.0);
                prop_assert!((0.0..=1.0).contains(&r.q));
                if let Some(p) = prev {
                    prop_assert!(r.time >= p.time);
                    // Flags only come down together, at a recovery.
                    if p.link_failure && !r.link_failure {
                        prop_assert!(p.event == SenderEvent::RouteRecovery || p.route_recovery);
                        prop_assert!(!r.route_recovery);
                    }
                }
                prev = Some(r);
            }
            for t in &f.trips {
                prop_assert!(t.rott < t.rtt);
                prop_assert!(t.min_erott <= t.rott && t.rott <= t.max_erott);
            }
        }
    }
}

#[test]
fn enhanced_table_is_total() {
    for detection in [DetectionKind::Timeout, DetectionKind::TripleDupAck] {
        for q in [0.2, 0.8] {
            for flag in [false, true] {
                let v = enhanced_classify(detection, &QueueUsage::default().with_q(q), flag);
                let want = match (detection, q >= 0.5, flag) {
                    (DetectionKind::Timeout, true, _) => LossCause::Congestion,
                    (DetectionKind::Timeout, false, _) => LossCause::LinkFailure,
                    (DetectionKind::TripleDupAck, _, true) => LossCause::LinkFailure,
                    (DetectionKind::TripleDupAck, true, false) => LossCause::Congestion,
                    (DetectionKind::TripleDupAck, false, false) => LossCause::WirelessError,
                };
                assert_eq!(v.cause, want, "{detection:?} q={q} flag={flag}");
            }
        }
    }
}
