mod common;

use std::f64::consts::PI;

use common::{oracles, rng};
use nns_core::pipeline::analyze_segments;
use nns_core::synth::generate_signal;
use nns_core::{
    detect_cycles, quantify, segment_bursts, Burst, CycleEvent, DisplacementMode, Error, FilterSpec,
    MovementSignal, QuantParams, Scenario, SignalStage, ThresholdMode, JAW_TIP,
};
use proptest::prelude::*;
use rand::Rng;

fn filtered(samples: Vec<f64>, rate: f64, t0: f64) -> MovementSignal {
    let mut s = MovementSignal::uniform(JAW_TIP, DisplacementMode::Vertical, rate, t0, samples);
    s.stage = SignalStage::Filtered;
    s
}

fn events(times: &[f64]) -> Vec<CycleEvent> {
    times
        .iter()
        .enumerate()
        .map(|(index, &time)| CycleEvent { time, amplitude: 1.0, index })
        .collect()
}

fn random_signal(r: &mut impl Rng, n: usize) -> Vec<f64> {
    match r.random_range(0..4) {
        0 => (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        // Few distinct levels, so plateaus are common.
        1 => (0..n).map(|_| r.random_range(0..5) as f64).collect(),
        2 => {
            let f = r.random_range(0.2..4.0);
            (0..n)
                .map(|i| (2.0 * PI * f * i as f64 / 30.0).sin() + 0.2 * r.random_range(-1.0..1.0))
                .collect()
        }
        _ => {
            let sc = Scenario {
                noise_sd: 0.005,
                ..Scenario::default().with_seed(r.random())
            };
            let (raw, _) = generate_signal(&sc).unwrap();
            let k = nns_core::design_bandpass(&FilterSpec::default(), 30.0).unwrap();
            let mut y = k.filter(&raw.samples).unwrap();
            y.truncate(n.max(3));
            y
        }
    }
}

fn random_params(r: &mut impl Rng) -> QuantParams {
    QuantParams {
        min_peak_distance_s: r.random_range(0.01..1.0),
        max_intra_burst_gap_s: r.random_range(0.2..3.0),
        min_cycles_per_burst: r.random_range(1..9),
        threshold_mode: if r.random() { ThresholdMode::MeanAbs } else { ThresholdMode::MeanRaw },
    }
}

#[test]
fn detection_and_segmentation_match_brute_force() {
    let mut r = rng(31);
    for case in 0..500 {
        let n = r.random_range(3..=10_000);
        let x = random_signal(&mut r, n);
        let params = random_params(&mut r);
        let sig = filtered(x.clone(), 30.0, 0.0);
        let got = detect_cycles(&sig, &params).unwrap();
        let got_idx: Vec<usize> = got.iter().map(|c| c.index).collect();
        assert_eq!(got_idx, oracles::detect(&x, 30.0, &params), "case {case}");

        let times: Vec<f64> = got.iter().map(|c| c.time).collect();
        let seg = segment_bursts(&got, &params);
        let (bursts, fragments) = oracles::segment(&times, &params);
        let as_idx = |bs: &[Burst]| -> Vec<Vec<usize>> {
            bs.iter()
                .map(|b| b.cycles.iter().map(|c| got.iter().position(|g| g == c).unwrap()).collect())
                .collect()
        };
        assert_eq!(as_idx(&seg.bursts), bursts, "case {case}");
        assert_eq!(as_idx(&seg.fragments), fragments, "case {case}");
    }
}

#[test]
fn flat_signal_has_no_cycles() {
    let sig = filtered(vec![0.0; 300], 30.0, 0.0);
    assert!(detect_cycles(&sig, &QuantParams::default()).unwrap().is_empty());
}

#[test]
fn two_hertz_sinusoid_gives_twenty_cycles() {
    let x: Vec<f64> = (0..300).map(|i| (2.0 * PI * 2.0 * i as f64 / 30.0).sin()).collect();
    let cycles = detect_cycles(&filtered(x, 30.0, 0.0), &QuantParams::default()).unwrap();
    assert!((19..=21).contains(&cycles.len()), "{}", cycles.len());
    for w in cycles.windows(2) {
        assert!((w[1].time - w[0].time - 0.5).abs() < 0.05);
    }
}

#[test]
fn raw_signal_is_a_stage_error() {
    let sig = MovementSignal::uniform(JAW_TIP, DisplacementMode::Vertical, 30.0, 0.0, vec![0.0; 10]);
    assert!(matches!(detect_cycles(&sig, &QuantParams::default()), Err(Error::Stage { .. })));
}

#[test]
fn long_silence_splits_two_bursts() {
    let mut times: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
    times.extend((0..8).map(|i| 3.5 + 3.0 + i as f64 * 0.5));
    let seg = segment_bursts(&events(&times), &QuantParams::default());
    assert_eq!(seg.bursts.iter().map(Burst::cycle_count).collect::<Vec<_>>(), vec![8, 8]);
    assert!(seg.fragments.is_empty());
}

#[test]
fn five_cycles_are_a_fragment() {
    let times: Vec<f64> = (0..5).map(|i| i as f64 * 0.5).collect();
    let seg = segment_bursts(&events(&times), &QuantParams::default());
    assert!(seg.bursts.is_empty());
    assert_eq!(seg.fragments.len(), 1);
    assert_eq!(seg.fragments[0].cycle_count(), 5);
}

/// A clean single train of `cycles` pulses through filter and quantifier.
fn train_report(cycles: usize) -> nns_core::NNSReport {
    let sc = Scenario {
        burst_count: 1,
        cycles_per_burst_range: [cycles, cycles],
        noise_sd: 0.0,
        drift_amplitude: 0.0,
        ..Scenario::default()
    };
    let (raw, truth) = generate_signal(&sc).unwrap();
    analyze_segments(&[raw], &FilterSpec::default(), &QuantParams::default(), truth.session_duration_s)
        .unwrap()
        .report
}

#[test]
fn burst_minimum_is_six_cycles() {
    let five = train_report(5);
    assert_eq!(five.cycles.len(), 5);
    assert_eq!(five.burst_count(), 0);
    assert_eq!(five.fragments.len(), 1);
    let six = train_report(6);
    assert_eq!(six.burst_count(), 1);
    assert_eq!(six.cycles_per_burst, vec![6]);
}

#[test]
fn worked_example_report() {
    // Two 8-cycle bursts each spanning 3.5 s of cycle periods.
    let dt = 3.5 / 8.0;
    let mut times: Vec<f64> = (0..8).map(|i| 5.0 + i as f64 * dt).collect();
    times.extend((0..8).map(|i| 30.0 + i as f64 * dt));
    let cycles = events(&times);
    let params = QuantParams::default();
    let seg = segment_bursts(&cycles, &params);
    let sig = filtered(vec![0.0; 1800], 30.0, 0.0);
    let report = quantify(&sig, &cycles, &seg, 60.0, &params).unwrap();
    assert!((report.mean_frequency_hz.unwrap() - 16.0 / 7.0).abs() < 1e-12);
    assert!((report.bursts_per_minute - 2.0).abs() < 1e-12);
    assert!((report.cycles_per_minute - 16.0).abs() < 1e-12);
    for d in &report.burst_durations_s {
        assert!((d - 3.5).abs() < 1e-12);
    }

    let empty = quantify(&sig, &[], &Default::default(), 60.0, &params).unwrap();
    assert_eq!(empty.mean_frequency_hz, None);
    assert_eq!(empty.bursts_per_minute, 0.0);
    assert!(matches!(quantify(&sig, &[], &Default::default(), 0.0, &params), Err(Error::InvalidParameter { .. })));
}

#[test]
fn constructed_two_hertz_session_reports_two_hertz() {
    let sc = Scenario {
        noise_sd: 0.0,
        drift_amplitude: 0.0,
        ..Scenario::default().with_seed(5)
    };
    let (raw, truth) = generate_signal(&sc).unwrap();
    let report = analyze_segments(&[raw], &FilterSpec::default(), &QuantParams::default(), truth.session_duration_s)
        .unwrap()
        .report;
    let f = report.mean_frequency_hz.unwrap();
    assert!((f - 2.0).abs() <= 0.05, "frequency {f}");
}

fn signal_strategy() -> impl Strategy<Value = Vec<f64>> {
    (3usize..1500).prop_flat_map(|n| proptest::collection::vec(-1.0f64..1.0, n))
}

fn params_strategy() -> impl Strategy<Value = QuantParams> {
    (0.01f64..1.0, 0.2f64..3.0, 1usize..9).prop_map(|(d, g, m)| QuantParams {
        min_peak_distance_s: d,
        max_intra_burst_gap_s: g,
        min_cycles_per_burst: m,
        threshold_mode: ThresholdMode::MeanAbs,
    })
}

fn report_for(x: Vec<f64>, t0: f64, params: &QuantParams) -> nns_core::NNSReport {
    let sig = filtered(x, 30.0, t0);
    let cycles = detect_cycles(&sig, params).unwrap();
    let seg = segment_bursts(&cycles, params);
    quantify(&sig, &cycles, &seg, sig.duration_s().max(1.0), params).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn time_shift_moves_events_only(x in signal_strategy(), params in params_strategy(), shift in -1000.0f64..1000.0) {
        let a = report_for(x.clone(), 0.0, &params);
        let b = report_for(x, shift, &params);
        prop_assert_eq!(a.cycles.len(), b.cycles.len());
        for (p, q) in a.cycles.iter().zip(&b.cycles) {
            prop_assert_eq!(p.index, q.index);
            prop_assert!((q.time - p.time - shift).abs() < 1e-9);
        }
        prop_assert_eq!(&a.cycles_per_burst, &b.cycles_per_burst);
        prop_assert_eq!(a.fragments.len(), b.fragments.len());
        for (p, q) in a.burst_durations_s.iter().zip(&b.burst_durations_s) {
            prop_assert!((p - q).abs() < 1e-9);
        }
        match (a.mean_frequency_hz, b.mean_frequency_hz) {
            (Some(p), Some(q)) => prop_assert!((p - q).abs() < 1e-6 * p.abs().max(1.0)),
            (p, q) => prop_assert_eq!(p, q),
        }
    }

    #[test]
    fn positive_scaling_keeps_structure(x in signal_strategy(), params in params_strategy(), s in 1e-3f64..1e3) {
        let a = report_for(x.clone(), 0.0, &params);
        let b = report_for(x.iter().map(|v| v * s).collect(), 0.0, &params);
        let idx = |r: &nns_core::NNSReport| r.cycles.iter().map(|c| c.index).collect::<Vec<_>>();
        prop_assert_eq!(idx(&a), idx(&b));
        prop_assert_eq!(&a.cycles_per_burst, &b.cycles_per_burst);
        prop_assert_eq!(&a.burst_durations_s, &b.burst_durations_s);
        prop_assert_eq!(a.mean_frequency_hz, b.mean_frequency_hz);
        for (p, q) in a.cycles.iter().zip(&b.cycles) {
            prop_assert!((q.amplitude - s * p.amplitude).abs() <= 1e-12 * q.amplitude.abs().max(1.0));
        }
    }

    #[test]
    fn report_is_self_consistent(x in signal_strategy(), params in params_strategy()) {
        let r = report_for(x, 0.0, &params);
        let in_burst: usize = r.bursts.iter().map(Burst::cycle_count).sum();
        prop_assert_eq!(r.cycles_per_burst.iter().sum::<usize>(), in_burst);
        let total: f64 = r.burst_durations_s.iter().sum();
        if total > 0.0 {
            let f = in_burst as f64 / total;
            prop_assert!((r.mean_frequency_hz.unwrap() - f).abs() < 1e-12);
        } else {
            prop_assert_eq!(r.mean_frequency_hz, None);
        }
        prop_assert!(r.bursts_per_minute >= 0.0 && r.cycles_per_minute >= 0.0);
        for b in &r.bursts {
            prop_assert!(b.duration_s >= 0.0);
            prop_assert!(b.cycle_count() >= params.min_cycles_per_burst);
            for w in b.cycles.windows(2) {
                prop_assert!(w[1].time > w[0].time);
                prop_assert!(w[1].time - w[0].time <= params.max_intra_burst_gap_s + 1e-9);
            }
        }
        // Mean-abs thresholds are nonnegative, so every cycle is positive.
        prop_assert!(r.cycles.iter().all(|c| c.amplitude > 0.0));
    }
}
