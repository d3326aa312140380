//! Acceptance suite: one PASS/FAIL line per criterion, each with its
//! runtime budget. Exits nonzero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{oracles, pose_camera, random_camera, rng};
use nns_core::io::write_trajectory;
use nns_core::pipeline::analyze_segments;
use nns_core::{
    design_bandpass, detect_cycles, estimate_affine_camera, fit_frame, generate_signal,
    generate_trajectory, project, run_pipeline, score_detection, segment_bursts, CameraMotion,
    DisplacementMode, Execution, FilterSpec, FitConfig, LandmarkFrame, MovementSignal,
    PipelineConfig, QuantParams, Scenario, ShapeModel, SignalStage, ThresholdMode, JAW_TIP,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn shape_synthesis() -> Outcome {
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let n = r.random_range(68..130);
        let k = r.random_range(1..12);
        let model = ShapeModel::fixture(n, k, i).map_err(|e| e.to_string())?;
        let synth = |a: &[f64]| model.synthesize_shape(&a.to_vec().into()).unwrap().points;
        let zero = synth(&vec![0.0; k]);
        let m = model.mean();
        for (j, &v) in model.landmark_annotation().iter().enumerate() {
            ensure!(zero[j] == [m[3 * v], m[3 * v + 1], m[3 * v + 2]], "model {i}: zero alpha is not the mean");
        }
        let a: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
        let s: f64 = r.random_range(-4.0..4.0);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let scaled: Vec<f64> = a.iter().map(|x| s * x).collect();
        let (sa, sb, ssum, ss) = (synth(&a), synth(&b), synth(&sum), synth(&scaled));
        for j in 0..68 {
            for d in 0..3 {
                let additive = (ssum[j][d] - sa[j][d] - sb[j][d] + zero[j][d]).abs();
                let scaling = (ss[j][d] - zero[j][d] - s * (sa[j][d] - zero[j][d])).abs();
                worst = worst.max(additive).max(scaling);
            }
        }
    }
    ensure!(worst <= 1e-10, "linearity error {worst:e}");
    Ok(format!("1000 models, max linearity error {worst:.1e}"))
}

fn rms(cam: &nns_core::AffineCamera, x3: &[[f64; 3]], x2: &[[f64; 2]]) -> f64 {
    let s: f64 = x3
        .iter()
        .zip(x2)
        .map(|(p, q)| {
            let e = cam.project_point(*p);
            (e[0] - q[0]).powi(2) + (e[1] - q[1]).powi(2)
        })
        .sum();
    (s / x3.len() as f64).sqrt()
}

fn camera_recovery() -> Outcome {
    let mut r = rng(102);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let (mut clean_max, mut noisy_lo, mut noisy_hi) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let cam = random_camera(&mut r);
        let x3: Vec<[f64; 3]> = (0..10)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let x2: Vec<[f64; 2]> = x3.iter().map(|p| cam.project_point(*p)).collect();
        let est = estimate_affine_camera(&x2, &x3, None).map_err(|e| e.to_string())?;
        clean_max = clean_max.max(rms(&est, &x3, &x2));
        let noisy: Vec<[f64; 2]> = x2
            .iter()
            .map(|q| [q[0] + noise.sample(&mut r), q[1] + noise.sample(&mut r)])
            .collect();
        let est = estimate_affine_camera(&noisy, &x3, None).map_err(|e| e.to_string())?;
        let e = rms(&est, &x3, &noisy);
        noisy_lo = noisy_lo.min(e);
        noisy_hi = noisy_hi.max(e);
    }
    ensure!(clean_max < 1e-9, "noiseless RMS {clean_max:e}");
    ensure!(noisy_lo >= 0.2 && noisy_hi <= 1.0, "noisy RMS range [{noisy_lo:.3}, {noisy_hi:.3}]");
    Ok(format!("noiseless max RMS {clean_max:.1e}, noisy RMS in [{noisy_lo:.3}, {noisy_hi:.3}]"))
}

fn pose_decoupling() -> Outcome {
    let model = ShapeModel::fixture(100, 8, 7).map_err(|e| e.to_string())?;
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut r = rng(103);
    let alpha: Vec<f64> = (0..8).map(|_| n.sample(&mut r)).collect();
    let shape = model.synthesize_shape(&alpha.into()).map_err(|e| e.to_string())?;
    let poses = [
        pose_camera(0.0, 0.0, 0.0, 150.0, [320.0, 240.0]),
        pose_camera(30.0, 0.0, 0.0, 150.0, [300.0, 250.0]),
        pose_camera(-25.0, 15.0, 5.0, 120.0, [340.0, 220.0]),
        pose_camera(10.0, -20.0, -12.0, 200.0, [280.0, 260.0]),
        pose_camera(-40.0, 8.0, 20.0, 90.0, [360.0, 200.0]),
        pose_camera(5.0, 25.0, -30.0, 170.0, [310.0, 245.0]),
    ];
    // Ridge 0: the check is exact recovery, not regularised estimation.
    let config = FitConfig {
        ridge: 0.0,
        ..FitConfig::default()
    };
    let mut fronts = Vec::new();
    for cam in &poses {
        let frame = LandmarkFrame::complete(0, 0.0, project(cam, &shape));
        fronts.push(fit_frame(&model, &frame, &config).map_err(|e| e.to_string())?.frontalized.points);
    }
    let mut worst = 0.0f64;
    for f in &fronts[1..] {
        for (p, q) in f.iter().zip(&fronts[0]) {
            for d in 0..3 {
                worst = worst.max((p[d] - q[d]).abs());
            }
        }
    }
    ensure!(worst < 1e-6, "max disagreement {worst:e}");
    Ok(format!("{} poses, max disagreement {worst:.1e}", poses.len()))
}

fn filter_contract() -> Outcome {
    let k = design_bandpass(&FilterSpec::default(), 30.0).map_err(|e| e.to_string())?;
    let (g2, g0, g10) = (k.gain(2.0), k.gain(0.0), k.gain(10.0));
    ensure!(g2 >= 0.95, "2 Hz gain {g2}");
    ensure!(g0 < 1e-3, "DC gain {g0:e}");
    ensure!(g10 < 0.05, "10 Hz gain {g10}");
    let x: Vec<f64> = (0..600).map(|i| (2.0 * PI * 2.0 * i as f64 / 30.0).sin()).collect();
    let y = k.filter(&x).map_err(|e| e.to_string())?;
    let peak = |s: &[f64], i: usize| {
        let (a, b, c) = (s[i - 1], s[i], s[i + 1]);
        i as f64 + 0.5 * (a - c) / (a - 2.0 * b + c)
    };
    let mut worst = 0.0f64;
    for i in 60..x.len() - 60 {
        if x[i] > x[i - 1] && x[i] >= x[i + 1] {
            let j = (i - 2..=i + 2).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
            worst = worst.max((peak(&y, j) - peak(&x, i)).abs());
        }
    }
    ensure!(worst < 1.0, "peak shift {worst} samples");
    Ok(format!("gain at 2 Hz {g2:.4}, DC {g0:.1e}, 10 Hz {g10:.4}; peak shift {worst:.3} samples"))
}

fn random_signal(r: &mut impl Rng, n: usize) -> Vec<f64> {
    match r.random_range(0..4) {
        0 => (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        1 => (0..n).map(|_| r.random_range(0..5) as f64).collect(),
        2 => {
            let f = r.random_range(0.2..4.0);
            (0..n)
                .map(|i| (2.0 * PI * f * i as f64 / 30.0).sin() + 0.2 * r.random_range(-1.0..1.0))
                .collect()
        }
        _ => {
            let sc = Scenario::default().with_seed(r.random());
            let (raw, _) = generate_signal(&sc).unwrap();
            let k = design_bandpass(&FilterSpec::default(), 30.0).unwrap();
            let mut y = k.filter(&raw.samples).unwrap();
            y.truncate(n.max(3));
            y
        }
    }
}

fn detection_oracle() -> Outcome {
    let mut r = rng(105);
    let mut total_cycles = 0;
    for case in 0..500 {
        let n = r.random_range(3..=10_000);
        let x = random_signal(&mut r, n);
        let params = QuantParams {
            min_peak_distance_s: r.random_range(0.01..1.0),
            max_intra_burst_gap_s: r.random_range(0.2..3.0),
            min_cycles_per_burst: r.random_range(1..9),
            threshold_mode: if r.random() { ThresholdMode::MeanAbs } else { ThresholdMode::MeanRaw },
        };
        let mut sig = MovementSignal::uniform(JAW_TIP, DisplacementMode::Vertical, 30.0, 0.0, x.clone());
        sig.stage = SignalStage::Filtered;
        let got = detect_cycles(&sig, &params).map_err(|e| e.to_string())?;
        let idx: Vec<usize> = got.iter().map(|c| c.index).collect();
        ensure!(idx == oracles::detect(&x, 30.0, &params), "case {case}: detection differs");
        total_cycles += got.len();
        let times: Vec<f64> = got.iter().map(|c| c.time).collect();
        let seg = segment_bursts(&got, &params);
        let (bursts, fragments) = oracles::segment(&times, &params);
        let as_idx = |bs: &[nns_core::Burst]| -> Vec<Vec<usize>> {
            bs.iter()
                .map(|b| b.cycles.iter().map(|c| idx.binary_search(&c.index).unwrap()).collect())
                .collect()
        };
        ensure!(as_idx(&seg.bursts) == bursts, "case {case}: bursts differ");
        ensure!(as_idx(&seg.fragments) == fragments, "case {case}: fragments differ");
    }
    Ok(format!("500 signals, {total_cycles} cycles, exact match"))
}

fn end_to_end() -> Outcome {
    let model = ShapeModel::builtin();
    // The synthetic jaw opens along the model's vertical axis.
    let config = PipelineConfig {
        mode: DisplacementMode::Vertical,
        ..PipelineConfig::default()
    };
    let mut recall = 0.0;
    let mut exact = 0;
    let mut worst_freq = 0.0f64;
    for seed in 0..50 {
        let sc = Scenario::default().with_seed(seed);
        let (session, truth) =
            generate_trajectory(&sc, &model, &CameraMotion::moving_head()).map_err(|e| e.to_string())?;
        let out = run_pipeline(&session, &model, &config, Execution::Parallel).map_err(|e| e.to_string())?;
        let score = score_detection(&out.report, &truth);
        recall += score.cycle_recall;
        exact += usize::from(score.burst_count_error == 0);
        let f = out.report.mean_frequency_hz.ok_or(format!("seed {seed}: no frequency"))?;
        worst_freq = worst_freq.max((f - 2.0).abs());
    }
    recall /= 50.0;
    let detail = format!("mean recall {recall:.4}, exact burst count {exact}/50, max |f - 2| {worst_freq:.4} Hz");
    ensure!(recall >= 0.95 && exact >= 45 && worst_freq <= 0.1, "{detail}");
    Ok(detail)
}

fn burst_rule() -> Outcome {
    let train = |cycles: usize| {
        let sc = Scenario {
            burst_count: 1,
            cycles_per_burst_range: [cycles, cycles],
            noise_sd: 0.0,
            drift_amplitude: 0.0,
            ..Scenario::default()
        };
        let (raw, truth) = generate_signal(&sc).map_err(|e| e.to_string())?;
        analyze_segments(&[raw], &FilterSpec::default(), &QuantParams::default(), truth.session_duration_s)
            .map(|a| a.report)
            .map_err(|e| e.to_string())
    };
    let (five, six) = (train(5)?, train(6)?);
    ensure!(
        five.cycles.len() == 5 && five.burst_count() == 0,
        "5-cycle train: {} cycles, {} bursts",
        five.cycles.len(),
        five.burst_count()
    );
    ensure!(
        six.cycles.len() == 6 && six.burst_count() == 1,
        "6-cycle train: {} cycles, {} bursts",
        six.cycles.len(),
        six.burst_count()
    );
    Ok("5 cycles give 0 bursts, 6 cycles give 1".into())
}

fn run_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (session, _) = generate_trajectory(
        &Scenario::default().with_seed(8),
        &ShapeModel::builtin(),
        &CameraMotion::moving_head(),
    )
    .map_err(|e| e.to_string())?;
    let traj = dir.path().join("trajectory.csv");
    write_trajectory(&session, &traj).map_err(|e| e.to_string())?;
    let invoke = |out: &Path| -> Result<Vec<u8>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_nns"))
            .arg("run")
            .arg("--trajectory")
            .arg(&traj)
            .arg("--out-dir")
            .arg(out)
            .status()
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "nns run exited with {status}");
        std::fs::read(out.join("report.json")).map_err(|e| e.to_string())
    };
    let a = invoke(&dir.path().join("a"))?;
    let b = invoke(&dir.path().join("b"))?;
    ensure!(a == b, "reports differ");
    Ok(format!("two invocations, {} identical bytes", a.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("shape synthesis: zero alpha and linearity", Some(1), shape_synthesis),
        ("camera recovery", Some(1), camera_recovery),
        ("pose decoupling", Some(5), pose_decoupling),
        ("filter contract", Some(1), filter_contract),
        ("detection oracle equivalence", Some(30), detection_oracle),
        ("end-to-end synthetic reproduction", Some(120), end_to_end),
        ("burst rule fidelity", None, burst_rule),
        ("run determinism", None, run_determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(msg.unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let over = budget.is_some_and(|b| elapsed > Duration::from_secs(b));
        let budget_text = budget.map_or(String::new(), |b| format!(", budget {b} s"));
        let (verdict, detail) = match outcome {
            Ok(d) if !over => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over budget")),
            Err(e) => ("FAIL", e),
        };
        failed += usize::from(verdict == "FAIL");
        println!("{verdict} {name} [{:.2} s{budget_text}]: {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
