//! Runs the full trajectory pipeline over many synthetic seeds and prints
//! per-seed detection scores.
//!
//! ```text
//! cargo run --release -p nns-core --example synthetic_sweep -- 50
//! ```

use nns_core::par::{map_range, Execution};
use nns_core::synth::{generate_trajectory, score_detection, CameraMotion, Scenario};
use nns_core::{run_pipeline, PipelineConfig, ShapeModel};

fn main() {
    let seeds: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let moving = std::env::args().any(|a| a == "--moving");
    let model = ShapeModel::fixture(100, 10, 1).expect("fixture model");
    let scenario = Scenario {
        noise_sd: 0.1 * Scenario::default().cycle_amplitude,
        ..Scenario::default()
    };
    let motion = if moving { CameraMotion::moving_head() } else { CameraMotion::default() };
    let mut config = PipelineConfig::default();
    if let Some(mode) = std::env::args().skip_while(|a| a != "--mode").nth(1) {
        config.mode = mode.parse().expect("mode");
    }
    let scores = map_range(seeds, Execution::Parallel, |seed| {
        let (session, truth) = generate_trajectory(&scenario.clone().with_seed(seed as u64), &model, &motion)
            .expect("synthetic session");
        let out = run_pipeline(&session, &model, &config, Execution::Sequential).expect("pipeline");
        score_detection(&out.report, &truth)
    });
    for (seed, s) in scores.iter().enumerate() {
        println!(
            "seed {seed:3}  recall {:.3}  precision {:.3}  bursts {:+}  freq err {}",
            s.cycle_recall,
            s.cycle_precision,
            s.burst_count_error,
            s.frequency_error_hz.map_or("undefined".into(), |f| format!("{f:.3}")),
        );
    }
    let n = scores.len() as f64;
    let recall = scores.iter().map(|s| s.cycle_recall).sum::<f64>() / n;
    let exact = scores.iter().filter(|s| s.burst_count_error == 0).count();
    println!("mean recall {recall:.4}, exact burst count {exact}/{}", scores.len());
}
