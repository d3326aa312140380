//! Synthetic NNS sessions with known ground truth, and detection scoring.
//!
//! Cycles are raised-cosine pulses grouped into bursts separated by pauses;
//! white noise and a slow sinusoidal drift are added on top. Trajectory-level
//! sessions inject that signal as the vertical movement of the jaw tip in
//! model space and render all 68 landmarks through a scripted affine camera.
//! Randomness comes from ChaCha8 seeded with `Scenario::seed`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera_fit::{project, AffineCamera, LandmarkFrame};
use crate::error::{Error, Result};
use crate::io::TrajectorySession;
use crate::layout::{JAW_TIP, LANDMARK_COUNT};
use crate::quant::NNSReport;
use crate::shape_model::{ShapeCoefficients, ShapeModel};
use crate::signal::{DisplacementMode, MovementSignal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub burst_count: usize,
    pub cycles_per_burst_range: [usize; 2],
    pub intra_burst_hz: f64,
    /// Pause between the last cycle of one burst and the first of the next;
    /// also used for the lead-in and tail.
    pub pause_s_range: [f64; 2],
    /// Peak jaw displacement per cycle, model units.
    pub cycle_amplitude: f64,
    pub pulse_width_s: f64,
    pub noise_sd: f64,
    pub drift_amplitude: f64,
    pub drift_hz: f64,
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            burst_count: 6,
            cycles_per_burst_range: [6, 12],
            intra_burst_hz: 2.0,
            pause_s_range: [3.0, 6.0],
            cycle_amplitude: 0.05,
            pulse_width_s: 0.4,
            noise_sd: 0.005,
            drift_amplitude: 0.01,
            drift_hz: 0.05,
            sample_rate: 30.0,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        if !(self.intra_burst_hz > 0.0 && self.intra_burst_hz < self.sample_rate / 2.0) {
            return Err(Error::param(
                "intra_burst_hz",
                "must lie strictly between 0 and half the sample rate",
            ));
        }
        let [lo, hi] = self.cycles_per_burst_range;
        if lo == 0 || lo > hi {
            return Err(Error::param("cycles_per_burst_range", "need 1 <= lo <= hi"));
        }
        let [plo, phi] = self.pause_s_range;
        if !(plo > 0.0 && plo <= phi && phi.is_finite()) {
            return Err(Error::param("pause_s_range", "need 0 < lo <= hi"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::param("noise_sd", "must be nonnegative"));
        }
        if !(self.drift_amplitude >= 0.0 && self.drift_amplitude.is_finite()) {
            return Err(Error::param("drift_amplitude", "must be nonnegative"));
        }
        if !(self.drift_hz >= 0.0 && self.drift_hz < 0.1) {
            return Err(Error::param("drift_hz", "must be in [0, 0.1)"));
        }
        if !(self.pulse_width_s > 0.0 && self.pulse_width_s.is_finite()) {
            return Err(Error::param("pulse_width_s", "must be positive"));
        }
        if !self.cycle_amplitude.is_finite() {
            return Err(Error::param("cycle_amplitude", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cycle_times: Vec<f64>,
    /// (first cycle, last cycle) per burst.
    pub burst_spans: Vec<(f64, f64)>,
    pub cycles_per_burst: Vec<usize>,
    pub true_frequency_hz: f64,
    pub session_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub cycle_recall: f64,
    pub cycle_precision: f64,
    pub matched_cycles: usize,
    pub detected_cycles: usize,
    pub truth_cycles: usize,
    /// Detected minus true burst count.
    pub burst_count_error: i64,
    /// `None` when the report's frequency is undefined.
    pub frequency_error_hz: Option<f64>,
}

/// Half-width of the cycle matching window, seconds.
pub const MATCH_WINDOW_S: f64 = 0.15;

struct Timeline {
    bursts: Vec<Vec<f64>>,
    duration_s: f64,
}

fn timeline(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Timeline {
    let [lo, hi] = scenario.cycles_per_burst_range;
    let [plo, phi] = scenario.pause_s_range;
    let pause = |rng: &mut ChaCha8Rng| {
        if phi > plo {
            rng.random_range(plo..phi)
        } else {
            plo
        }
    };
    let period = 1.0 / scenario.intra_burst_hz;
    let mut t = pause(rng);
    let mut bursts = Vec::with_capacity(scenario.burst_count);
    for b in 0..scenario.burst_count {
        if b > 0 {
            t += pause(rng);
        }
        let n = rng.random_range(lo..=hi);
        let times: Vec<f64> = (0..n).map(|i| t + i as f64 * period).collect();
        t = *times.last().expect("n >= 1");
        bursts.push(times);
    }
    let duration_s = t + pause(rng);
    Timeline { bursts, duration_s }
}

fn truth_from(tl: &Timeline, scenario: &Scenario) -> GroundTruth {
    let cycles_per_burst: Vec<usize> = tl.bursts.iter().map(Vec::len).collect();
    let total: usize = cycles_per_burst.iter().sum();
    let total_duration: f64 = tl.bursts.iter().map(|b| b.len() as f64 / scenario.intra_burst_hz).sum();
    GroundTruth {
        cycle_times: tl.bursts.iter().flatten().copied().collect(),
        burst_spans: tl
            .bursts
            .iter()
            .map(|b| (b[0], *b.last().expect("nonempty burst")))
            .collect(),
        cycles_per_burst,
        true_frequency_hz: if total_duration > 0.0 {
            total as f64 / total_duration
        } else {
            0.0
        },
        session_duration_s: tl.duration_s,
    }
}

/// Raised-cosine pulse of unit height centred at 0.
pub fn pulse(t: f64, width: f64) -> f64 {
    if t.abs() < width / 2.0 {
        0.5 * (1.0 + (2.0 * PI * t / width).cos())
    } else {
        0.0
    }
}

fn synth_samples(scenario: &Scenario) -> (Vec<f64>, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let tl = timeline(scenario, &mut rng);
    let truth = truth_from(&tl, scenario);
    let n = (tl.duration_s * scenario.sample_rate).ceil() as usize;
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    let noise = Normal::new(0.0, scenario.noise_sd).expect("validated noise_sd");
    let half = scenario.pulse_width_s / 2.0;
    let mut samples = Vec::with_capacity(n);
    let mut first = 0;
    let times = &truth.cycle_times;
    for i in 0..n {
        let t = i as f64 / scenario.sample_rate;
        while first < times.len() && times[first] < t - half {
            first += 1;
        }
        let mut v: f64 = times[first..]
            .iter()
            .take_while(|c| **c <= t + half)
            .map(|c| scenario.cycle_amplitude * pulse(t - c, scenario.pulse_width_s))
            .sum();
        v += scenario.drift_amplitude * (2.0 * PI * scenario.drift_hz * t + phase).sin();
        if scenario.noise_sd > 0.0 {
            v += noise.sample(&mut rng);
        }
        samples.push(v);
    }
    (samples, truth)
}

/// Raw jaw-tip vertical displacement signal with ground truth.
pub fn generate_signal(scenario: &Scenario) -> Result<(MovementSignal, GroundTruth)> {
    scenario.validate()?;
    let (samples, truth) = synth_samples(scenario);
    let signal = MovementSignal::uniform(
        JAW_TIP,
        DisplacementMode::Vertical,
        scenario.sample_rate,
        0.0,
        samples,
    );
    Ok((signal, truth))
}

/// Scripted head pose and image conditions for trajectory synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraMotion {
    /// Pixels per model unit.
    pub scale_px: f64,
    pub center_px: [f64; 2],
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    /// Sinusoidal rotation amplitudes added to the static angles.
    pub yaw_amplitude_deg: f64,
    pub pitch_amplitude_deg: f64,
    pub roll_amplitude_deg: f64,
    pub translation_amplitude_px: [f64; 2],
    pub motion_hz: f64,
    /// Gaussian noise on every 2D landmark coordinate.
    pub pixel_noise_px: f64,
    /// Probability that a frame loses all landmarks.
    pub drop_fraction: f64,
    /// Standard deviation of the fixed per-subject identity coefficients
    /// on the non-jaw components.
    pub identity_sd: f64,
}

impl Default for CameraMotion {
    fn default() -> Self {
        Self {
            scale_px: 150.0,
            center_px: [320.0, 240.0],
            yaw_deg: 0.0,
            pitch_deg: 0.0,
            roll_deg: 0.0,
            yaw_amplitude_deg: 0.0,
            pitch_amplitude_deg: 0.0,
            roll_amplitude_deg: 0.0,
            translation_amplitude_px: [0.0, 0.0],
            motion_hz: 0.05,
            pixel_noise_px: 0.0,
            drop_fraction: 0.0,
            identity_sd: 0.5,
        }
    }
}

impl CameraMotion {
    /// A slow nodding/turning head with some camera shake.
    pub fn moving_head() -> Self {
        Self {
            yaw_deg: 10.0,
            yaw_amplitude_deg: 25.0,
            pitch_amplitude_deg: 10.0,
            roll_amplitude_deg: 8.0,
            translation_amplitude_px: [30.0, 15.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_px > 0.0 && self.scale_px.is_finite()) {
            return Err(Error::param("scale_px", "must be positive"));
        }
        if !(self.pixel_noise_px >= 0.0) {
            return Err(Error::param("pixel_noise_px", "must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return Err(Error::param("drop_fraction", "must be in [0, 1)"));
        }
        if !(self.identity_sd >= 0.0) {
            return Err(Error::param("identity_sd", "must be nonnegative"));
        }
        Ok(())
    }

    /// Camera at time `t`.
    pub fn camera_at(&self, t: f64) -> AffineCamera {
        let wave = (2.0 * PI * self.motion_hz * t).sin();
        let wave2 = (2.0 * PI * self.motion_hz * t * 0.7 + 1.0).sin();
        let yaw = (self.yaw_deg + self.yaw_amplitude_deg * wave).to_radians();
        let pitch = (self.pitch_deg + self.pitch_amplitude_deg * wave2).to_radians();
        let roll = (self.roll_deg + self.roll_amplitude_deg * wave).to_radians();
        let rot = rotation(yaw, pitch, roll);
        let s = self.scale_px;
        let tx = self.center_px[0] + self.translation_amplitude_px[0] * wave2;
        let ty = self.center_px[1] + self.translation_amplitude_px[1] * wave;
        // Image y grows downward.
        AffineCamera::from_rows(
            [s * rot[0][0], s * rot[0][1], s * rot[0][2], tx],
            [-s * rot[1][0], -s * rot[1][1], -s * rot[1][2], ty],
        )
        .expect("scaled rotation rows have rank 2")
    }
}

/// Rz(roll) · Rx(pitch) · Ry(yaw).
fn rotation(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
    let rz = [[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]];
    let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        m
    };
    mul(rz, mul(rx, ry))
}

/// The component that moves the jaw tip most in the vertical direction.
pub fn jaw_component(model: &ShapeModel) -> usize {
    (0..model.num_components())
        .max_by(|&a, &b| {
            let va = model.landmark_basis(JAW_TIP, a)[1].abs();
            let vb = model.landmark_basis(JAW_TIP, b)[1].abs();
            va.total_cmp(&vb).then(b.cmp(&a))
        })
        .expect("model has components")
}

/// Shape coefficients that put the jaw tip `displacement` model units above
/// its identity position, on top of fixed identity coefficients.
pub fn jaw_coefficients(model: &ShapeModel, identity: &[f64], displacement: f64) -> ShapeCoefficients {
    let k = jaw_component(model);
    let per_unit = model.landmark_basis(JAW_TIP, k)[1];
    let mut alpha = identity.to_vec();
    alpha[k] = displacement / per_unit;
    alpha.into()
}

/// Per-frame synthetic state, exposed for oracles.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub camera: AffineCamera,
    pub coefficients: ShapeCoefficients,
    pub jaw_displacement: f64,
    pub dropped: bool,
}

/// Full 2D trajectory session rendered from the scenario's jaw signal.
pub fn generate_trajectory(
    scenario: &Scenario,
    model: &ShapeModel,
    motion: &CameraMotion,
) -> Result<(TrajectorySession, GroundTruth)> {
    generate_trajectory_detailed(scenario, model, motion).map(|(s, t, _)| (s, t))
}

pub fn generate_trajectory_detailed(
    scenario: &Scenario,
    model: &ShapeModel,
    motion: &CameraMotion,
) -> Result<(TrajectorySession, GroundTruth, Vec<RenderedFrame>)> {
    scenario.validate()?;
    motion.validate()?;
    let (samples, truth) = synth_samples(scenario);
    // Separate stream so image conditions do not perturb the signal.
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x9e37_79b9_7f4a_7c15);
    let jaw = jaw_component(model);
    let id_noise = Normal::new(0.0, motion.identity_sd.max(0.0)).expect("valid sd");
    let identity: Vec<f64> = (0..model.num_components())
        .map(|k| {
            if k == jaw || motion.identity_sd == 0.0 {
                0.0
            } else {
                id_noise.sample(&mut rng)
            }
        })
        .collect();
    let pix = Normal::new(0.0, motion.pixel_noise_px).expect("validated pixel noise");

    let mut frames = Vec::with_capacity(samples.len());
    let mut rendered = Vec::with_capacity(samples.len());
    for (i, &d) in samples.iter().enumerate() {
        let t = i as f64 / scenario.sample_rate;
        let camera = motion.camera_at(t);
        let coefficients = jaw_coefficients(model, &identity, d);
        let dropped = motion.drop_fraction > 0.0 && rng.random::<f64>() < motion.drop_fraction;
        let frame = if dropped {
            LandmarkFrame::empty(i as u64, t)
        } else {
            let shape = model.synthesize_shape(&coefficients)?;
            let mut points = project(&camera, &shape);
            if motion.pixel_noise_px > 0.0 {
                for p in points.iter_mut() {
                    p[0] += pix.sample(&mut rng);
                    p[1] += pix.sample(&mut rng);
                }
            }
            LandmarkFrame::complete(i as u64, t, points)
        };
        frames.push(frame);
        rendered.push(RenderedFrame {
            camera,
            coefficients,
            jaw_displacement: d,
            dropped,
        });
    }
    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("generator".to_owned(), "nns synth".to_owned());
    metadata.insert("seed".to_owned(), scenario.seed.to_string());
    let session = TrajectorySession {
        source_id: format!("synth-{}", scenario.seed),
        sample_rate_hint: scenario.sample_rate,
        frames,
        metadata,
    };
    debug_assert!(session.frames.iter().all(|f| f.points2d.len() == LANDMARK_COUNT));
    Ok((session, truth, rendered))
}

/// Greedy one-to-one matching of detected to true cycle times, closest pairs
/// first, within ±[`MATCH_WINDOW_S`].
pub fn match_cycles(detected: &[f64], truth: &[f64]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &d) in detected.iter().enumerate() {
        let lo = truth.partition_point(|t| *t < d - MATCH_WINDOW_S);
        for (j, &t) in truth.iter().enumerate().skip(lo) {
            if t > d + MATCH_WINDOW_S {
                break;
            }
            pairs.push(((d - t).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detected.len()];
    let mut used_t = vec![false; truth.len()];
    let mut matches = Vec::new();
    for (_, i, j) in pairs {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            matches.push((i, j));
        }
    }
    matches
}

/// Scores every detected cycle in `report` against the truth. An empty
/// detection has precision 1 (no false positives); an empty truth has recall 1.
pub fn score_detection(report: &NNSReport, truth: &GroundTruth) -> DetectionScore {
    let detected: Vec<f64> = report.cycles.iter().map(|c| c.time).collect();
    let matched = match_cycles(&detected, &truth.cycle_times).len();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    DetectionScore {
        cycle_recall: ratio(matched, truth.cycle_times.len()),
        cycle_precision: ratio(matched, detected.len()),
        matched_cycles: matched,
        detected_cycles: detected.len(),
        truth_cycles: truth.cycle_times.len(),
        burst_count_error: report.bursts.len() as i64 - truth.burst_spans.len() as i64,
        frequency_error_hz: report
            .mean_frequency_hz
            .map(|f| (f - truth.true_frequency_hz).abs()),
    }
}
