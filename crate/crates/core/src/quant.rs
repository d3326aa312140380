//! Suck-cycle and burst detection on filtered movement signals.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{DisplacementMode, FilterSpec, MovementSignal, SignalStage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Mean of |samples|.
    #[default]
    MeanAbs,
    /// Mean of samples.
    MeanRaw,
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_abs" => Ok(Self::MeanAbs),
            "mean_raw" => Ok(Self::MeanRaw),
            other => Err(Error::param(
                "threshold_mode",
                format!("expected mean_abs or mean_raw, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantParams {
    pub min_peak_distance_s: f64,
    pub max_intra_burst_gap_s: f64,
    pub min_cycles_per_burst: usize,
    pub threshold_mode: ThresholdMode,
}

impl Default for QuantParams {
    fn default() -> Self {
        Self {
            min_peak_distance_s: 0.2,
            max_intra_burst_gap_s: 1.5,
            min_cycles_per_burst: 6,
            threshold_mode: ThresholdMode::MeanAbs,
        }
    }
}

impl QuantParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_peak_distance_s > 0.0 && self.min_peak_distance_s.is_finite()) {
            return Err(Error::param("min_peak_distance_s", "must be positive"));
        }
        if !(self.max_intra_burst_gap_s > 0.0 && self.max_intra_burst_gap_s.is_finite()) {
            return Err(Error::param("max_intra_burst_gap_s", "must be positive"));
        }
        if self.min_cycles_per_burst < 1 {
            return Err(Error::param("min_cycles_per_burst", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleEvent {
    pub time: f64,
    pub amplitude: f64,
    pub index: usize,
}

/// A run of cycles with no inter-cycle gap above the burst gap limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub cycles: Vec<CycleEvent>,
    /// Time of the first cycle.
    pub start_time: f64,
    /// Time of the last cycle.
    pub end_time: f64,
    /// `n` cycle periods: (end − start) · n / (n − 1); zero for a lone cycle.
    pub duration_s: f64,
}

impl Burst {
    pub fn from_cycles(cycles: Vec<CycleEvent>) -> Self {
        let n = cycles.len();
        assert!(n > 0, "a burst needs at least one cycle");
        let start_time = cycles[0].time;
        let end_time = cycles[n - 1].time;
        let duration_s = if n > 1 {
            (end_time - start_time) * n as f64 / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            cycles,
            start_time,
            end_time,
            duration_s,
        }
    }

    pub fn cycle_count(&self) -> usize {
        self.cycles.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub bursts: Vec<Burst>,
    /// Runs shorter than the minimum burst length.
    pub fragments: Vec<Burst>,
}

/// Detection threshold for `samples` under `mode`.
pub fn threshold(samples: &[f64], mode: ThresholdMode) -> f64 {
    let n = samples.len() as f64;
    match mode {
        ThresholdMode::MeanAbs => samples.iter().map(|v| v.abs()).sum::<f64>() / n,
        ThresholdMode::MeanRaw => samples.iter().sum::<f64>() / n,
    }
}

/// Local maxima, excluding the endpoints. A flat top counts once, at its
/// middle sample (rounded down).
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                peaks.push((i + j) / 2);
                i = j + 1;
                continue;
            }
            i = j;
        }
        i += 1;
    }
    peaks
}

/// Minimum peak separation in samples for `min_distance_s` at `sample_rate`.
pub fn min_separation(min_distance_s: f64, sample_rate: f64) -> usize {
    ((min_distance_s * sample_rate) - 1e-9).ceil().max(1.0) as usize
}

/// Keeps the highest peaks first, dropping any peak closer than `min_sep`
/// samples to one already kept. Ties go to the earlier sample.
pub fn enforce_spacing(x: &[f64], candidates: &[usize], min_sep: usize) -> Vec<usize> {
    if min_sep <= 1 {
        return candidates.to_vec();
    }
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept = BTreeSet::new();
    for idx in order {
        let lo = idx.saturating_sub(min_sep - 1);
        let hi = idx + min_sep - 1;
        if kept.range(lo..=hi).next().is_none() {
            kept.insert(idx);
        }
    }
    kept.into_iter().collect()
}

/// Suck cycles: local maxima above the mean-displacement threshold, at least
/// `min_peak_distance_s` apart.
pub fn detect_cycles(signal: &MovementSignal, params: &QuantParams) -> Result<Vec<CycleEvent>> {
    params.validate()?;
    if signal.stage != SignalStage::Filtered {
        return Err(Error::Stage {
            expected: "filtered",
            found: signal.stage.name(),
        });
    }
    signal.validate()?;
    let x = &signal.samples;
    if x.len() < 3 {
        return Err(Error::Length {
            needed: 2,
            found: x.len(),
        });
    }
    let thr = threshold(x, params.threshold_mode);
    let candidates: Vec<usize> = local_maxima(x).into_iter().filter(|&i| x[i] > thr).collect();
    let sep = min_separation(params.min_peak_distance_s, signal.sample_rate);
    Ok(enforce_spacing(x, &candidates, sep)
        .into_iter()
        .map(|index| CycleEvent {
            time: signal.timestamps[index],
            amplitude: x[index],
            index,
        })
        .collect())
}

/// Slack on the burst gap limit so gaps of an exact whole number of frame
/// periods do not flip with timestamp rounding.
pub const GAP_TOLERANCE_S: f64 = 1e-9;

/// Splits a time-sorted cycle list at every gap above the burst gap limit.
pub fn segment_bursts(cycles: &[CycleEvent], params: &QuantParams) -> Segmentation {
    let mut seg = Segmentation::default();
    let mut push = |run: &[CycleEvent]| {
        if run.is_empty() {
            return;
        }
        let burst = Burst::from_cycles(run.to_vec());
        if run.len() >= params.min_cycles_per_burst {
            seg.bursts.push(burst);
        } else {
            seg.fragments.push(burst);
        }
    };
    let mut start = 0;
    for i in 1..cycles.len() {
        if cycles[i].time - cycles[i - 1].time > params.max_intra_burst_gap_s + GAP_TOLERANCE_S {
            push(&cycles[start..i]);
            start = i;
        }
    }
    push(&cycles[start..]);
    seg
}

/// Settings echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParameters {
    pub landmark_id: usize,
    pub mode: DisplacementMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSpec>,
    pub quant: QuantParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NNSReport {
    pub units: String,
    /// Every detected cycle, in and out of bursts.
    pub cycles: Vec<CycleEvent>,
    pub bursts: Vec<Burst>,
    pub fragments: Vec<Burst>,
    pub cycles_per_burst: Vec<usize>,
    pub burst_durations_s: Vec<f64>,
    pub bursts_per_minute: f64,
    pub cycles_per_minute: f64,
    /// In-burst cycles over total burst duration; `None` when undefined.
    pub mean_frequency_hz: Option<f64>,
    pub mean_cycle_amplitude: Option<f64>,
    pub session_duration_s: f64,
    pub parameters: ReportParameters,
}

pub const MODEL_UNITS: &str = "model_units";

impl NNSReport {
    pub fn burst_count(&self) -> usize {
        self.bursts.len()
    }

    pub fn in_burst_cycles(&self) -> usize {
        self.cycles_per_burst.iter().sum()
    }
}

/// Builds the dynamics report from detected cycles and their segmentation.
pub fn quantify(
    signal: &MovementSignal,
    cycles: &[CycleEvent],
    segmentation: &Segmentation,
    session_duration_s: f64,
    params: &QuantParams,
) -> Result<NNSReport> {
    let parameters = ReportParameters {
        landmark_id: signal.landmark_id,
        mode: signal.mode,
        filter: signal.filter_spec,
        quant: *params,
    };
    build_report(cycles.to_vec(), segmentation.clone(), session_duration_s, parameters)
}

fn build_report(
    cycles: Vec<CycleEvent>,
    segmentation: Segmentation,
    session_duration_s: f64,
    parameters: ReportParameters,
) -> Result<NNSReport> {
    if !(session_duration_s > 0.0 && session_duration_s.is_finite()) {
        return Err(Error::param(
            "session_duration_s",
            format!("must be positive, got {session_duration_s}"),
        ));
    }
    let Segmentation { bursts, fragments } = segmentation;
    let cycles_per_burst: Vec<usize> = bursts.iter().map(Burst::cycle_count).collect();
    let burst_durations_s: Vec<f64> = bursts.iter().map(|b| b.duration_s).collect();
    let total_cycles: usize = cycles_per_burst.iter().sum();
    let total_duration: f64 = burst_durations_s.iter().sum();
    let mean_frequency_hz = (total_duration > 0.0).then(|| total_cycles as f64 / total_duration);
    let mean_cycle_amplitude = (total_cycles > 0).then(|| {
        bursts
            .iter()
            .flat_map(|b| b.cycles.iter().map(|c| c.amplitude))
            .sum::<f64>()
            / total_cycles as f64
    });
    Ok(NNSReport {
        units: MODEL_UNITS.to_owned(),
        cycles,
        bursts_per_minute: 60.0 * bursts.len() as f64 / session_duration_s,
        cycles_per_minute: 60.0 * total_cycles as f64 / session_duration_s,
        bursts,
        fragments,
        cycles_per_burst,
        burst_durations_s,
        mean_frequency_hz,
        mean_cycle_amplitude,
        session_duration_s,
        parameters,
    })
}

/// Detects and segments each filtered segment independently, then reports
/// over the whole session. Bursts never span segment boundaries.
pub fn quantify_segments(
    segments: &[MovementSignal],
    params: &QuantParams,
    session_duration_s: f64,
) -> Result<NNSReport> {
    params.validate()?;
    let first = segments
        .first()
        .ok_or_else(|| Error::param("segments", "no filtered segments to quantify"))?;
    let mut cycles = Vec::new();
    let mut seg = Segmentation::default();
    for s in segments {
        let c = detect_cycles(s, params)?;
        let part = segment_bursts(&c, params);
        cycles.extend(c);
        seg.bursts.extend(part.bursts);
        seg.fragments.extend(part.fragments);
    }
    let parameters = ReportParameters {
        landmark_id: first.landmark_id,
        mode: first.mode,
        filter: first.filter_spec,
        quant: *params,
    };
    build_report(cycles, seg, session_duration_s, parameters)
}
