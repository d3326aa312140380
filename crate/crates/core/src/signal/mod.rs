//! Landmark movement signals.
//!
//! A movement signal is the distance between a landmark's frontalized
//! position in each frame and its position in the first fitted frame.

mod filter;

pub use filter::{apply_bandpass, design_bandpass, Biquad, FilterKernel, FilterSpec};

use serde::{Deserialize, Serialize};

use crate::camera_fit::FrameOutcome;
use crate::error::{Error, Result};
use crate::layout::LANDMARK_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplacementMode {
    /// 3D distance from the initial position, always nonnegative.
    #[default]
    Euclidean,
    /// Signed x displacement.
    Horizontal,
    /// Signed y displacement.
    Vertical,
}

impl DisplacementMode {
    pub fn name(self) -> &'static str {
        match self {
            DisplacementMode::Euclidean => "euclidean",
            DisplacementMode::Horizontal => "horizontal",
            DisplacementMode::Vertical => "vertical",
        }
    }

    fn measure(self, from: [f64; 3], to: [f64; 3]) -> f64 {
        let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
        match self {
            DisplacementMode::Euclidean => (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt(),
            DisplacementMode::Horizontal => d[0],
            DisplacementMode::Vertical => d[1],
        }
    }
}

impl std::str::FromStr for DisplacementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "horizontal" => Ok(Self::Horizontal),
            "vertical" => Ok(Self::Vertical),
            other => Err(Error::param(
                "mode",
                format!("expected euclidean, horizontal or vertical, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalStage {
    Raw,
    Filtered,
}

impl SignalStage {
    pub fn name(self) -> &'static str {
        match self {
            SignalStage::Raw => "raw",
            SignalStage::Filtered => "filtered",
        }
    }
}

/// One landmark's displacement time series, in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementSignal {
    pub landmark_id: usize,
    pub mode: DisplacementMode,
    pub sample_rate: f64,
    pub samples: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub stage: SignalStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_spec: Option<FilterSpec>,
    /// True where the sample was interpolated across an unfittable frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interpolated: Vec<bool>,
}

impl MovementSignal {
    /// A raw signal on a uniform grid starting at `t0`.
    pub fn uniform(
        landmark_id: usize,
        mode: DisplacementMode,
        sample_rate: f64,
        t0: f64,
        samples: Vec<f64>,
    ) -> Self {
        let timestamps = (0..samples.len())
            .map(|i| t0 + i as f64 / sample_rate)
            .collect();
        Self {
            landmark_id,
            mode,
            sample_rate,
            samples,
            timestamps,
            stage: SignalStage::Raw,
            filter_spec: None,
            interpolated: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != self.timestamps.len() {
            return Err(Error::Dimension {
                what: "timestamps",
                expected: self.samples.len(),
                found: self.timestamps.len(),
            });
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        if self.landmark_id >= LANDMARK_COUNT {
            return Err(Error::param("landmark_id", "must be in 0..68"));
        }
        if self.timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Ordering("signal timestamps must increase".into()));
        }
        Ok(())
    }

    /// Time covered by the samples, counting one sample period per sample.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Gap handling for frames that could not be fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapPolicy {
    /// Gaps between fitted frames up to this long are linearly interpolated;
    /// longer gaps start a new segment.
    pub max_interpolated_gap_s: f64,
    /// Relative frame-interval deviation above which frames are resampled
    /// onto a uniform grid.
    pub jitter_tolerance: f64,
}

impl Default for GapPolicy {
    fn default() -> Self {
        Self {
            max_interpolated_gap_s: 0.5,
            jitter_tolerance: 0.01,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Frame rate implied by timestamps: reciprocal of the median interval.
pub fn estimate_frame_rate(timestamps: &[f64]) -> Option<f64> {
    if timestamps.len() < 2 {
        return None;
    }
    let dt = median(timestamps.windows(2).map(|w| w[1] - w[0]).collect());
    (dt > 0.0).then(|| 1.0 / dt)
}

/// Builds the displacement signal of `landmark_id` from a fitted session.
///
/// The first fitted frame is the reference position. Unfittable frames are
/// filled by linear interpolation of landmark positions when the surrounding
/// fitted frames are at most `gaps.max_interpolated_gap_s` apart; longer gaps
/// split the session into independent segments, returned in time order.
/// Sessions whose frame intervals deviate from uniform by more than
/// `gaps.jitter_tolerance` are resampled at the median frame rate.
pub fn displacement_signal(
    outcomes: &[FrameOutcome],
    landmark_id: usize,
    mode: DisplacementMode,
    gaps: &GapPolicy,
) -> Result<Vec<MovementSignal>> {
    if landmark_id >= LANDMARK_COUNT {
        return Err(Error::param(
            "landmark_id",
            format!("{landmark_id} is outside 0..68"),
        ));
    }
    let times: Vec<f64> = outcomes.iter().map(FrameOutcome::timestamp).collect();
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Ordering("frame timestamps must increase".into()));
    }
    let fitted: Vec<(f64, [f64; 3])> = outcomes
        .iter()
        .filter_map(|o| o.fit())
        .map(|f| (f.timestamp, f.frontalized.points[landmark_id]))
        .collect();
    match fitted.len() {
        0 => return Err(Error::EmptySession),
        1 => return Err(Error::Length { needed: 2, found: 1 }),
        _ => {}
    }
    let rate = estimate_frame_rate(&times).expect("at least two frames");
    let period = 1.0 / rate;
    let reference = fitted[0].1;

    let mut segments: Vec<&[(f64, [f64; 3])]> = Vec::new();
    let mut start = 0;
    for i in 1..fitted.len() {
        if fitted[i].0 - fitted[i - 1].0 > gaps.max_interpolated_gap_s + 1e-9 {
            segments.push(&fitted[start..i]);
            start = i;
        }
    }
    segments.push(&fitted[start..]);

    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        let (t_first, t_last) = (seg[0].0, seg[seg.len() - 1].0);
        let frame_times: Vec<f64> = times
            .iter()
            .copied()
            .filter(|t| *t >= t_first && *t <= t_last)
            .collect();
        let uniform = frame_times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - period).abs() <= gaps.jitter_tolerance * period);
        let grid: Vec<f64> = if uniform {
            frame_times
        } else {
            let n = ((t_last - t_first) * rate + 1e-6).floor() as usize;
            (0..=n).map(|k| t_first + k as f64 * period).collect()
        };

        let mut samples = Vec::with_capacity(grid.len());
        let mut interpolated = Vec::with_capacity(grid.len());
        let mut j = 0;
        for &t in &grid {
            while j + 1 < seg.len() && seg[j + 1].0 <= t {
                j += 1;
            }
            let (ta, pa) = seg[j];
            let (pos, exact) = if (t - ta).abs() <= 1e-9 || j + 1 == seg.len() {
                (pa, (t - ta).abs() <= 1e-9)
            } else {
                let (tb, pb) = seg[j + 1];
                let u = (t - ta) / (tb - ta);
                (
                    [
                        pa[0] + u * (pb[0] - pa[0]),
                        pa[1] + u * (pb[1] - pa[1]),
                        pa[2] + u * (pb[2] - pa[2]),
                    ],
                    false,
                )
            };
            samples.push(mode.measure(reference, pos));
            interpolated.push(!exact);
        }
        let any_interp = interpolated.iter().any(|v| *v);
        out.push(MovementSignal {
            landmark_id,
            mode,
            sample_rate: rate,
            samples,
            timestamps: grid,
            stage: SignalStage::Raw,
            filter_spec: None,
            interpolated: if any_interp { interpolated } else { Vec::new() },
        });
    }
    Ok(out)
}
