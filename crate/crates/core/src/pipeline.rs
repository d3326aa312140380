//! End-to-end composition: fit → displacement → bandpass → quantify.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera_fit::{fit_session, FitConfig, FrameOutcome};
use crate::error::{Error, PipelineError, Result, Stage, StageExt};
use crate::io::{self, FitsDocument, SignalDocument, TrajectorySession};
use crate::layout::{JAW_TIP, LANDMARK_COUNT};
use crate::par::{self, Execution};
use crate::quant::{quantify_segments, NNSReport, QuantParams, MODEL_UNITS};
use crate::shape_model::{load_shape_model, ShapeModel};
use crate::signal::{
    apply_bandpass, design_bandpass, displacement_signal, estimate_frame_rate, DisplacementMode,
    FilterSpec, GapPolicy, MovementSignal,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fit: FitConfig,
    pub landmark: usize,
    pub mode: DisplacementMode,
    pub filter: FilterSpec,
    pub quant: QuantParams,
    pub gaps: GapPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            landmark: JAW_TIP,
            mode: DisplacementMode::Euclidean,
            filter: FilterSpec::default(),
            quant: QuantParams::default(),
            gaps: GapPolicy::default(),
        }
    }
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub fits: Vec<FrameOutcome>,
    pub raw: Vec<MovementSignal>,
    pub filtered: Vec<MovementSignal>,
    /// Segments too short to filter; they contribute no cycles.
    pub skipped_segments: usize,
    pub report: NNSReport,
}

/// Filtered segments and the report for already-extracted raw segments.
#[derive(Debug, Clone)]
pub struct SignalAnalysis {
    pub filtered: Vec<MovementSignal>,
    pub skipped_segments: usize,
    pub report: NNSReport,
}

/// Session length covered by `timestamps` at `rate`, one frame period per frame.
pub fn session_duration(timestamps: &[f64], rate: f64) -> f64 {
    match (timestamps.first(), timestamps.last()) {
        (Some(a), Some(b)) => b - a + 1.0 / rate,
        _ => 0.0,
    }
}

/// Filters every long-enough raw segment and quantifies the result.
pub fn analyze_segments(
    raw: &[MovementSignal],
    filter: &FilterSpec,
    quant: &QuantParams,
    session_duration_s: f64,
) -> std::result::Result<SignalAnalysis, PipelineError> {
    quant.validate().stage(Stage::Quantify)?;
    let mut filtered = Vec::with_capacity(raw.len());
    let mut skipped = 0;
    for seg in raw {
        let kernel = design_bandpass(filter, seg.sample_rate).stage(Stage::Filter)?;
        if seg.len() <= kernel.pad_length() {
            skipped += 1;
            continue;
        }
        filtered.push(apply_bandpass(seg, &kernel).stage(Stage::Filter)?);
    }
    if filtered.is_empty() {
        let longest = raw.iter().map(MovementSignal::len).max().unwrap_or(0);
        return Err(PipelineError {
            stage: Stage::Filter,
            source: Error::Length {
                needed: 3 * (filter.order + 1),
                found: longest,
            },
        });
    }
    let report = quantify_segments(&filtered, quant, session_duration_s).stage(Stage::Quantify)?;
    Ok(SignalAnalysis {
        filtered,
        skipped_segments: skipped,
        report,
    })
}

/// Raw displacement segments for a fitted session.
pub fn extract_signal(
    fits: &[FrameOutcome],
    config: &PipelineConfig,
) -> std::result::Result<Vec<MovementSignal>, PipelineError> {
    displacement_signal(fits, config.landmark, config.mode, &config.gaps).stage(Stage::Signal)
}

/// Session duration of fitted (or unfittable) frames, falling back to
/// `rate_hint` when the timestamps cannot give a frame rate.
pub fn fits_duration(fits: &[FrameOutcome], rate_hint: f64) -> f64 {
    let times: Vec<f64> = fits.iter().map(FrameOutcome::timestamp).collect();
    let rate = estimate_frame_rate(&times).unwrap_or(rate_hint);
    session_duration(&times, rate)
}

/// Signal extraction, filtering and quantification on existing fits.
pub fn analyze_fits(
    fits: &[FrameOutcome],
    config: &PipelineConfig,
    rate_hint: f64,
) -> std::result::Result<(Vec<MovementSignal>, SignalAnalysis), PipelineError> {
    validate_config(config)?;
    let raw = extract_signal(fits, config)?;
    let analysis = analyze_segments(&raw, &config.filter, &config.quant, fits_duration(fits, rate_hint))?;
    Ok((raw, analysis))
}

fn validate_config(config: &PipelineConfig) -> std::result::Result<(), PipelineError> {
    config.fit.validate().stage(Stage::Fit)?;
    if config.landmark >= LANDMARK_COUNT {
        return Err(PipelineError {
            stage: Stage::Signal,
            source: Error::InvalidParameter {
                name: "landmark",
                message: format!("{} is outside 0..68", config.landmark),
            },
        });
    }
    config.quant.validate().stage(Stage::Quantify)
}

/// Runs the full pipeline on an in-memory session.
pub fn run_pipeline(
    session: &TrajectorySession,
    model: &ShapeModel,
    config: &PipelineConfig,
    exec: Execution,
) -> std::result::Result<PipelineOutput, PipelineError> {
    validate_config(config)?;
    session.validate().stage(Stage::Load)?;
    let fits = fit_session(model, &session.frames, &config.fit, exec).stage(Stage::Fit)?;
    if fits.iter().all(|f| f.fit().is_none()) {
        return Err(PipelineError {
            stage: Stage::Fit,
            source: Error::EmptySession,
        });
    }
    let (raw, analysis) = analyze_fits(&fits, config, session.sample_rate_hint)?;
    Ok(PipelineOutput {
        fits,
        raw,
        filtered: analysis.filtered,
        skipped_segments: analysis.skipped_segments,
        report: analysis.report,
    })
}

/// Paths written by [`run_pipeline_paths`].
#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub fits: PathBuf,
    pub signal: PathBuf,
    pub report: PathBuf,
}

impl PipelineArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            fits: dir.join("fits.json"),
            signal: dir.join("signal.json"),
            report: dir.join("report.json"),
        }
    }
}

pub fn fits_document(source_id: &str, model: &ShapeModel, fits: &[FrameOutcome]) -> FitsDocument {
    FitsDocument {
        units: MODEL_UNITS.to_owned(),
        source_id: source_id.to_owned(),
        num_components: model.num_components(),
        frames: fits.to_vec(),
    }
}

/// Loads inputs from disk, runs the pipeline and writes fits, signal and
/// report artifacts into `out_dir`.
pub fn run_pipeline_paths(
    trajectory_path: &Path,
    model_path: &Path,
    config: &PipelineConfig,
    out_dir: &Path,
    exec: Execution,
) -> std::result::Result<(PipelineOutput, PipelineArtifacts), PipelineError> {
    let session = io::parse_trajectory(trajectory_path).stage(Stage::Load)?;
    let model = load_shape_model(model_path).stage(Stage::Load)?;
    let output = run_pipeline(&session, &model, config, exec)?;
    let artifacts = PipelineArtifacts::in_dir(out_dir);
    write_artifacts(&session.source_id, &model, &output, &artifacts).stage(Stage::Write)?;
    Ok((output, artifacts))
}

fn write_artifacts(
    source_id: &str,
    model: &ShapeModel,
    output: &PipelineOutput,
    artifacts: &PipelineArtifacts,
) -> Result<()> {
    if let Some(dir) = artifacts.report.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(
        &artifacts.fits,
        io::fits_to_string(&fits_document(source_id, model, &output.fits)),
    )?;
    let mut segments = output.raw.clone();
    segments.extend(output.filtered.iter().cloned());
    std::fs::write(
        &artifacts.signal,
        io::signal_to_string(&SignalDocument {
            units: MODEL_UNITS.to_owned(),
            session_duration_s: Some(output.report.session_duration_s),
            segments,
        }),
    )?;
    io::write_report(&output.report, &artifacts.report)
}

/// Runs independent sessions, one result per input in input order.
pub fn run_batch(
    sessions: &[TrajectorySession],
    model: &ShapeModel,
    config: &PipelineConfig,
    exec: Execution,
) -> Vec<std::result::Result<PipelineOutput, PipelineError>> {
    // Sessions fan out; frames inside each session are fitted sequentially.
    par::map_collect(sessions, exec, |s| {
        run_pipeline(s, model, config, Execution::Sequential)
    })
}
