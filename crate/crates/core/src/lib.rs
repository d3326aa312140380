//! Contact-less non-nutritive sucking (NNS) quantification.
//!
//! The crate turns per-frame 2D facial landmark trajectories into suck-cycle
//! and burst statistics:
//!
//! 1. **Shape model** – PCA face model; landmarks are synthesized from shape
//!    coefficients ([`shape_model`]).
//! 2. **Fitting** – per frame, an affine camera and shape coefficients are
//!    estimated alternately; the coefficients give head-pose-free landmarks
//!    ([`camera_fit`]).
//! 3. **Signal** – a landmark's displacement from its first-frame position,
//!    bandpass filtered with a zero-phase Butterworth ([`signal`]).
//! 4. **Quantification** – peaks above the mean displacement are suck cycles;
//!    runs of closely spaced cycles are bursts ([`quant`]).
//!
//! [`synth`] generates sessions with known ground truth and scores detection
//! against it. [`io`] holds the file formats and [`pipeline`] composes the
//! stages. Batch paths run on rayon when the `parallel` feature is enabled.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod camera_fit;
pub mod error;
pub mod io;
pub mod layout;
pub mod par;
pub mod pipeline;
pub mod quant;
pub mod shape_model;
pub mod signal;
pub mod synth;

pub use camera_fit::{
    estimate_affine_camera, fit_frame, fit_session, fit_shape_coefficients, project, AffineCamera,
    FitConfig, FrameFit, FrameOutcome, LandmarkFrame,
};
pub use error::{Error, PipelineError, Result, Stage};
pub use io::TrajectorySession;
pub use layout::{JAW_TIP, LANDMARK_COUNT};
pub use par::Execution;
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use quant::{
    detect_cycles, quantify, segment_bursts, Burst, CycleEvent, NNSReport, QuantParams,
    Segmentation, ThresholdMode,
};
pub use shape_model::{load_shape_model, Landmarks3D, ShapeCoefficients, ShapeModel};
pub use signal::{
    apply_bandpass, design_bandpass, displacement_signal, DisplacementMode, FilterKernel,
    FilterSpec, GapPolicy, MovementSignal, SignalStage,
};
pub use synth::{
    generate_signal, generate_trajectory, score_detection, CameraMotion, DetectionScore,
    GroundTruth, Scenario,
};
