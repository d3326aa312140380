use std::collections::BTreeMap;
use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nns_core::io::{self, SignalDocument};
use nns_core::pipeline::{
    extract_signal, fits_document, fits_duration, run_pipeline_paths,
    PipelineConfig,
};
use nns_core::quant::MODEL_UNITS;
use nns_core::synth::generate_trajectory;
use nns_core::{
    apply_bandpass, design_bandpass, fit_session, generate_signal, load_shape_model,
    score_detection, CameraMotion, DisplacementMode, Execution, FilterSpec, FitConfig,
    PipelineError, QuantParams, Scenario, ShapeModel, SignalStage, Stage, ThresholdMode,
};

#[derive(Parser)]
#[command(name = "nns", version, about = "Non-nutritive sucking quantification from facial landmark trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the shape model to every frame and write frontalized landmarks.
    Fit {
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        fit: FitArgs,
        /// Output fits document.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Build raw and filtered displacement signals from a fits document.
    Signal {
        #[arg(long)]
        fits: PathBuf,
        #[command(flatten)]
        signal: SignalArgs,
        #[command(flatten)]
        filter: FilterArgs,
        /// Write only the raw signal.
        #[arg(long)]
        raw_only: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Detect cycles and bursts in the filtered segments of a signal document.
    Quantify {
        #[arg(long)]
        signal: PathBuf,
        #[command(flatten)]
        quant: QuantArgs,
        /// Used only when the document holds raw segments alone.
        #[command(flatten)]
        filter: FilterArgs,
        /// Session length in seconds; defaults to the value stored in the
        /// signal document, else the span of its segments.
        #[arg(long)]
        session_duration: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Generate a synthetic session with ground truth.
    Synth {
        /// Scenario document (JSON with Scenario fields); flags override it.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise_sd: Option<f64>,
        #[arg(long)]
        bursts: Option<usize>,
        /// What to synthesize.
        #[arg(long, value_enum, default_value_t = SynthLevel::Trajectory)]
        level: SynthLevel,
        /// Head motion: `static`, `moving`, or a JSON file of CameraMotion fields.
        #[arg(long, default_value = "static")]
        motion: String,
        #[arg(long)]
        pixel_noise: Option<f64>,
        #[arg(long)]
        drop_fraction: Option<f64>,
        #[command(flatten)]
        model: ModelArg,
        /// Directory for trajectory.csv or signal.json, plus truth.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a report against synthetic ground truth.
    Score {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write the score here; it is always printed.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline: fits.json, signal.json and report.json.
    Run {
        /// One or more trajectory files. With several, each gets its own
        /// subdirectory of --out-dir named after the file.
        #[arg(long, required = true, num_args = 1..)]
        trajectory: Vec<PathBuf>,
        #[command(flatten)]
        model: ModelArg,
        /// Pipeline configuration document; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        signal: SignalArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        quant: QuantArgs,
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Start the HTTP analysis service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Where sessions are stored.
        #[arg(long, default_value = "nns-work")]
        workdir: PathBuf,
        /// Extra models as NAME=PATH; `fixture` is always available.
        #[arg(long = "model", value_name = "NAME=PATH")]
        models: Vec<String>,
    },
    /// Write a deterministic synthetic shape model.
    ModelFixture {
        #[arg(long, default_value_t = 100)]
        vertices: usize,
        #[arg(long, default_value_t = 10)]
        components: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthLevel {
    Signal,
    Trajectory,
}

#[derive(Args)]
struct ModelArg {
    /// Shape model file; defaults to the built-in fixture model.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    /// Weight landmarks by tracker confidence.
    #[arg(long)]
    confidence_weighting: bool,
}

#[derive(Args)]
struct SignalArgs {
    /// Landmark id, 0-67.
    #[arg(long)]
    landmark: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<DisplacementMode>,
}

#[derive(Args)]
struct FilterArgs {
    /// Low cutoff, Hz.
    #[arg(long)]
    low: Option<f64>,
    /// High cutoff, Hz.
    #[arg(long)]
    high: Option<f64>,
    /// Filter order per pass (even).
    #[arg(long)]
    order: Option<usize>,
    /// Single forward pass instead of zero-phase.
    #[arg(long)]
    causal: bool,
}

#[derive(Args)]
struct QuantArgs {
    #[arg(long)]
    min_peak_distance: Option<f64>,
    #[arg(long)]
    max_gap: Option<f64>,
    #[arg(long)]
    min_cycles: Option<usize>,
    #[arg(long, value_parser = parse_threshold)]
    threshold: Option<ThresholdMode>,
}

fn parse_mode(s: &str) -> Result<DisplacementMode, String> {
    s.parse().map_err(|e: nns_core::Error| e.to_string())
}

fn parse_threshold(s: &str) -> Result<ThresholdMode, String> {
    s.parse().map_err(|e: nns_core::Error| e.to_string())
}

impl FitArgs {
    fn apply(&self, c: &mut FitConfig) {
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.ridge {
            c.ridge = v;
        }
        c.confidence_weighting |= self.confidence_weighting;
    }
}

impl SignalArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(v) = self.landmark {
            c.landmark = v;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
    }
}

impl FilterArgs {
    fn apply(&self, f: &mut FilterSpec) {
        if let Some(v) = self.low {
            f.low_cut_hz = v;
        }
        if let Some(v) = self.high {
            f.high_cut_hz = v;
        }
        if let Some(v) = self.order {
            f.order = v;
        }
        if self.causal {
            f.zero_phase = false;
        }
    }
}

impl QuantArgs {
    fn apply(&self, q: &mut QuantParams) {
        if let Some(v) = self.min_peak_distance {
            q.min_peak_distance_s = v;
        }
        if let Some(v) = self.max_gap {
            q.max_intra_burst_gap_s = v;
        }
        if let Some(v) = self.min_cycles {
            q.min_cycles_per_burst = v;
        }
        if let Some(v) = self.threshold {
            q.threshold_mode = v;
        }
    }
}

/// A failure tagged with the pipeline stage it came from.
struct CliError {
    stage: Stage,
    message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}`: {}", self.stage, self.message)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError {
            stage: e.stage,
            message: e.source.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn at<T, E: fmt::Display>(stage: Stage, r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| CliError {
        stage,
        message: e.to_string(),
    })
}

fn with_path<T, E: fmt::Display>(stage: Stage, path: &Path, r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| CliError {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = with_path(Stage::Load, path, std::fs::read_to_string(path))?;
    with_path(Stage::Load, path, serde_json::from_str(&text))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        with_path(Stage::Write, dir, std::fs::create_dir_all(dir))?;
    }
    with_path(Stage::Write, path, std::fs::write(path, text))
}

fn load_model(arg: &ModelArg) -> CliResult<ShapeModel> {
    match &arg.model {
        Some(p) => with_path(Stage::Load, p, load_shape_model(p)),
        None => Ok(ShapeModel::builtin()),
    }
}

fn cmd_fit(trajectory: &Path, model: &ModelArg, fit: &FitArgs, out: &Path) -> CliResult<()> {
    let session = with_path(Stage::Load, trajectory, io::parse_trajectory(trajectory))?;
    at(Stage::Load, session.validate())?;
    let model = load_model(model)?;
    let mut config = FitConfig::default();
    fit.apply(&mut config);
    at(Stage::Fit, config.validate())?;
    let fits = at(Stage::Fit, fit_session(&model, &session.frames, &config, Execution::Parallel))?;
    if fits.iter().all(|f| f.fit().is_none()) {
        return at(Stage::Fit, Err(nns_core::Error::EmptySession));
    }
    write_text(out, &io::fits_to_string(&fits_document(&session.source_id, &model, &fits)))
}

fn cmd_signal(fits_path: &Path, signal: &SignalArgs, filter: &FilterArgs, raw_only: bool, out: &Path) -> CliResult<()> {
    let text = with_path(Stage::Load, fits_path, std::fs::read_to_string(fits_path))?;
    let doc = with_path(Stage::Load, fits_path, io::parse_fits_str(&text))?;
    let mut config = PipelineConfig::default();
    signal.apply(&mut config);
    filter.apply(&mut config.filter);
    let raw = extract_signal(&doc.frames, &config)?;
    let rate_hint = raw.first().map_or(30.0, |s| s.sample_rate);
    let mut segments = raw.clone();
    if !raw_only {
        for seg in &raw {
            let kernel = at(Stage::Filter, design_bandpass(&config.filter, seg.sample_rate))?;
            if config.filter.zero_phase && seg.len() <= kernel.pad_length() {
                eprintln!(
                    "nns: skipping a {}-sample segment at {:.2} s, too short to filter",
                    seg.len(),
                    seg.timestamps[0]
                );
                continue;
            }
            segments.push(at(Stage::Filter, apply_bandpass(seg, &kernel))?);
        }
    }
    write_text(
        out,
        &io::signal_to_string(&SignalDocument {
            units: MODEL_UNITS.to_owned(),
            session_duration_s: Some(fits_duration(&doc.frames, rate_hint)),
            segments,
        }),
    )
}

fn cmd_quantify(signal: &Path, quant: &QuantArgs, filter: &FilterArgs, duration: Option<f64>, out: &Path) -> CliResult<()> {
    let text = with_path(Stage::Load, signal, std::fs::read_to_string(signal))?;
    let doc = with_path(Stage::Load, signal, io::parse_signal_str(&text))?;
    let mut params = QuantParams::default();
    quant.apply(&mut params);
    at(Stage::Quantify, params.validate())?;
    let mut filtered: Vec<_> = doc.segments.iter().filter(|s| s.stage == SignalStage::Filtered).cloned().collect();
    if filtered.is_empty() {
        let mut spec = FilterSpec::default();
        filter.apply(&mut spec);
        for seg in &doc.segments {
            let kernel = at(Stage::Filter, design_bandpass(&spec, seg.sample_rate))?;
            filtered.push(at(Stage::Filter, apply_bandpass(seg, &kernel))?);
        }
    }
    if filtered.is_empty() {
        return Err(CliError {
            stage: Stage::Quantify,
            message: format!("{} holds no segments", signal.display()),
        });
    }
    let span = || {
        let first = doc.segments.iter().filter_map(|s| s.timestamps.first()).fold(f64::INFINITY, |a, b| a.min(*b));
        let last = doc.segments.iter().filter_map(|s| s.timestamps.last()).fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        last - first + 1.0 / filtered[0].sample_rate
    };
    let duration = duration.or(doc.session_duration_s).unwrap_or_else(span);
    let report = at(Stage::Quantify, nns_core::quant::quantify_segments(&filtered, &params, duration))?;
    write_text(out, &io::report_to_string(&report))
}

fn load_motion(spec: &str) -> CliResult<CameraMotion> {
    match spec {
        "static" => Ok(CameraMotion::default()),
        "moving" => Ok(CameraMotion::moving_head()),
        path => read_json(Path::new(path)),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    scenario: Option<&Path>,
    seed: Option<u64>,
    noise_sd: Option<f64>,
    bursts: Option<usize>,
    level: SynthLevel,
    motion: &str,
    pixel_noise: Option<f64>,
    drop_fraction: Option<f64>,
    model: &ModelArg,
    out_dir: &Path,
) -> CliResult<()> {
    let mut sc: Scenario = match scenario {
        Some(p) => read_json(p)?,
        None => Scenario::default(),
    };
    if let Some(v) = seed {
        sc.seed = v;
    }
    if let Some(v) = noise_sd {
        sc.noise_sd = v;
    }
    if let Some(v) = bursts {
        sc.burst_count = v;
    }
    at(Stage::Load, sc.validate())?;
    let truth = match level {
        SynthLevel::Signal => {
            let (signal, truth) = at(Stage::Signal, generate_signal(&sc))?;
            let doc = SignalDocument {
                units: MODEL_UNITS.to_owned(),
                session_duration_s: Some(truth.session_duration_s),
                segments: vec![signal],
            };
            write_text(&out_dir.join("signal.json"), &io::signal_to_string(&doc))?;
            truth
        }
        SynthLevel::Trajectory => {
            let mut m = load_motion(motion)?;
            if let Some(v) = pixel_noise {
                m.pixel_noise_px = v;
            }
            if let Some(v) = drop_fraction {
                m.drop_fraction = v;
            }
            let model = load_model(model)?;
            let (session, truth) = at(Stage::Signal, generate_trajectory(&sc, &model, &m))?;
            write_text(&out_dir.join("trajectory.csv"), &io::trajectory_to_string(&session))?;
            truth
        }
    };
    write_text(&out_dir.join("truth.json"), &io::truth_to_string(&truth))
}

fn cmd_score(report: &Path, truth: &Path, out: Option<&Path>) -> CliResult<()> {
    let report = with_path(Stage::Load, report, io::parse_report(report))?;
    let text = with_path(Stage::Load, truth, std::fs::read_to_string(truth))?;
    let truth_doc = with_path(Stage::Load, truth, io::parse_truth_str(&text))?;
    let score = io::score_to_string(&score_detection(&report, &truth_doc));
    if let Some(p) = out {
        write_text(p, &score)?;
    }
    println!("{}", score.trim_end());
    Ok(())
}

fn session_dir(out_dir: &Path, trajectory: &Path, batch: bool) -> PathBuf {
    if !batch {
        return out_dir.to_path_buf();
    }
    let stem = trajectory.file_stem().map_or_else(|| "session".into(), |s| s.to_string_lossy().into_owned());
    // Same stem in different folders is common (.../a/trajectory.csv).
    let parent = trajectory
        .parent()
        .and_then(|p| p.file_name())
        .map(|p| p.to_string_lossy().into_owned());
    match parent {
        Some(p) if stem == "trajectory" => out_dir.join(p),
        _ => out_dir.join(stem),
    }
}

fn cmd_run(
    trajectories: &[PathBuf],
    model: &ModelArg,
    config_path: Option<&Path>,
    overrides: (&FitArgs, &SignalArgs, &FilterArgs, &QuantArgs),
    out_dir: &Path,
    jobs: usize,
) -> CliResult<()> {
    let mut config: PipelineConfig = match config_path {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    let (fit, signal, filter, quant) = overrides;
    fit.apply(&mut config.fit);
    signal.apply(&mut config);
    filter.apply(&mut config.filter);
    quant.apply(&mut config.quant);
    // Resolve the model path once so every session sees the same file.
    let model_path = match &model.model {
        Some(p) => p.clone(),
        None => {
            let p = out_dir.join("model.json");
            write_text(&p, &ShapeModel::builtin().to_json())?;
            p
        }
    };
    for p in trajectories.iter().chain(std::iter::once(&model_path)) {
        if !p.is_file() {
            return with_path(Stage::Load, p, Err("no such file"));
        }
    }
    let batch = trajectories.len() > 1;
    let dirs: Vec<PathBuf> = trajectories.iter().map(|t| session_dir(out_dir, t, batch)).collect();
    let mut unique = dirs.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != dirs.len() {
        return Err(CliError {
            stage: Stage::Load,
            message: "two trajectories map to the same output directory; rename one".into(),
        });
    }
    let results = nns_core::par::with_threads(jobs, || {
        // Sessions fan out across workers; each session's frames fit sequentially.
        let exec = if batch { Execution::Sequential } else { Execution::Parallel };
        let jobs: Vec<(&PathBuf, &PathBuf)> = trajectories.iter().zip(&dirs).collect();
        nns_core::par::map_collect(&jobs, Execution::Parallel, |(t, d)| {
            run_pipeline_paths(t, &model_path, &config, d, exec).map(|(out, _)| out.report)
        })
    });
    let mut failures = 0;
    for (t, r) in trajectories.iter().zip(results) {
        match r {
            Ok(report) => {
                if batch {
                    println!(
                        "{}: {} bursts, {} cycles",
                        t.display(),
                        report.burst_count(),
                        report.cycles.len()
                    );
                }
            }
            Err(e) if !batch => return Err(e.into()),
            Err(e) => {
                failures += 1;
                eprintln!("nns: {}: stage `{}`: {}", t.display(), e.stage, e.source);
            }
        }
    }
    if failures > 0 {
        return Err(CliError {
            stage: Stage::Load,
            message: format!("{failures} of {} sessions failed", trajectories.len()),
        });
    }
    Ok(())
}

fn cmd_serve(addr: SocketAddr, workdir: &Path, models: &[String]) -> CliResult<()> {
    let mut named = BTreeMap::new();
    for spec in models {
        let Some((name, path)) = spec.split_once('=') else {
            return at(Stage::Load, Err(format!("--model expects NAME=PATH, got `{spec}`")));
        };
        let path = Path::new(path);
        named.insert(name.to_owned(), with_path(Stage::Load, path, load_shape_model(path))?);
    }
    let state = with_path(Stage::Load, workdir, nns_service::AppState::open(workdir, named))?;
    let runtime = at(Stage::Load, tokio::runtime::Runtime::new())?;
    eprintln!("nns: serving on http://{addr}");
    at(Stage::Load, runtime.block_on(nns_service::serve(addr, state)))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit { trajectory, model, fit, out } => cmd_fit(&trajectory, &model, &fit, &out),
        Command::Signal { fits, signal, filter, raw_only, out } => cmd_signal(&fits, &signal, &filter, raw_only, &out),
        Command::Quantify {
            signal,
            quant,
            filter,
            session_duration,
            out,
        } => cmd_quantify(&signal, &quant, &filter, session_duration, &out),
        Command::Synth {
            scenario,
            seed,
            noise_sd,
            bursts,
            level,
            motion,
            pixel_noise,
            drop_fraction,
            model,
            out_dir,
        } => cmd_synth(
            scenario.as_deref(),
            seed,
            noise_sd,
            bursts,
            level,
            &motion,
            pixel_noise,
            drop_fraction,
            &model,
            &out_dir,
        ),
        Command::Score { report, truth, out } => cmd_score(&report, &truth, out.as_deref()),
        Command::Run {
            trajectory,
            model,
            config,
            fit,
            signal,
            filter,
            quant,
            out_dir,
            jobs,
        } => cmd_run(&trajectory, &model, config.as_deref(), (&fit, &signal, &filter, &quant), &out_dir, jobs),
        Command::Serve { addr, workdir, models } => cmd_serve(addr, &workdir, &models),
        Command::ModelFixture { vertices, components, seed, out } => {
            let model = at(Stage::Load, ShapeModel::fixture(vertices, components, seed))?;
            write_text(&out, &model.to_json())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nns: {e}");
            ExitCode::FAILURE
        }
    }
}
