use nns_core::io::{
    parse_fits_str, parse_report, parse_report_str, parse_signal_str, parse_trajectory,
    parse_trajectory_str, parse_truth_str, report_to_string, signal_to_string, trajectory_to_string,
    truth_to_string, write_report, write_trajectory,
};
use nns_core::pipeline::fits_document;
use nns_core::{
    generate_trajectory, quantify, run_pipeline, segment_bursts, CameraMotion, CycleEvent,
    DisplacementMode, Error, Execution, MovementSignal, NNSReport, PipelineConfig, QuantParams,
    Scenario, ShapeModel, SignalStage,
};

fn session_pair() -> (ShapeModel, nns_core::TrajectorySession, nns_core::GroundTruth) {
    let model = ShapeModel::fixture(100, 10, 1).unwrap();
    let motion = CameraMotion {
        pixel_noise_px: 0.7,
        drop_fraction: 0.05,
        ..CameraMotion::moving_head()
    };
    let (s, t) = generate_trajectory(&Scenario::default().with_seed(8), &model, &motion).unwrap();
    (model, s, t)
}

#[test]
fn trajectory_round_trips_through_a_file() {
    let (_, mut session, _) = session_pair();
    // Exercise partial frames and confidences too.
    session.frames[3].valid[10] = false;
    session.frames[3].points2d[10] = [0.0, 0.0];
    for f in session.frames.iter_mut().take(20) {
        f.confidence = Some((0..68).map(|i| (i as f64) / 67.0).collect());
    }
    for f in session.frames.iter_mut().skip(20) {
        f.confidence = Some(vec![1.0; 68]);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_trajectory(&session, &path).unwrap();
    let back = parse_trajectory(&path).unwrap();
    assert_eq!(back.source_id, session.source_id);
    assert_eq!(back.sample_rate_hint, session.sample_rate_hint);
    // Dropped frames carry no rows and cannot survive the text format.
    let kept: Vec<_> = session.frames.iter().filter(|f| f.valid_count() > 0).collect();
    assert_eq!(back.frames.len(), kept.len());
    for (a, b) in kept.iter().zip(&back.frames) {
        assert_eq!(a.frame_index, b.frame_index);
        assert!((a.timestamp - b.timestamp).abs() < 1e-9);
        assert_eq!(a.valid, b.valid);
        for i in a.valid_ids() {
            for d in 0..2 {
                assert!((a.points2d[i][d] - b.points2d[i][d]).abs() < 1e-9);
            }
            let (ca, cb) = (a.confidence.as_ref().unwrap()[i], b.confidence.as_ref().unwrap()[i]);
            assert!((ca - cb).abs() < 1e-9);
        }
    }
    // Writing the parsed session again is a fixpoint.
    assert_eq!(trajectory_to_string(&back), trajectory_to_string(&parse_trajectory_str(&trajectory_to_string(&back)).unwrap()));
}

fn worked_example() -> NNSReport {
    let dt = 3.5 / 8.0;
    let times: Vec<f64> = (0..8).map(|i| 5.0 + i as f64 * dt).chain((0..8).map(|i| 30.0 + i as f64 * dt)).collect();
    let cycles: Vec<CycleEvent> = times
        .iter()
        .enumerate()
        .map(|(index, &time)| CycleEvent { time, amplitude: 0.1 + index as f64 / 3.0, index })
        .collect();
    let params = QuantParams::default();
    let mut sig = MovementSignal::uniform(8, DisplacementMode::Euclidean, 30.0, 0.0, vec![0.0; 4]);
    sig.stage = SignalStage::Filtered;
    quantify(&sig, &cycles, &segment_bursts(&cycles, &params), 60.0, &params).unwrap()
}

#[test]
fn reports_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let report = worked_example();
    write_report(&report, &path).unwrap();
    let back = parse_report(&path).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.mean_frequency_hz.map(f64::to_bits), report.mean_frequency_hz.map(f64::to_bits));

    let mut sig = MovementSignal::uniform(8, DisplacementMode::Euclidean, 30.0, 0.0, vec![0.0; 4]);
    sig.stage = SignalStage::Filtered;
    let empty = quantify(&sig, &[], &Default::default(), 60.0, &QuantParams::default()).unwrap();
    let back = parse_report_str(&report_to_string(&empty)).unwrap();
    assert_eq!(back.mean_frequency_hz, None);
    assert_eq!(back, empty);
}

#[test]
fn truncated_report_is_rejected() {
    let text = report_to_string(&worked_example());
    for cut in [1, text.len() / 3, text.len() / 2, text.len() - 2] {
        assert!(parse_report_str(&text[..cut]).is_err(), "cut at {cut}");
    }
}

#[test]
fn documents_reject_other_schemas() {
    let report = report_to_string(&worked_example());
    assert!(matches!(parse_signal_str(&report), Err(Error::Version { .. })));
    let bumped = report.replace("nns-report/1", "nns-report/2");
    assert!(matches!(parse_report_str(&bumped), Err(Error::Version { .. })));
}

#[test]
fn pipeline_documents_round_trip() {
    let (model, session, truth) = session_pair();
    let out = run_pipeline(&session, &model, &PipelineConfig::default(), Execution::Parallel).unwrap();
    let fits = fits_document(&session.source_id, &model, &out.fits);
    assert_eq!(parse_fits_str(&nns_core::io::fits_to_string(&fits)).unwrap(), fits);
    let doc = nns_core::io::SignalDocument {
        units: "model_units".into(),
        session_duration_s: Some(out.report.session_duration_s),
        segments: out.raw.iter().chain(&out.filtered).cloned().collect(),
    };
    assert_eq!(parse_signal_str(&signal_to_string(&doc)).unwrap(), doc);
    assert_eq!(parse_truth_str(&truth_to_string(&truth)).unwrap(), truth);
    assert_eq!(parse_report_str(&report_to_string(&out.report)).unwrap(), out.report);
}
