//! File formats.
//!
//! Trajectories are comma-delimited text, one row per (frame, landmark):
//!
//! ```text
//! #@ source_id=clip-01
//! #@ sample_rate_hint=30
//! frame_index,timestamp_s,landmark_id,x_px,y_px,confidence
//! 0,0,0,231.5,198.25,0.97
//! ```
//!
//! Lines starting with `#` are comments; `#@ key=value` comments carry
//! session metadata. The `confidence` column is optional. Landmarks absent
//! from a frame are marked invalid.
//!
//! Reports, signals, fits and ground truth are JSON documents tagged with a
//! `schema` string.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera_fit::{FrameOutcome, LandmarkFrame};
use crate::error::{Error, Result};
use crate::layout::LANDMARK_COUNT;
use crate::quant::NNSReport;
use crate::signal::MovementSignal;
use crate::synth::{DetectionScore, GroundTruth};

pub const REPORT_SCHEMA: &str = "nns-report/1";
pub const SIGNAL_SCHEMA: &str = "nns-signal/1";
pub const FITS_SCHEMA: &str = "nns-fits/1";
pub const TRUTH_SCHEMA: &str = "nns-truth/1";
pub const SCORE_SCHEMA: &str = "nns-score/1";

const HEADER: [&str; 5] = ["frame_index", "timestamp_s", "landmark_id", "x_px", "y_px"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySession {
    pub source_id: String,
    pub sample_rate_hint: f64,
    pub frames: Vec<LandmarkFrame>,
    pub metadata: BTreeMap<String, String>,
}

impl TrajectorySession {
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::Structure(format!(
                "session needs at least 2 frames, found {}",
                self.frames.len()
            )));
        }
        for w in self.frames.windows(2) {
            if w[1].frame_index <= w[0].frame_index {
                return Err(Error::Ordering(format!(
                    "frame {} follows frame {}",
                    w[1].frame_index, w[0].frame_index
                )));
            }
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::Ordering(format!(
                    "timestamp of frame {} ({}) does not exceed frame {} ({})",
                    w[1].frame_index, w[1].timestamp, w[0].frame_index, w[0].timestamp
                )));
            }
        }
        Ok(())
    }
}

struct FrameBuilder {
    timestamp: f64,
    line: u64,
    frame: LandmarkFrame,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Format {
        line,
        message: format!("cannot parse {} value `{raw}`", HEADER.get(i).unwrap_or(&"confidence")),
    })
}

/// Parses trajectory text.
pub fn parse_trajectory_str(text: &str) -> Result<TrajectorySession> {
    let mut metadata = BTreeMap::new();
    for line in text.lines() {
        if let Some(rest) = line.trim_start().strip_prefix("#@") {
            if let Some((k, v)) = rest.split_once('=') {
                metadata.insert(k.trim().to_owned(), v.trim().to_owned());
            }
        }
    }
    let source_id = metadata.remove("source_id").unwrap_or_default();
    let sample_rate_hint = match metadata.remove("sample_rate_hint") {
        Some(v) => v.parse().map_err(|_| Error::Parse {
            field: "sample_rate_hint".into(),
            message: format!("not a number: `{v}`"),
        })?,
        None => 30.0,
    };

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Format {
        line: e.position().map_or(1, |p| p.line()),
        message: e.to_string(),
    })?;
    let header_line = header.position().map_or(1, |p| p.line());
    let cols: Vec<&str> = header.iter().collect();
    let has_confidence = match cols.as_slice() {
        [a, b, c, d, e] if [*a, *b, *c, *d, *e] == HEADER => false,
        [a, b, c, d, e, f] if [*a, *b, *c, *d, *e] == HEADER && *f == "confidence" => true,
        _ => {
            return Err(Error::Format {
                line: header_line,
                message: format!(
                    "expected header `{}[,confidence]`, found `{}`",
                    HEADER.join(","),
                    cols.join(",")
                ),
            })
        }
    };
    let width = if has_confidence { 6 } else { 5 };

    let mut frames: BTreeMap<u64, FrameBuilder> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Format {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let frame_index: u64 = field(&rec, 0, line)?;
        let timestamp: f64 = field(&rec, 1, line)?;
        let landmark: usize = field(&rec, 2, line)?;
        let x: f64 = field(&rec, 3, line)?;
        let y: f64 = field(&rec, 4, line)?;
        if landmark >= LANDMARK_COUNT {
            return Err(Error::Range {
                line,
                message: format!("landmark_id {landmark} outside 0..{LANDMARK_COUNT}"),
            });
        }
        if !(timestamp.is_finite() && x.is_finite() && y.is_finite()) {
            return Err(Error::Format {
                line,
                message: "non-finite timestamp or coordinate".into(),
            });
        }
        let confidence = if has_confidence {
            let c: f64 = field(&rec, 5, line)?;
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Range {
                    line,
                    message: format!("confidence {c} outside [0, 1]"),
                });
            }
            Some(c)
        } else {
            None
        };
        let entry = frames.entry(frame_index).or_insert_with(|| {
            let mut frame = LandmarkFrame::empty(frame_index, timestamp);
            if has_confidence {
                frame.confidence = Some(vec![0.0; LANDMARK_COUNT]);
            }
            FrameBuilder {
                timestamp,
                line,
                frame,
            }
        });
        if entry.timestamp != timestamp {
            return Err(Error::Format {
                line,
                message: format!(
                    "frame {frame_index} has timestamp {timestamp}, but {} on line {}",
                    entry.timestamp, entry.line
                ),
            });
        }
        if entry.frame.valid[landmark] {
            return Err(Error::Format {
                line,
                message: format!("duplicate row for frame {frame_index}, landmark {landmark}"),
            });
        }
        entry.frame.valid[landmark] = true;
        entry.frame.points2d[landmark] = [x, y];
        if let (Some(c), Some(conf)) = (confidence, entry.frame.confidence.as_mut()) {
            conf[landmark] = c;
        }
    }

    let session = TrajectorySession {
        source_id,
        sample_rate_hint,
        frames: frames.into_values().map(|b| b.frame).collect(),
        metadata,
    };
    session.validate()?;
    Ok(session)
}

pub fn parse_trajectory(path: impl AsRef<Path>) -> Result<TrajectorySession> {
    parse_trajectory_str(&std::fs::read_to_string(path)?)
}

/// Serializes a session; frames without any valid landmark produce no rows.
pub fn trajectory_to_string(session: &TrajectorySession) -> String {
    let mut out = Vec::new();
    if !session.source_id.is_empty() {
        writeln!(out, "#@ source_id={}", session.source_id).unwrap();
    }
    writeln!(out, "#@ sample_rate_hint={}", session.sample_rate_hint).unwrap();
    for (k, v) in &session.metadata {
        writeln!(out, "#@ {k}={v}").unwrap();
    }
    let has_conf = session.frames.iter().any(|f| f.confidence.is_some());
    write!(out, "{}", HEADER.join(",")).unwrap();
    writeln!(out, "{}", if has_conf { ",confidence" } else { "" }).unwrap();
    for f in &session.frames {
        for id in f.valid_ids() {
            let [x, y] = f.points2d[id];
            write!(out, "{},{},{},{},{}", f.frame_index, f.timestamp, id, x, y).unwrap();
            if has_conf {
                let c = f.confidence.as_ref().map_or(1.0, |c| c[id]);
                write!(out, ",{c}").unwrap();
            }
            writeln!(out).unwrap();
        }
    }
    String::from_utf8(out).expect("ascii output")
}

pub fn write_trajectory(session: &TrajectorySession, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, trajectory_to_string(session))?;
    Ok(())
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    schema: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn tagged_json<T: Serialize>(schema: &str, body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Tagged { schema, body }).expect("serializable");
    s.push('\n');
    s
}

fn parse_tagged<T: DeserializeOwned>(text: &str, expected: &'static str) -> Result<T> {
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Structure("document is not a JSON object".into()))?;
    match obj.remove("schema") {
        Some(serde_json::Value::String(s)) if s == expected => {}
        Some(serde_json::Value::String(s)) => return Err(Error::Version { found: s, expected }),
        Some(other) => {
            return Err(Error::Version {
                found: other.to_string(),
                expected,
            })
        }
        None => {
            return Err(Error::Version {
                found: "<missing>".into(),
                expected,
            })
        }
    }
    Ok(serde_json::from_value(value)?)
}

pub fn report_to_string(report: &NNSReport) -> String {
    tagged_json(REPORT_SCHEMA, report)
}

pub fn parse_report_str(text: &str) -> Result<NNSReport> {
    parse_tagged(text, REPORT_SCHEMA)
}

pub fn write_report(report: &NNSReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, report_to_string(report))?;
    Ok(())
}

pub fn parse_report(path: impl AsRef<Path>) -> Result<NNSReport> {
    parse_report_str(&std::fs::read_to_string(path)?)
}

/// Raw and/or filtered signal segments of one landmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalDocument {
    pub units: String,
    /// Length of the session the segments came from, including unfittable
    /// frames; rates in a report derived from this document use it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_duration_s: Option<f64>,
    pub segments: Vec<MovementSignal>,
}

pub fn signal_to_string(doc: &SignalDocument) -> String {
    tagged_json(SIGNAL_SCHEMA, doc)
}

pub fn parse_signal_str(text: &str) -> Result<SignalDocument> {
    parse_tagged(text, SIGNAL_SCHEMA)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsDocument {
    pub units: String,
    pub source_id: String,
    pub num_components: usize,
    pub frames: Vec<FrameOutcome>,
}

pub fn fits_to_string(doc: &FitsDocument) -> String {
    tagged_json(FITS_SCHEMA, doc)
}

pub fn parse_fits_str(text: &str) -> Result<FitsDocument> {
    parse_tagged(text, FITS_SCHEMA)
}

pub fn truth_to_string(truth: &GroundTruth) -> String {
    tagged_json(TRUTH_SCHEMA, truth)
}

pub fn parse_truth_str(text: &str) -> Result<GroundTruth> {
    parse_tagged(text, TRUTH_SCHEMA)
}

pub fn score_to_string(score: &DetectionScore) -> String {
    tagged_json(SCORE_SCHEMA, score)
}
