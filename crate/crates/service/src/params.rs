use nns_core::pipeline::PipelineConfig;
use nns_core::{DisplacementMode, FilterSpec, GapPolicy, QuantParams, Stage, JAW_TIP, LANDMARK_COUNT};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{ApiError, FieldError};

/// Deserializes a JSON body, naming the offending field on failure.
pub fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "body".to_owned() } else { path };
        ApiError::field(field, e.into_inner().to_string())
    })
}

/// Query of `GET /sessions/{id}/signal`. A filter is applied when any of
/// `low`, `high`, `order` or `causal` is given; missing ones take defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalQuery {
    pub landmark: usize,
    pub mode: DisplacementMode,
    pub filter: Option<FilterSpec>,
}

impl SignalQuery {
    pub fn parse(pairs: &[(String, String)]) -> Result<Self, ApiError> {
        let mut errors = Vec::new();
        let mut q = SignalQuery {
            landmark: JAW_TIP,
            mode: DisplacementMode::default(),
            filter: None,
        };
        let mut spec = FilterSpec::default();
        let mut wants_filter = false;
        let mut seen = Vec::new();
        for (key, value) in pairs {
            if seen.contains(key) {
                errors.push(FieldError::new(key, "given more than once"));
                continue;
            }
            seen.push(key.clone());
            let bad = |what: &str| FieldError::new(key, format!("expected {what}, got `{value}`"));
            match key.as_str() {
                "landmark" => match value.parse::<usize>() {
                    Ok(id) if id < LANDMARK_COUNT => q.landmark = id,
                    Ok(id) => errors.push(FieldError::new(key, format!("{id} is outside 0..68"))),
                    Err(_) => errors.push(bad("an integer landmark id")),
                },
                "mode" => match value.parse() {
                    Ok(m) => q.mode = m,
                    Err(_) => errors.push(bad("euclidean, horizontal or vertical")),
                },
                "low" => match value.parse::<f64>() {
                    Ok(v) if v.is_finite() => spec.low_cut_hz = v,
                    _ => errors.push(bad("a number in Hz")),
                },
                "high" => match value.parse::<f64>() {
                    Ok(v) if v.is_finite() => spec.high_cut_hz = v,
                    _ => errors.push(bad("a number in Hz")),
                },
                "order" => match value.parse::<usize>() {
                    Ok(v) => spec.order = v,
                    Err(_) => errors.push(bad("an even integer")),
                },
                "causal" => match value.as_str() {
                    "true" | "1" => spec.zero_phase = false,
                    "false" | "0" => spec.zero_phase = true,
                    _ => errors.push(bad("true or false")),
                },
                _ => errors.push(FieldError::new(key, "unknown parameter")),
            }
            wants_filter |= matches!(key.as_str(), "low" | "high" | "order" | "causal");
        }
        if wants_filter && errors.is_empty() {
            // Rate-independent checks now; the Nyquist check needs the session.
            if let Err(nns_core::Error::InvalidParameter { name, message }) = spec.validate(f64::MAX) {
                errors.push(FieldError::new(signal_field(Stage::Filter, name).unwrap_or_default(), message));
            }
            q.filter = Some(spec);
        }
        if errors.is_empty() {
            Ok(q)
        } else {
            Err(ApiError::Validation(errors))
        }
    }
}

/// Query field blamed for a core parameter error.
pub fn signal_field(_stage: Stage, name: &str) -> Option<String> {
    let field = match name {
        "low_cut_hz" => "low",
        "high_cut_hz" => "high",
        "order" => "order",
        "landmark" | "landmark_id" => "landmark",
        _ => return None,
    };
    Some(field.to_owned())
}

/// Body of `POST /sessions/{id}/quantify`; every field is optional.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantifyRequest {
    pub landmark: usize,
    pub mode: DisplacementMode,
    pub filter: FilterSpec,
    pub quant: QuantParams,
    pub gaps: GapPolicy,
}

impl Default for QuantifyRequest {
    fn default() -> Self {
        let c = PipelineConfig::default();
        Self {
            landmark: c.landmark,
            mode: c.mode,
            filter: c.filter,
            quant: c.quant,
            gaps: c.gaps,
        }
    }
}

/// Body field blamed for a core parameter error.
pub fn quantify_field(stage: Stage, name: &str) -> Option<String> {
    Some(match (stage, name) {
        (_, "landmark" | "landmark_id") => "landmark".to_owned(),
        (Stage::Filter, n) => format!("filter.{n}"),
        (Stage::Quantify, n) => format!("quant.{n}"),
        (Stage::Fit, n) => format!("fit.{n}"),
        (Stage::Signal, n) => format!("gaps.{n}"),
        _ => return None,
    })
}

/// Checks that do not need the session.
pub fn validate_quantify(config: &PipelineConfig) -> Result<(), ApiError> {
    let mut errors = Vec::new();
    if config.landmark >= LANDMARK_COUNT {
        errors.push(FieldError::new("landmark", format!("{} is outside 0..68", config.landmark)));
    }
    if let Err(nns_core::Error::InvalidParameter { name, message }) = config.filter.validate(f64::MAX) {
        errors.push(FieldError::new(format!("filter.{name}"), message));
    }
    if let Err(nns_core::Error::InvalidParameter { name, message }) = config.quant.validate() {
        errors.push(FieldError::new(format!("quant.{name}"), message));
    }
    let gaps = &config.gaps;
    if !(gaps.max_interpolated_gap_s >= 0.0 && gaps.max_interpolated_gap_s.is_finite()) {
        errors.push(FieldError::new("gaps.max_interpolated_gap_s", "must be finite and nonnegative"));
    }
    if !(gaps.jitter_tolerance >= 0.0 && gaps.jitter_tolerance.is_finite()) {
        errors.push(FieldError::new("gaps.jitter_tolerance", "must be finite and nonnegative"));
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ApiError::Validation(errors))
    }
}
