//! Score extraction from free-form judge responses.
//!
//! The judge is asked for a JSON object with a numeric `"score"` and a string
//! `"justification"`, but responses routinely wrap it in prose or code
//! fences. The first JSON object carrying a `"score"` key is taken, wherever
//! it appears (nested objects included). Out-of-range scores are rejected,
//! never clamped.

use alloc::string::String;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedScore {
    pub score: f64,
    pub justification: String,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreParseError {
    #[error("no JSON object in response")]
    NoJson,
    #[error("response JSON lacks field \"{field}\"")]
    MissingField { field: String },
    #[error("score is not numeric")]
    NonNumeric,
    #[error("score {score} outside [0, {max}]")]
    OutOfRange { score: f64, max: f64 },
    #[error("maximum points must be positive, got {max}")]
    InvalidMaximum { max: f64 },
}

impl ScoreParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ScoreParseError::NoJson => "no_json",
            ScoreParseError::MissingField { .. } => "missing_field",
            ScoreParseError::NonNumeric => "non_numeric",
            ScoreParseError::OutOfRange { .. } => "out_of_range",
            ScoreParseError::InvalidMaximum { .. } => "invalid_maximum",
        }
    }
}

/// Parses a JSON object starting exactly at `start`, returning it and the
/// byte offset just past it.
fn object_at(text: &str, start: usize) -> Option<(Map<String, Value>, usize)> {
    let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
    match stream.next() {
        Some(Ok(Value::Object(map))) => Some((map, start + stream.byte_offset())),
        _ => None,
    }
}

fn find_scored(map: &Map<String, Value>) -> Option<&Map<String, Value>> {
    if map.contains_key("score") {
        return Some(map);
    }
    map.values().find_map(|v| match v {
        Value::Object(inner) => find_scored(inner),
        Value::Array(items) => items.iter().find_map(|i| match i {
            Value::Object(o) => find_scored(o),
            _ => None,
        }),
        _ => None,
    })
}

pub fn extract_score(raw_response: &str, max_points: f64) -> Result<ExtractedScore, ScoreParseError> {
    if !(max_points.is_finite() && max_points > 0.0) {
        return Err(ScoreParseError::InvalidMaximum { max: max_points });
    }
    let mut saw_object = false;
    let mut pos = 0;
    let bytes = raw_response.as_bytes();
    while let Some(off) = bytes[pos..].iter().position(|b| *b == b'{') {
        let start = pos + off;
        match object_at(raw_response, start) {
            Some((map, end)) => {
                saw_object = true;
                if let Some(scored) = find_scored(&map) {
                    return validate(scored, max_points);
                }
                pos = end;
            }
            None => pos = start + 1,
        }
    }
    if saw_object {
        Err(ScoreParseError::MissingField { field: "score".into() })
    } else {
        Err(ScoreParseError::NoJson)
    }
}

fn validate(map: &Map<String, Value>, max: f64) -> Result<ExtractedScore, ScoreParseError> {
    let score = match map.get("score") {
        Some(Value::Number(n)) => n.as_f64().ok_or(ScoreParseError::NonNumeric)?,
        _ => return Err(ScoreParseError::NonNumeric),
    };
    let justification = match map.get("justification") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err(ScoreParseError::MissingField { field: "justification".into() }),
    };
    if !(score.is_finite() && (0.0..=max).contains(&score)) {
        return Err(ScoreParseError::OutOfRange { score, max });
    }
    Ok(ExtractedScore { score, justification })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn embedded_object_in_prose() {
        let r = extract_score(
            "Here you go... {\"score\": 3.5, \"justification\": \"partial\"} hope that helps",
            5.0,
        )
        .unwrap();
        assert_eq!(r, ExtractedScore { score: 3.5, justification: "partial".into() });
    }

    #[test]
    fn string_score_is_non_numeric() {
        assert_eq!(extract_score("{\"score\": \"three\"}", 5.0), Err(ScoreParseError::NonNumeric));
    }

    #[test]
    fn negative_score_is_out_of_range() {
        assert_eq!(
            extract_score("{\"score\": -1, \"justification\": \"x\"}", 5.0),
            Err(ScoreParseError::OutOfRange { score: -1.0, max: 5.0 })
        );
        assert!(matches!(
            extract_score("{\"score\": 7, \"justification\": \"x\"}", 5.0),
            Err(ScoreParseError::OutOfRange { .. })
        ));
    }

    #[test]
    fn boundaries_are_inclusive() {
        assert_eq!(extract_score("{\"score\": 0, \"justification\": \"\"}", 5.0).unwrap().score, 0.0);
        assert_eq!(extract_score("{\"score\": 5, \"justification\": \"\"}", 5.0).unwrap().score, 5.0);
    }

    #[test]
    fn missing_pieces() {
        assert_eq!(extract_score("no braces at all", 5.0), Err(ScoreParseError::NoJson));
        assert_eq!(extract_score("{not json}", 5.0), Err(ScoreParseError::NoJson));
        assert_eq!(
            extract_score("{\"grade\": 3}", 5.0),
            Err(ScoreParseError::MissingField { field: "score".into() })
        );
        assert_eq!(
            extract_score("{\"score\": 3}", 5.0),
            Err(ScoreParseError::MissingField { field: "justification".into() })
        );
        assert!(matches!(extract_score("{}", 0.0), Err(ScoreParseError::InvalidMaximum { .. })));
    }

    #[test]
    fn skips_preceding_objects_and_finds_nested() {
        let raw = "```json\n{\"meta\": 1}\n{\"result\": {\"score\": 2, \"justification\": \"ok\"}}\n```";
        assert_eq!(extract_score(raw, 5.0).unwrap().score, 2.0);
        let raw = "{ broken {\"score\": 1, \"justification\": \"j\"}";
        assert_eq!(extract_score(raw, 5.0).unwrap().score, 1.0);
    }

    proptest! {
        #[test]
        fn never_panics_and_bounds_hold(raw in ".{0,200}", max in 0.1f64..100.0) {
            if let Ok(r) = extract_score(&raw, max) {
                prop_assert!(r.score >= 0.0 && r.score <= max);
            }
        }

        #[test]
        fn accepts_every_in_range_score(score in 0.0f64..=10.0) {
            let raw = alloc::format!("{{\"score\": {score}, \"justification\": \"j\"}}");
            prop_assert_eq!(extract_score(&raw, 10.0).unwrap().score, score);
        }
    }
}
