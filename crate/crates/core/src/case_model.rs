//! Structured case files: the single input that seeds every simulation.
//!
//! A case file is a UTF-8 JSON document with exactly seven recognised keys
//! (`case_id`, `summary`, `charges`, `law_explanation`,
//! `prosecution_evidence`, `defense_evidence`, `keywords`). Unknown keys are
//! ignored with a warning.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

const KNOWN_FIELDS: [&str; 7] = [
    "case_id",
    "summary",
    "charges",
    "law_explanation",
    "prosecution_evidence",
    "defense_evidence",
    "keywords",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CaseError {
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("field `{0}` is empty")]
    EmptyField(String),
    #[error("malformed case file: {0}")]
    MalformedFile(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFile {
    pub case_id: String,
    pub summary: String,
    pub charges: Vec<String>,
    pub law_explanation: String,
    pub prosecution_evidence: Vec<String>,
    pub defense_evidence: Vec<String>,
    /// Keywords as written in the file. Matching uses [`CaseFile::keyword_keys`].
    pub keywords: Vec<String>,
}

/// One violated case-file invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

impl CaseFile {
    /// Keywords normalised for matching: trimmed and lower-cased.
    pub fn keyword_keys(&self) -> Vec<String> {
        normalize_keywords(&self.keywords)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("case file serialises")
    }
}

pub fn normalize_keywords(keywords: &[String]) -> Vec<String> {
    keywords.iter().map(|k| k.trim().to_lowercase()).collect()
}

pub fn load_case(path: impl AsRef<Path>) -> Result<CaseFile, CaseError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CaseError::MalformedFile(format!("{}: {e}", path.display())))?;
    parse_case(&raw)
}

/// Parses and validates a case document already held in memory.
pub fn parse_case(raw: &str) -> Result<CaseFile, CaseError> {
    let value: Value =
        serde_json::from_str(raw).map_err(|e| CaseError::MalformedFile(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(CaseError::MalformedFile("top-level value is not an object".into()));
    };

    for key in obj.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            log::warn!("ignoring unknown case-file field `{key}`");
        }
    }

    let case = CaseFile {
        case_id: string_field(&obj, "case_id")?,
        summary: string_field(&obj, "summary")?,
        charges: list_field(&obj, "charges")?,
        law_explanation: string_field(&obj, "law_explanation")?,
        prosecution_evidence: list_field(&obj, "prosecution_evidence")?,
        defense_evidence: list_field(&obj, "defense_evidence")?,
        keywords: list_field(&obj, "keywords")?,
    };

    if let Some(v) = validate_case(&case).into_iter().next() {
        return Err(violation_to_error(v));
    }
    Ok(case)
}

fn violation_to_error(v: Violation) -> CaseError {
    match v.field {
        "case_id" if v.reason.contains("separator") => {
            CaseError::MalformedFile(format!("case_id: {}", v.reason))
        }
        field => CaseError::EmptyField(field.to_string()),
    }
}

fn string_field(obj: &Map<String, Value>, name: &str) -> Result<String, CaseError> {
    match obj.get(name) {
        None | Some(Value::Null) => Err(CaseError::MissingField(name.to_string())),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(CaseError::MalformedFile(format!(
            "field `{name}` must be a string, found {}",
            json_kind(other)
        ))),
    }
}

fn list_field(obj: &Map<String, Value>, name: &str) -> Result<Vec<String>, CaseError> {
    match obj.get(name) {
        None | Some(Value::Null) => Err(CaseError::MissingField(name.to_string())),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, item)| match item {
                Value::String(s) => Ok(s.clone()),
                other => Err(CaseError::MalformedFile(format!(
                    "field `{name}[{i}]` must be a string, found {}",
                    json_kind(other)
                ))),
            })
            .collect(),
        Some(other) => Err(CaseError::MalformedFile(format!(
            "field `{name}` must be a list of strings, found {}",
            json_kind(other)
        ))),
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "object",
    }
}

/// Returns one descriptor per violated invariant; empty when the case is valid.
pub fn validate_case(case: &CaseFile) -> Vec<Violation> {
    let mut out = Vec::new();
    if case.case_id.trim().is_empty() {
        out.push(Violation { field: "case_id", reason: "case_id is empty".into() });
    } else if case.case_id.contains(['/', '\\']) {
        out.push(Violation {
            field: "case_id",
            reason: "case_id contains a path separator".into(),
        });
    }
    if case.summary.trim().is_empty() {
        out.push(Violation { field: "summary", reason: "summary is empty".into() });
    }
    if case.charges.is_empty() {
        out.push(Violation { field: "charges", reason: "at least one charge is required".into() });
    }
    if case.law_explanation.trim().is_empty() {
        out.push(Violation {
            field: "law_explanation",
            reason: "law_explanation is empty".into(),
        });
    }
    if case.keywords.is_empty() {
        out.push(Violation {
            field: "keywords",
            reason: "at least one keyword is required".into(),
        });
    }
    for (i, k) in case.keywords.iter().enumerate() {
        if k.trim().is_empty() {
            out.push(Violation { field: "keywords", reason: format!("blank keyword at index {i}") });
        }
    }
    out
}
