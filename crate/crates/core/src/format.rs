//! Versioned JSON documents for model sets and score distributions.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::Categorization;
use crate::corpus::TileLegend;
use crate::evaluation::ScoreDistribution;
use crate::model::LNode;

pub const MODEL_FORMAT: &str = "chunkblend-model";
pub const SCORE_FORMAT: &str = "chunkblend-scores";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("malformed document: {0}")]
    Json(String),
    #[error("expected a {expected} document, found {found:?}")]
    WrongFormat { expected: &'static str, found: String },
    #[error("unsupported {format} version {found} (this build reads version {supported})")]
    UnsupportedVersion { format: &'static str, found: u64, supported: u32 },
    #[error("embedded legend is invalid: {0}")]
    Legend(String),
}

/// Command and parameters that produced a document. Deliberately free of
/// timestamps so that identical runs write identical files.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunHeader {
    pub command: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub run: RunHeader,
    pub legend: TileLegend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categorization: Option<Categorization>,
    pub lnodes: Vec<LNode>,
}

impl ModelFile {
    pub fn new(run: RunHeader, legend: TileLegend, categorization: Option<Categorization>, lnodes: Vec<LNode>) -> Self {
        Self { format: MODEL_FORMAT.into(), version: FORMAT_VERSION, run, legend, categorization, lnodes }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let file: ModelFile = from_json(text, MODEL_FORMAT)?;
        // rebuild through the validating constructor
        TileLegend::new(file.legend.glyphs().map(|(g, t)| (g, t.clone())))
            .map_err(|e| FormatError::Legend(e.to_string()))?;
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub format: String,
    pub version: u32,
    pub run: RunHeader,
    pub distributions: Vec<ScoreDistribution>,
}

impl ScoreFile {
    pub fn new(run: RunHeader, distributions: Vec<ScoreDistribution>) -> Self {
        Self { format: SCORE_FORMAT.into(), version: FORMAT_VERSION, run, distributions }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        from_json(text, SCORE_FORMAT)
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    text
}

fn from_json<T: DeserializeOwned>(text: &str, expected: &'static str) -> Result<T, FormatError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
    let found = value.get("format").and_then(|f| f.as_str()).unwrap_or_default();
    if found != expected {
        return Err(FormatError::WrongFormat { expected, found: found.to_string() });
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != u64::from(FORMAT_VERSION) {
        return Err(FormatError::UnsupportedVersion { format: expected, found: version, supported: FORMAT_VERSION });
    }
    serde_json::from_value(value).map_err(|e| FormatError::Json(e.to_string()))
}
