use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Medical knowledge area probed by a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Concept {
    Age,
    Symptoms,
    Diseases,
    Progression,
    Drugs,
    Dosages,
}

/// Interpretability method a prompt is designed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Umap,
    Saliency,
    Lesioning,
    Patching,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown {kind} name `{name}`")]
pub struct ParseNameError {
    pub kind: &'static str,
    pub name: String,
}

impl Concept {
    pub const ALL: [Concept; 6] = [
        Concept::Age,
        Concept::Symptoms,
        Concept::Diseases,
        Concept::Progression,
        Concept::Drugs,
        Concept::Dosages,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Concept::Age => "age",
            Concept::Symptoms => "symptoms",
            Concept::Diseases => "diseases",
            Concept::Progression => "progression",
            Concept::Drugs => "drugs",
            Concept::Dosages => "dosages",
        }
    }
}

impl Analysis {
    pub const ALL: [Analysis; 4] = [
        Analysis::Umap,
        Analysis::Saliency,
        Analysis::Lesioning,
        Analysis::Patching,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Umap => "umap",
            Analysis::Saliency => "saliency",
            Analysis::Lesioning => "lesioning",
            Analysis::Patching => "patching",
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Concept {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Concept::ALL
            .into_iter()
            .find(|c| c.as_str() == lower)
            .ok_or_else(|| ParseNameError {
                kind: "concept",
                name: s.to_string(),
            })
    }
}

impl FromStr for Analysis {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let lower = match lower.as_str() {
            "lesion" => "lesioning",
            "patch" => "patching",
            other => other,
        };
        Analysis::ALL
            .into_iter()
            .find(|a| a.as_str() == lower)
            .ok_or_else(|| ParseNameError {
                kind: "analysis",
                name: s.to_string(),
            })
    }
}
