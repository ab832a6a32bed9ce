//! Prompt corpora for the five medical concept areas.
//!
//! Templates carry `{NAME}` placeholders that are expanded against
//! substitution lists (see [`template`]); [`corpus`] assembles the expanded
//! records into a [`CorpusManifest`] that the extraction harness consumes.

pub mod corpus;
pub mod template;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::{Analysis, Concept};

pub use corpus::{build_corpus, CorpusConfig, DoseSweep, SubstitutionData};
pub use template::{expand_template, PromptTemplate, SubstitutionValue, Substitutions};

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("no substitution list for placeholder `{0}`")]
    MissingSubstitution(String),
    #[error("substitution list for placeholder `{0}` is empty")]
    EmptySubstitution(String),
    #[error("value `{value}` of placeholder `{placeholder}` has no label `{attr}`")]
    MissingAttribute {
        placeholder: String,
        attr: String,
        value: String,
    },
    #[error("template `{id}`: {reason}")]
    InvalidTemplate { id: String, reason: String },
    #[error("patching pair `{pair_id}`: {reason}")]
    InvalidPair { pair_id: String, reason: String },
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("unknown analysis `{0}`")]
    UnknownAnalysis(String),
    #[error("corpus configuration names no {0}")]
    EmptySelection(&'static str),
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("{0}")]
    Io(String),
    #[error("malformed JSON: {0}")]
    Json(String),
}

/// A label attached to a prompt: integer, real number or free text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Int(i64),
    Num(f64),
    Text(String),
}

impl LabelValue {
    /// Integers and decimals become numeric labels, everything else text.
    pub fn infer(raw: &str) -> Self {
        if let Ok(i) = raw.parse::<i64>() {
            return LabelValue::Int(i);
        }
        match raw.parse::<f64>() {
            Ok(x) if x.is_finite() => LabelValue::Num(x),
            _ => LabelValue::Text(raw.to_string()),
        }
    }

    pub fn render(&self) -> String {
        match self {
            LabelValue::Int(i) => i.to_string(),
            LabelValue::Num(x) => x.to_string(),
            LabelValue::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            LabelValue::Int(i) => Some(*i as f64),
            LabelValue::Num(x) => Some(*x),
            LabelValue::Text(_) => None,
        }
    }
}

/// One fully substituted prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub concept: Concept,
    pub analysis: Analysis,
    pub text: String,
    #[serde(default)]
    pub labels: BTreeMap<String, LabelValue>,
    #[serde(default)]
    pub expected_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
}

impl PromptRecord {
    pub fn label(&self, key: &str) -> Option<&LabelValue> {
        self.labels.get(key)
    }
}

/// Value domain observed for one label key across a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LabelDomain {
    Integer { min: i64, max: i64 },
    Number { min: f64, max: f64 },
    Categorical { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub seed: u64,
    pub prompts: Vec<PromptRecord>,
    pub label_schemas: BTreeMap<String, LabelDomain>,
}

/// Derives a label schema from the labels present on `prompts`.
pub fn infer_label_schemas(prompts: &[PromptRecord]) -> BTreeMap<String, LabelDomain> {
    let mut by_key: BTreeMap<&str, Vec<&LabelValue>> = BTreeMap::new();
    for p in prompts {
        for (k, v) in &p.labels {
            by_key.entry(k.as_str()).or_default().push(v);
        }
    }
    by_key
        .into_iter()
        .map(|(key, values)| {
            let domain = if values.iter().all(|v| matches!(v, LabelValue::Int(_))) {
                let ints = values.iter().filter_map(|v| match v {
                    LabelValue::Int(i) => Some(*i),
                    _ => None,
                });
                let (min, max) = ints.fold((i64::MAX, i64::MIN), |(lo, hi), i| (lo.min(i), hi.max(i)));
                LabelDomain::Integer { min, max }
            } else if values.iter().all(|v| v.as_f64().is_some()) {
                let (min, max) = values
                    .iter()
                    .filter_map(|v| v.as_f64())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
                LabelDomain::Number { min, max }
            } else {
                let set: BTreeSet<String> = values.iter().map(|v| v.render()).collect();
                LabelDomain::Categorical {
                    values: set.into_iter().collect(),
                }
            };
            (key.to_string(), domain)
        })
        .collect()
}

impl CorpusManifest {
    pub fn new(corpus_id: impl Into<String>, seed: u64, prompts: Vec<PromptRecord>) -> Self {
        let label_schemas = infer_label_schemas(&prompts);
        CorpusManifest {
            corpus_id: corpus_id.into(),
            seed,
            prompts,
            label_schemas,
        }
    }

    /// Checks id uniqueness, substitution completeness, stage range and
    /// patching pair structure.
    pub fn validate(&self) -> Result<(), PromptError> {
        let mut seen = HashSet::new();
        let mut pairs: BTreeMap<&str, Vec<&PromptRecord>> = BTreeMap::new();
        for p in &self.prompts {
            if !seen.insert(p.prompt_id.as_str()) {
                return Err(PromptError::InvalidCorpus(format!(
                    "duplicate prompt_id `{}`",
                    p.prompt_id
                )));
            }
            if template::has_placeholder(&p.text) {
                return Err(PromptError::InvalidCorpus(format!(
                    "prompt `{}` has unsubstituted placeholders",
                    p.prompt_id
                )));
            }
            if p.concept == Concept::Progression {
                match p.label("stage") {
                    Some(LabelValue::Int(s)) if (1..=9).contains(s) => {}
                    other => {
                        return Err(PromptError::InvalidCorpus(format!(
                            "prompt `{}` has progression stage {:?}, expected 1..=9",
                            p.prompt_id, other
                        )))
                    }
                }
            }
            if let Some(pair) = &p.pair_id {
                pairs.entry(pair.as_str()).or_default().push(p);
            } else if p.analysis == Analysis::Patching {
                return Err(PromptError::InvalidPair {
                    pair_id: p.prompt_id.clone(),
                    reason: "patching prompt without pair_id".into(),
                });
            }
        }
        for (pair_id, members) in pairs {
            let ok = members.len() == 2
                && !members[0].expected_answers.is_empty()
                && !members[1].expected_answers.is_empty()
                && members[0].expected_answers != members[1].expected_answers;
            if !ok {
                return Err(PromptError::InvalidPair {
                    pair_id: pair_id.to_string(),
                    reason: "needs exactly two members with distinct expected answers".into(),
                });
            }
        }
        Ok(())
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("corpus manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, PromptError> {
        serde_json::from_str(json).map_err(|e| PromptError::Json(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), PromptError> {
        fs::write(path, self.to_json()).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn get(&self, prompt_id: &str) -> Option<&PromptRecord> {
        self.prompts.iter().find(|p| p.prompt_id == prompt_id)
    }

    /// Index by prompt id.
    pub fn index(&self) -> BTreeMap<&str, &PromptRecord> {
        self.prompts.iter().map(|p| (p.prompt_id.as_str(), p)).collect()
    }
}
