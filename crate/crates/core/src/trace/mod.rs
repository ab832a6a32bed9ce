//! Trace bundles: the on-disk exchange format between the extraction
//! harness (writer) and the analyses (readers).
//!
//! A bundle is a directory holding `manifest.json`, dense activations as
//! `activations/*.bin` tensor blobs, and small per-prompt records as
//! `records/*.jsonl`. See `docs/trace-format.md` for the full layout.

mod bundle;
mod tensor;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundle::{load_run, BundleWriter, RecordRef, RunBundle, RunManifest, BUNDLE_FORMAT_VERSION};
pub use tensor::{
    parse_header, read_tensor, read_tensor_header, write_tensor, DType, TensorBlob, TensorHeader, FORMAT_VERSION, MAGIC,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("bad magic bytes {0:?}, expected \"LMCT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor format version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("truncated tensor: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("shape implies {expected} elements but payload holds {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("tensor has {0} dimensions, at most 255 supported")]
    TooManyDims(usize),
    #[error("dimension {0} does not fit in memory")]
    DimensionOverflow(u64),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("referenced file `{0}` does not exist")]
    MissingFile(String),
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("unknown capture_kind `{0}`")]
    UnknownCaptureKind(String),
    #[error("record `{id}` has shape {actual:?}, expected {expected:?}")]
    TraceShape {
        id: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("{file}: record `{id}`: {message}")]
    InvalidRecord { file: String, id: String, message: String },
    #[error("record `{0}` appears more than once")]
    DuplicateRecord(String),
    #[error("no record `{0}` in bundle")]
    UnknownRecord(String),
    #[error("record `{0}` contains non-finite values")]
    NonFinite(String),
    #[error("bundle holds {actual} records, this operation needs {expected}")]
    WrongKind { expected: CaptureKind, actual: CaptureKind },
}

impl TraceError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        TraceError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

/// What a bundle contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureKind {
    Activations,
    Saliency,
    LesionResponses,
    PatchLogits,
}

impl CaptureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptureKind::Activations => "activations",
            CaptureKind::Saliency => "saliency",
            CaptureKind::LesionResponses => "lesion_responses",
            CaptureKind::PatchLogits => "patch_logits",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            CaptureKind::Activations,
            CaptureKind::Saliency,
            CaptureKind::LesionResponses,
            CaptureKind::PatchLogits,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

impl fmt::Display for CaptureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Token position at which activations were read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CapturePosition {
    #[default]
    LastToken,
}

/// Residual-stream vectors for one prompt: row 0 is the embedding output,
/// row `l` the output of block `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub prompt_id: String,
    pub matrix: TensorBlob,
}

impl ActivationTrace {
    pub fn n_rows(&self) -> usize {
        self.matrix.shape.first().copied().unwrap_or(0)
    }

    pub fn hidden_dim(&self) -> usize {
        self.matrix.shape.get(1).copied().unwrap_or(0)
    }

    pub fn row(&self, row: usize) -> &[f32] {
        let d = self.hidden_dim();
        &self.matrix.data[row * d..(row + 1) * d]
    }
}

/// Mean absolute gradient per block for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyProfileRecord {
    pub prompt_id: String,
    pub per_layer: Vec<f64>,
}

/// Original and lesioned generations for one (prompt, block).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionRecord {
    pub prompt_id: String,
    pub layer: usize,
    pub original_response: String,
    pub lesioned_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_score: Option<u8>,
    /// Raw judge reply the score was parsed from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_reply: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchSite {
    Attention,
    Mlp,
}

impl PatchSite {
    pub const ALL: [PatchSite; 2] = [PatchSite::Attention, PatchSite::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            PatchSite::Attention => "attention",
            PatchSite::Mlp => "mlp",
        }
    }
}

/// Final-position logits of the clean-expected (`r`) and corrupt-expected
/// (`rp`) answer tokens under the clean, corrupt and patched runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub pair_id: String,
    pub layer: usize,
    pub site: PatchSite,
    pub logit_clean_r: f64,
    pub logit_clean_rp: f64,
    pub logit_corrupt_r: f64,
    pub logit_corrupt_rp: f64,
    pub logit_patched_r: f64,
    pub logit_patched_rp: f64,
}

impl PatchRecord {
    pub fn logits(&self) -> [f64; 6] {
        [
            self.logit_clean_r,
            self.logit_clean_rp,
            self.logit_corrupt_r,
            self.logit_corrupt_rp,
            self.logit_patched_r,
            self.logit_patched_rp,
        ]
    }
}
