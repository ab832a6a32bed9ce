use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, read_tensor_header, write_tensor, TensorBlob};
use super::{
    ActivationTrace, CaptureKind, CapturePosition, LesionRecord, PatchRecord, SaliencyProfileRecord, TraceError,
};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const MANIFEST_NAME: &str = "manifest.json";

/// Reference from the manifest to a file inside the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordRef {
    /// Prompt id for activation blobs; omitted for JSON-lines files, which
    /// carry their own ids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Path relative to the bundle directory.
    pub file: String,
    /// Set by the harness when a capture is known to contain non-finite
    /// values.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub model_name: String,
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub corpus_id: String,
    pub capture_kind: CaptureKind,
    #[serde(default)]
    pub capture_position: CapturePosition,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    pub records: Vec<RecordRef>,
}

/// Manifest as it appears on disk, before the capture kind is checked.
#[derive(Deserialize)]
struct RawManifest {
    format_version: u32,
    model_name: String,
    n_layers: usize,
    hidden_dim: usize,
    corpus_id: String,
    capture_kind: String,
    #[serde(default)]
    capture_position: CapturePosition,
    #[serde(default)]
    notes: String,
    records: Vec<RecordRef>,
}

/// A validated bundle. Activation payloads are read on demand; the small
/// JSON-lines records are held in memory.
#[derive(Debug, Clone)]
pub struct RunBundle {
    root: PathBuf,
    manifest: RunManifest,
    activations: BTreeMap<String, RecordRef>,
    saliency: Vec<SaliencyProfileRecord>,
    lesions: Vec<LesionRecord>,
    patches: Vec<PatchRecord>,
}

fn manifest_error(path: &Path, message: impl Into<String>) -> TraceError {
    TraceError::Manifest {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, rel: &str) -> Result<Vec<T>, TraceError> {
    let text = fs::read_to_string(path).map_err(|e| TraceError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| TraceError::InvalidRecord {
                file: rel.to_string(),
                id: format!("line {}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

fn invalid(file: &str, id: &str, message: impl Into<String>) -> TraceError {
    TraceError::InvalidRecord {
        file: file.to_string(),
        id: id.to_string(),
        message: message.into(),
    }
}

/// Loads and cross-validates the bundle described by `manifest_path`
/// (either the `manifest.json` file or its directory).
pub fn load_run(manifest_path: &Path) -> Result<RunBundle, TraceError> {
    let manifest_path = if manifest_path.is_dir() {
        manifest_path.join(MANIFEST_NAME)
    } else {
        manifest_path.to_path_buf()
    };
    if !manifest_path.exists() {
        return Err(TraceError::MissingFile(manifest_path.display().to_string()));
    }
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = fs::read_to_string(&manifest_path).map_err(|e| TraceError::io(&manifest_path, e))?;
    let raw: RawManifest = serde_json::from_str(&text).map_err(|e| manifest_error(&manifest_path, e.to_string()))?;
    let capture_kind = CaptureKind::parse(&raw.capture_kind)
        .ok_or_else(|| TraceError::UnknownCaptureKind(raw.capture_kind.clone()))?;
    if raw.format_version != BUNDLE_FORMAT_VERSION {
        return Err(manifest_error(
            &manifest_path,
            format!("unsupported format_version {}", raw.format_version),
        ));
    }
    if raw.n_layers == 0 || raw.hidden_dim == 0 {
        return Err(manifest_error(
            &manifest_path,
            "n_layers and hidden_dim must be at least 1",
        ));
    }
    let manifest = RunManifest {
        format_version: raw.format_version,
        model_name: raw.model_name,
        n_layers: raw.n_layers,
        hidden_dim: raw.hidden_dim,
        corpus_id: raw.corpus_id,
        capture_kind,
        capture_position: raw.capture_position,
        notes: raw.notes,
        records: raw.records,
    };

    let mut bundle = RunBundle {
        root: root.clone(),
        manifest: manifest.clone(),
        activations: BTreeMap::new(),
        saliency: Vec::new(),
        lesions: Vec::new(),
        patches: Vec::new(),
    };

    for rec in &manifest.records {
        let path = root.join(&rec.file);
        if !path.is_file() {
            return Err(TraceError::MissingFile(rec.file.clone()));
        }
        match capture_kind {
            CaptureKind::Activations => {
                let id = rec.id.clone().ok_or_else(|| {
                    manifest_error(&manifest_path, format!("activation file `{}` has no id", rec.file))
                })?;
                let header = read_tensor_header(&path)?;
                let expected = vec![manifest.n_layers + 1, manifest.hidden_dim];
                if header.shape != expected {
                    return Err(TraceError::TraceShape {
                        id,
                        expected,
                        actual: header.shape,
                    });
                }
                if bundle.activations.insert(id.clone(), rec.clone()).is_some() {
                    return Err(TraceError::DuplicateRecord(id));
                }
            }
            CaptureKind::Saliency => {
                for r in read_jsonl::<SaliencyProfileRecord>(&path, &rec.file)? {
                    if r.per_layer.len() != manifest.n_layers {
                        return Err(invalid(
                            &rec.file,
                            &r.prompt_id,
                            format!("{} layer values, expected {}", r.per_layer.len(), manifest.n_layers),
                        ));
                    }
                    if r.per_layer.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(invalid(
                            &rec.file,
                            &r.prompt_id,
                            "saliency values must be finite and >= 0",
                        ));
                    }
                    bundle.saliency.push(r);
                }
            }
            CaptureKind::LesionResponses => {
                for r in read_jsonl::<LesionRecord>(&path, &rec.file)? {
                    if r.layer >= manifest.n_layers {
                        return Err(invalid(
                            &rec.file,
                            &r.prompt_id,
                            format!("layer {} out of range 0..{}", r.layer, manifest.n_layers),
                        ));
                    }
                    if let Some(s) = r.judge_score {
                        if !(1..=10).contains(&s) {
                            return Err(invalid(
                                &rec.file,
                                &r.prompt_id,
                                format!("judge_score {s} outside 1..=10"),
                            ));
                        }
                    }
                    bundle.lesions.push(r);
                }
            }
            CaptureKind::PatchLogits => {
                for r in read_jsonl::<PatchRecord>(&path, &rec.file)? {
                    if r.layer >= manifest.n_layers {
                        return Err(invalid(
                            &rec.file,
                            &r.pair_id,
                            format!("layer {} out of range 0..{}", r.layer, manifest.n_layers),
                        ));
                    }
                    if r.logits().iter().any(|x| !x.is_finite()) {
                        return Err(invalid(&rec.file, &r.pair_id, "non-finite logit"));
                    }
                    bundle.patches.push(r);
                }
            }
        }
    }

    let mut keys = BTreeSet::new();
    for r in &bundle.lesions {
        if !keys.insert((r.prompt_id.clone(), r.layer, None)) {
            return Err(TraceError::DuplicateRecord(format!("{}@{}", r.prompt_id, r.layer)));
        }
    }
    for r in &bundle.patches {
        if !keys.insert((r.pair_id.clone(), r.layer, Some(r.site))) {
            return Err(TraceError::DuplicateRecord(format!(
                "{}@{}/{}",
                r.pair_id,
                r.layer,
                r.site.as_str()
            )));
        }
    }
    let mut ids = BTreeSet::new();
    for r in &bundle.saliency {
        if !ids.insert(r.prompt_id.clone()) {
            return Err(TraceError::DuplicateRecord(r.prompt_id.clone()));
        }
    }
    Ok(bundle)
}

impl RunBundle {
    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn n_layers(&self) -> usize {
        self.manifest.n_layers
    }

    pub fn capture_kind(&self) -> CaptureKind {
        self.manifest.capture_kind
    }

    /// Number of prompt- or site-level records in the bundle.
    pub fn len(&self) -> usize {
        match self.manifest.capture_kind {
            CaptureKind::Activations => self.activations.len(),
            CaptureKind::Saliency => self.saliency.len(),
            CaptureKind::LesionResponses => self.lesions.len(),
            CaptureKind::PatchLogits => self.patches.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Prompt ids with activation traces, sorted.
    pub fn prompt_ids(&self) -> impl Iterator<Item = &str> {
        self.activations.keys().map(String::as_str)
    }

    pub fn read_activation(&self, prompt_id: &str) -> Result<ActivationTrace, TraceError> {
        let rec = self
            .activations
            .get(prompt_id)
            .ok_or_else(|| TraceError::UnknownRecord(prompt_id.to_string()))?;
        let matrix = read_tensor(&self.root.join(&rec.file))?;
        let expected = vec![self.manifest.n_layers + 1, self.manifest.hidden_dim];
        if matrix.shape != expected {
            return Err(TraceError::TraceShape {
                id: prompt_id.to_string(),
                expected,
                actual: matrix.shape,
            });
        }
        if !rec.degenerate && !matrix.all_finite() {
            return Err(TraceError::NonFinite(prompt_id.to_string()));
        }
        Ok(ActivationTrace {
            prompt_id: prompt_id.to_string(),
            matrix,
        })
    }

    fn expect_kind(&self, kind: CaptureKind) -> Result<(), TraceError> {
        if self.manifest.capture_kind == kind {
            Ok(())
        } else {
            Err(TraceError::WrongKind {
                expected: kind,
                actual: self.manifest.capture_kind,
            })
        }
    }

    pub fn saliency_records(&self) -> Result<&[SaliencyProfileRecord], TraceError> {
        self.expect_kind(CaptureKind::Saliency)?;
        Ok(&self.saliency)
    }

    pub fn lesion_records(&self) -> Result<&[LesionRecord], TraceError> {
        self.expect_kind(CaptureKind::LesionResponses)?;
        Ok(&self.lesions)
    }

    pub fn patch_records(&self) -> Result<&[PatchRecord], TraceError> {
        self.expect_kind(CaptureKind::PatchLogits)?;
        Ok(&self.patches)
    }
}

fn file_stem(index: usize, id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:05}_{clean}")
}

/// Writes a bundle directory. One writer per bundle.
pub struct BundleWriter {
    root: PathBuf,
    manifest: RunManifest,
}

impl BundleWriter {
    pub fn create(
        root: &Path,
        model_name: &str,
        n_layers: usize,
        hidden_dim: usize,
        corpus_id: &str,
        capture_kind: CaptureKind,
    ) -> Result<Self, TraceError> {
        fs::create_dir_all(root).map_err(|e| TraceError::io(root, e))?;
        Ok(BundleWriter {
            root: root.to_path_buf(),
            manifest: RunManifest {
                format_version: BUNDLE_FORMAT_VERSION,
                model_name: model_name.to_string(),
                n_layers,
                hidden_dim,
                corpus_id: corpus_id.to_string(),
                capture_kind,
                capture_position: CapturePosition::LastToken,
                notes: String::new(),
                records: Vec::new(),
            },
        })
    }

    pub fn notes(&mut self, notes: impl Into<String>) -> &mut Self {
        self.manifest.notes = notes.into();
        self
    }

    pub fn add_activation(&mut self, prompt_id: &str, matrix: &TensorBlob) -> Result<(), TraceError> {
        self.expect_kind(CaptureKind::Activations)?;
        let expected = vec![self.manifest.n_layers + 1, self.manifest.hidden_dim];
        if matrix.shape != expected {
            return Err(TraceError::TraceShape {
                id: prompt_id.to_string(),
                expected,
                actual: matrix.shape.clone(),
            });
        }
        let dir = self.root.join("activations");
        fs::create_dir_all(&dir).map_err(|e| TraceError::io(&dir, e))?;
        let rel = format!("activations/{}.bin", file_stem(self.manifest.records.len(), prompt_id));
        write_tensor(matrix, &self.root.join(&rel))?;
        self.manifest.records.push(RecordRef {
            id: Some(prompt_id.to_string()),
            file: rel,
            degenerate: !matrix.all_finite(),
        });
        Ok(())
    }

    fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<(), TraceError> {
        let dir = self.root.join("records");
        fs::create_dir_all(&dir).map_err(|e| TraceError::io(&dir, e))?;
        let rel = format!("records/{name}.jsonl");
        let path = self.root.join(&rel);
        let mut file = fs::File::create(&path).map_err(|e| TraceError::io(&path, e))?;
        for r in records {
            let line = serde_json::to_string(r).expect("records serialize");
            writeln!(file, "{line}").map_err(|e| TraceError::io(&path, e))?;
        }
        self.manifest.records.push(RecordRef {
            id: None,
            file: rel,
            degenerate: false,
        });
        Ok(())
    }

    fn expect_kind(&self, kind: CaptureKind) -> Result<(), TraceError> {
        if self.manifest.capture_kind == kind {
            Ok(())
        } else {
            Err(TraceError::WrongKind {
                expected: kind,
                actual: self.manifest.capture_kind,
            })
        }
    }

    pub fn add_saliency(&mut self, name: &str, records: &[SaliencyProfileRecord]) -> Result<(), TraceError> {
        self.expect_kind(CaptureKind::Saliency)?;
        self.write_jsonl(name, records)
    }

    pub fn add_lesions(&mut self, name: &str, records: &[LesionRecord]) -> Result<(), TraceError> {
        self.expect_kind(CaptureKind::LesionResponses)?;
        self.write_jsonl(name, records)
    }

    pub fn add_patches(&mut self, name: &str, records: &[PatchRecord]) -> Result<(), TraceError> {
        self.expect_kind(CaptureKind::PatchLogits)?;
        self.write_jsonl(name, records)
    }

    /// Writes `manifest.json` and returns its path.
    pub fn finish(self) -> Result<PathBuf, TraceError> {
        let path = self.root.join(MANIFEST_NAME);
        let mut json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        json.push('\n');
        fs::write(&path, json).map_err(|e| TraceError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::PatchSite;

    fn trace(rows: usize, dim: usize, fill: f32) -> TensorBlob {
        TensorBlob::new(vec![rows, dim], vec![fill; rows * dim]).unwrap()
    }

    #[test]
    fn three_activation_traces() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = BundleWriter::create(dir.path(), "tiny", 4, 8, "c", CaptureKind::Activations).unwrap();
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            w.add_activation(id, &trace(5, 8, i as f32)).unwrap();
        }
        let manifest = w.finish().unwrap();
        let bundle = load_run(&manifest).unwrap();
        assert_eq!(bundle.len(), 3);
        assert_eq!(bundle.read_activation("b").unwrap().row(4), &[1.0; 8]);
        assert!(matches!(
            bundle.read_activation("zzz"),
            Err(TraceError::UnknownRecord(_))
        ));
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = BundleWriter::create(dir.path(), "tiny", 4, 8, "c", CaptureKind::Activations).unwrap();
        w.add_activation("a", &trace(5, 8, 0.0)).unwrap();
        let manifest = w.finish().unwrap();
        fs::remove_file(dir.path().join("activations/00000_a.bin")).unwrap();
        assert_eq!(
            load_run(&manifest).unwrap_err(),
            TraceError::MissingFile("activations/00000_a.bin".into())
        );
    }

    #[test]
    fn extra_row_is_a_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let w = BundleWriter::create(dir.path(), "tiny", 4, 8, "c", CaptureKind::Activations).unwrap();
        // Writer refuses; forge the file behind its back.
        fs::create_dir_all(dir.path().join("activations")).unwrap();
        write_tensor(&trace(6, 8, 0.0), &dir.path().join("activations/x.bin")).unwrap();
        let mut manifest = w.manifest.clone();
        manifest.records.push(RecordRef {
            id: Some("x".into()),
            file: "activations/x.bin".into(),
            degenerate: false,
        });
        fs::write(
            dir.path().join("manifest.json"),
            serde_json::to_string(&manifest).unwrap(),
        )
        .unwrap();
        match load_run(dir.path()).unwrap_err() {
            TraceError::TraceShape { expected, actual, .. } => {
                assert_eq!(expected, vec![5, 8]);
                assert_eq!(actual, vec![6, 8]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_capture_kind() {
        let dir = tempfile::tempdir().unwrap();
        let json = r#"{"format_version":1,"model_name":"m","n_layers":2,"hidden_dim":2,
            "corpus_id":"c","capture_kind":"attention_maps","records":[]}"#;
        fs::write(dir.path().join("manifest.json"), json).unwrap();
        assert_eq!(
            load_run(dir.path()).unwrap_err(),
            TraceError::UnknownCaptureKind("attention_maps".into())
        );
    }

    #[test]
    fn jsonl_records_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = BundleWriter::create(dir.path(), "tiny", 3, 8, "c", CaptureKind::LesionResponses).unwrap();
        let rec = LesionRecord {
            prompt_id: "p".into(),
            layer: 3,
            original_response: "a".into(),
            lesioned_response: "b".into(),
            judge_score: None,
            judge_reply: None,
        };
        w.add_lesions("lesions", &[rec]).unwrap();
        let manifest = w.finish().unwrap();
        assert!(matches!(load_run(&manifest), Err(TraceError::InvalidRecord { .. })));
    }

    #[test]
    fn patch_records_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = BundleWriter::create(dir.path(), "tiny", 2, 8, "c", CaptureKind::PatchLogits).unwrap();
        let rec = PatchRecord {
            pair_id: "p".into(),
            layer: 1,
            site: PatchSite::Mlp,
            logit_clean_r: 3.0,
            logit_clean_rp: 1.0,
            logit_corrupt_r: 0.0,
            logit_corrupt_rp: 2.0,
            logit_patched_r: 1.0,
            logit_patched_rp: 1.0,
        };
        w.add_patches("patches", std::slice::from_ref(&rec)).unwrap();
        let bundle = load_run(&w.finish().unwrap()).unwrap();
        assert_eq!(bundle.patch_records().unwrap(), &[rec]);
        assert!(bundle.lesion_records().is_err());
    }
}
