use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use medmap_core::carto::MapParams;
use medmap_core::geometry::{DEFAULT_ANISOTROPY_K, DEFAULT_RESAMPLES};
use medmap_core::manifold::UmapParams;
use medmap_core::prompt::CorpusConfig;
use medmap_core::Concept;
use medmap_judge::JudgeConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError};

/// Trace bundle directories per analysis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundlePaths {
    pub umap: Vec<PathBuf>,
    pub saliency: Vec<PathBuf>,
    pub lesion: Vec<PathBuf>,
    pub patch: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub n_resamples: usize,
    pub umap: UmapParams,
    /// Embedding dimension silhouettes are computed in.
    pub silhouette_dim: usize,
    pub anisotropy_k: usize,
    /// Labels each concept's silhouette is computed under.
    pub label_keys: BTreeMap<Concept, Vec<String>>,
    pub map: MapParams,
}

pub fn default_label_keys() -> BTreeMap<Concept, Vec<String>> {
    BTreeMap::from([
        (Concept::Symptoms, vec!["group".to_string()]),
        (Concept::Diseases, vec!["specialty".to_string()]),
        (Concept::Drugs, vec!["specialty".to_string(), "mechanism".to_string()]),
        (Concept::Progression, vec!["disease".to_string()]),
    ])
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            n_resamples: DEFAULT_RESAMPLES,
            umap: UmapParams::default(),
            silhouette_dim: 30,
            anisotropy_k: DEFAULT_ANISOTROPY_K,
            label_keys: default_label_keys(),
            map: MapParams::default(),
        }
    }
}

/// Everything one pipeline run needs. Relative paths in a config file are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Corpus manifest: written by `gen-prompts`, read for labels elsewhere.
    /// Defaults to `<out_dir>/corpus.json`.
    pub corpus: Option<PathBuf>,
    /// Selection for `gen-prompts`; all concepts and analyses when absent.
    pub corpus_spec: Option<CorpusConfig>,
    pub substitutions: Option<PathBuf>,
    pub bundles: BundlePaths,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; all cores when absent.
    pub jobs: Option<usize>,
    /// Restricts analyses and the map to these concepts.
    pub concepts: Option<Vec<Concept>>,
    pub metrics: MetricParams,
    pub judge: Option<JudgeConfig>,
    /// Alternative to `judge`: path to a judge config file.
    pub judge_config: Option<PathBuf>,
    /// Verdict cache; defaults to `<out_dir>/judge_cache.jsonl`.
    pub judge_cache: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            corpus_spec: None,
            substitutions: None,
            bundles: BundlePaths::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            jobs: None,
            concepts: None,
            metrics: MetricParams::default(),
            judge: None,
            judge_config: None,
            judge_cache: None,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::new("cli", format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| e.file(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let b = &mut self.bundles;
        for p in b
            .umap
            .iter_mut()
            .chain(&mut b.saliency)
            .chain(&mut b.lesion)
            .chain(&mut b.patch)
        {
            resolve(base, p);
        }
        for p in [
            &mut self.corpus,
            &mut self.substitutions,
            &mut self.judge_config,
            &mut self.judge_cache,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        resolve(base, &mut self.out_dir);
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.corpus.clone().unwrap_or_else(|| self.out_dir.join("corpus.json"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }

    pub fn judge_cache_path(&self) -> PathBuf {
        self.judge_cache
            .clone()
            .unwrap_or_else(|| self.out_dir.join("judge_cache.jsonl"))
    }

    pub fn wants(&self, concept: Concept) -> bool {
        self.concepts.as_ref().is_none_or(|c| c.contains(&concept))
    }

    pub fn judge_settings(&self) -> Result<JudgeConfig, CliError> {
        let cfg = match (&self.judge, &self.judge_config) {
            (Some(_), Some(_)) => return Err(CliError::new("cli", "set either `judge` or `judge_config`, not both")),
            (Some(j), None) => j.clone(),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::new("judge-client", format!("malformed judge config: {e}")).file(path))?
            }
            (None, None) => return Err(CliError::new("cli", "no judge configured (`judge` or `judge_config`)")),
        };
        cfg.validate().map_err(|e| CliError::new("judge-client", e))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.metrics.n_resamples < medmap_core::geometry::MIN_RESAMPLES {
            return Err(CliError::new(
                "cli",
                format!("n_resamples must be at least {}", medmap_core::geometry::MIN_RESAMPLES),
            ));
        }
        if self.metrics.silhouette_dim == 0 {
            return Err(CliError::new("cli", "silhouette_dim must be positive"));
        }
        if self.jobs == Some(0) {
            return Err(CliError::new("cli", "jobs must be at least 1"));
        }
        Ok(())
    }
}

/// Fails on the first path that does not exist, before any work starts.
pub(crate) fn require_paths<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<(), CliError> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::new("cli", "referenced path does not exist").file(p));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.json");
        std::fs::write(
            &path,
            r#"{"bundles": {"umap": ["traces/a"]}, "out_dir": "results", "corpus": "/abs/corpus.json",
                "metrics": {"n_resamples": 200, "map": {"sigma": 2.0, "window": 3, "percentile": 75.0, "min_len": 2, "max_intervals": 3}}}"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.bundles.umap, vec![dir.path().join("traces/a")]);
        assert_eq!(cfg.out_dir, dir.path().join("results"));
        assert_eq!(cfg.corpus_path(), PathBuf::from("/abs/corpus.json"));
        assert_eq!(cfg.metrics.n_resamples, 200);
        assert_eq!(cfg.metrics.umap, UmapParams::default());
        assert_eq!(cfg.metrics.map.sigma, 2.0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(PipelineConfig::from_json(r#"{"out": "x"}"#).is_err());
    }

    #[test]
    fn judge_settings_need_exactly_one_source() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.judge_settings().is_err());
        cfg.judge = Some(JudgeConfig::default());
        assert!(cfg.judge_settings().is_ok());
        cfg.judge_config = Some("j.json".into());
        assert!(cfg.judge_settings().is_err());
    }
}
