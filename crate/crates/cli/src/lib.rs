//! Pipeline orchestration behind the `medmap` binary: corpus generation,
//! metric reports per analysis, judging of lesion transcripts and the final
//! map. Every command writes deterministic files under the output directory
//! and returns a [`Summary`] for standard output.

pub mod config;
mod error;
mod umap;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use medmap_core::carto::{assemble_map, render_map, LlmMap};
use medmap_core::causal::{lesion_profile, patching_profile, saliency_profile, CausalError};
use medmap_core::prompt::{build_corpus, CorpusConfig, CorpusManifest, PromptRecord, SubstitutionData};
use medmap_core::seed::derive_seed;
use medmap_core::trace::{
    load_run, BundleWriter, CaptureKind, LesionRecord, PatchRecord, RunBundle, SaliencyProfileRecord,
};
use medmap_core::{Analysis, Concept, MetricSeries};
use medmap_judge::{Judge, JudgeCache};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use config::{BundlePaths, MetricParams, PipelineConfig};
pub use error::CliError;

use config::require_paths;
use error::io_error;
use umap::{analyze_concept, ConceptActivations};

pub const REPORT_SCHEMA: &str = "medmap-report/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AnalyzeTarget {
    Umap,
    Saliency,
    Lesion,
    Patch,
}

impl AnalyzeTarget {
    pub fn analysis(self) -> Analysis {
        match self {
            AnalyzeTarget::Umap => Analysis::Umap,
            AnalyzeTarget::Saliency => Analysis::Saliency,
            AnalyzeTarget::Lesion => Analysis::Lesioning,
            AnalyzeTarget::Patch => Analysis::Patching,
        }
    }

    fn capture_kind(self) -> CaptureKind {
        match self {
            AnalyzeTarget::Umap => CaptureKind::Activations,
            AnalyzeTarget::Saliency => CaptureKind::Saliency,
            AnalyzeTarget::Lesion => CaptureKind::LesionResponses,
            AnalyzeTarget::Patch => CaptureKind::PatchLogits,
        }
    }

    fn bundles(self, cfg: &PipelineConfig) -> &[PathBuf] {
        match self {
            AnalyzeTarget::Umap => &cfg.bundles.umap,
            AnalyzeTarget::Saliency => &cfg.bundles.saliency,
            AnalyzeTarget::Lesion => &cfg.bundles.lesion,
            AnalyzeTarget::Patch => &cfg.bundles.patch,
        }
    }
}

/// Machine-readable result of one command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub command: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub counts: BTreeMap<String, usize>,
}

impl Summary {
    fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            seed,
            outputs: Vec::new(),
            warnings: Vec::new(),
            counts: BTreeMap::new(),
        }
    }
}

/// One analysis' per-layer series plus analysis-specific details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema: String,
    pub analysis: Analysis,
    pub model_name: String,
    pub n_layers: usize,
    /// Top-level seed and the seed derived from it for this analysis.
    pub seed: u64,
    pub stage_seed: u64,
    pub n_resamples: usize,
    pub inputs: Vec<String>,
    pub series: Vec<MetricSeries>,
    pub warnings: Vec<String>,
    #[serde(default)]
    pub details: BTreeMap<String, Value>,
}

pub fn report_path(cfg: &PipelineConfig, analysis: Analysis) -> PathBuf {
    cfg.reports_dir().join(format!("{}.json", analysis.as_str()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::new("cli", format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn cmd_gen_prompts(cfg: &PipelineConfig) -> Result<Summary, CliError> {
    cfg.validate()?;
    require_paths(cfg.substitutions.as_deref())?;
    let spec = match &cfg.corpus_spec {
        Some(spec) => CorpusConfig {
            seed: cfg.seed,
            ..spec.clone()
        },
        None => {
            let concepts: Vec<&str> = Concept::ALL
                .iter()
                .filter(|c| cfg.wants(**c))
                .map(|c| c.as_str())
                .collect();
            let analyses: Vec<&str> = Analysis::ALL.iter().map(|a| a.as_str()).collect();
            CorpusConfig {
                seed: cfg.seed,
                ..CorpusConfig::new(&concepts, &analyses)
            }
        }
    };
    let data = match &cfg.substitutions {
        Some(p) => SubstitutionData::read(p).map_err(|e| CliError::new("prompt-forge", e).file(p))?,
        None => SubstitutionData::builtin(),
    };
    let manifest = build_corpus(&spec, &data).map_err(|e| CliError::new("prompt-forge", e))?;
    let path = cfg.corpus_path();
    write_text(&path, &manifest.to_json())?;

    let mut summary = Summary::new("gen-prompts", cfg.seed);
    summary.outputs.push(path.display().to_string());
    summary.counts.insert("prompts".into(), manifest.prompts.len());
    for p in &manifest.prompts {
        *summary
            .counts
            .entry(format!("{}/{}", p.concept, p.analysis.as_str()))
            .or_default() += 1;
    }
    Ok(summary)
}

fn load_corpus(path: &Path) -> Result<CorpusManifest, CliError> {
    CorpusManifest::read(path).map_err(|e| CliError::new("prompt-forge", e).file(path))
}

/// Maps record ids to concepts via the corpus, falling back to the
/// `<concept>-...` id prefix for records the corpus does not list.
struct ConceptIndex<'a> {
    prompts: BTreeMap<&'a str, &'a PromptRecord>,
    pairs: BTreeMap<&'a str, Concept>,
}

impl<'a> ConceptIndex<'a> {
    fn new(corpus: Option<&'a CorpusManifest>) -> Self {
        let mut prompts = BTreeMap::new();
        let mut pairs = BTreeMap::new();
        for p in corpus.map(|c| c.prompts.as_slice()).unwrap_or_default() {
            prompts.insert(p.prompt_id.as_str(), p);
            if let Some(pair) = &p.pair_id {
                pairs.insert(pair.as_str(), p.concept);
            }
        }
        Self { prompts, pairs }
    }

    fn resolve(&self, id: &str, listed: Option<Concept>, file: &Path) -> Result<Concept, CliError> {
        listed
            .or_else(|| id.split('-').next().and_then(|p| p.parse().ok()))
            .ok_or_else(|| {
                CliError::new("cli", "record is not in the corpus and its id names no concept")
                    .file(file)
                    .record(id)
            })
    }

    fn prompt_concept(&self, id: &str, file: &Path) -> Result<Concept, CliError> {
        self.resolve(id, self.prompts.get(id).map(|p| p.concept), file)
    }

    fn pair_concept(&self, id: &str, file: &Path) -> Result<Concept, CliError> {
        self.resolve(id, self.pairs.get(id).copied(), file)
    }
}

struct Bundles {
    items: Vec<(PathBuf, RunBundle)>,
    model_name: String,
    n_layers: usize,
}

fn load_bundles(paths: &[PathBuf], kind: CaptureKind, what: &str) -> Result<Bundles, CliError> {
    if paths.is_empty() {
        return Err(CliError::new("cli", format!("no {what} bundles configured")));
    }
    let mut items = Vec::new();
    for path in paths {
        let bundle = load_run(path).map_err(|e| CliError::new("trace-store", e).file(path))?;
        if bundle.capture_kind() != kind {
            return Err(CliError::new(
                "trace-store",
                format!("bundle holds {} records, expected {}", bundle.capture_kind(), kind),
            )
            .file(path));
        }
        if bundle.is_empty() {
            return Err(CliError::new("trace-store", "no records in bundle").file(path));
        }
        items.push((path.clone(), bundle));
    }
    let first = items[0].1.manifest();
    let (model_name, n_layers) = (first.model_name.clone(), first.n_layers);
    for (path, b) in &items[1..] {
        if b.manifest().model_name != model_name || b.n_layers() != n_layers {
            return Err(CliError::new(
                "trace-store",
                format!(
                    "bundle is from {} ({} layers), others from {model_name} ({n_layers} layers)",
                    b.manifest().model_name,
                    b.n_layers()
                ),
            )
            .file(path));
        }
    }
    Ok(Bundles {
        items,
        model_name,
        n_layers,
    })
}

/// Judged copies of lesion bundles live under `<out>/judged/NN-<name>`.
fn judged_path(cfg: &PipelineConfig, index: usize, source: &Path) -> PathBuf {
    let name = source
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bundle".into());
    cfg.out_dir.join("judged").join(format!("{index:02}-{name}"))
}

pub fn cmd_analyze(cfg: &PipelineConfig, target: AnalyzeTarget, export_embeddings: bool) -> Result<Summary, CliError> {
    cfg.validate()?;
    let mut inputs: Vec<PathBuf> = target.bundles(cfg).to_vec();
    if inputs.is_empty() {
        return Err(CliError::new(
            "cli",
            format!("no {} bundles configured", target.analysis().as_str()),
        ));
    }
    if target == AnalyzeTarget::Lesion {
        for (i, p) in inputs.iter_mut().enumerate() {
            let judged = judged_path(cfg, i, p);
            if judged.join("manifest.json").exists() {
                *p = judged;
            }
        }
    }
    let corpus_path = cfg.corpus_path();
    let corpus_required = target == AnalyzeTarget::Umap;
    require_paths(inputs.iter().map(PathBuf::as_path))?;
    if corpus_required {
        require_paths([corpus_path.as_path()])?;
    }
    let corpus = if corpus_required || corpus_path.exists() {
        Some(load_corpus(&corpus_path)?)
    } else {
        None
    };
    let bundles = load_bundles(&inputs, target.capture_kind(), target.analysis().as_str())?;
    let index = ConceptIndex::new(corpus.as_ref());
    let stage_seed = derive_seed(cfg.seed, &format!("analyze/{}", target.analysis().as_str()));

    let mut report = MetricReport {
        schema: REPORT_SCHEMA.into(),
        analysis: target.analysis(),
        model_name: bundles.model_name.clone(),
        n_layers: bundles.n_layers,
        seed: cfg.seed,
        stage_seed,
        n_resamples: cfg.metrics.n_resamples,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        series: Vec::new(),
        warnings: Vec::new(),
        details: BTreeMap::new(),
    };
    let mut summary = Summary::new(&format!("analyze {}", target.analysis().as_str()), cfg.seed);
    let mut extra_files: Vec<(PathBuf, String)> = Vec::new();

    in_pool(cfg.jobs, || -> Result<(), CliError> {
        match target {
            AnalyzeTarget::Umap => analyze_umap(
                cfg,
                &bundles,
                &index,
                stage_seed,
                export_embeddings,
                &mut report,
                &mut extra_files,
            ),
            AnalyzeTarget::Saliency => analyze_saliency(cfg, &bundles, &index, stage_seed, &mut report),
            AnalyzeTarget::Lesion => analyze_lesion(cfg, &bundles, &index, stage_seed, &mut report),
            AnalyzeTarget::Patch => analyze_patch(cfg, &bundles, &index, stage_seed, &mut report, &mut extra_files),
        }
    })??;

    if report.series.is_empty() {
        return Err(CliError::new("cli", "no records for the selected concepts"));
    }
    let path = report_path(cfg, target.analysis());
    write_text(&path, &pretty(&report))?;
    summary.outputs.push(path.display().to_string());
    for (p, text) in extra_files {
        write_text(&p, &text)?;
        summary.outputs.push(p.display().to_string());
    }
    summary.counts.insert("series".into(), report.series.len());
    summary.warnings = report.warnings;
    Ok(summary)
}

fn group_by_concept<T>(items: Vec<(Concept, T)>, cfg: &PipelineConfig) -> BTreeMap<Concept, Vec<T>> {
    let mut out: BTreeMap<Concept, Vec<T>> = BTreeMap::new();
    for (c, item) in items {
        if cfg.wants(c) {
            out.entry(c).or_default().push(item);
        }
    }
    out
}

fn analyze_umap(
    cfg: &PipelineConfig,
    bundles: &Bundles,
    index: &ConceptIndex,
    stage_seed: u64,
    export: bool,
    report: &mut MetricReport,
    extra: &mut Vec<(PathBuf, String)>,
) -> Result<(), CliError> {
    let mut seen = BTreeSet::new();
    let mut grouped: BTreeMap<Concept, Vec<(&PromptRecord, medmap_core::trace::ActivationTrace)>> = BTreeMap::new();
    for (path, bundle) in &bundles.items {
        let degenerate: BTreeSet<&str> = bundle
            .manifest()
            .records
            .iter()
            .filter(|r| r.degenerate)
            .filter_map(|r| r.id.as_deref())
            .collect();
        for id in bundle.prompt_ids() {
            if !seen.insert(id.to_string()) {
                return Err(CliError::new("trace-store", "prompt appears in more than one bundle")
                    .file(path)
                    .record(id));
            }
            if degenerate.contains(id) {
                report
                    .warnings
                    .push(format!("skipped degenerate activation record {id}"));
                continue;
            }
            let prompt = *index.prompts.get(id).ok_or_else(|| {
                CliError::new("prompt-forge", "prompt is not in the corpus")
                    .file(path)
                    .record(id)
            })?;
            if !cfg.wants(prompt.concept) {
                continue;
            }
            let trace = bundle
                .read_activation(id)
                .map_err(|e| CliError::new("trace-store", e).file(path).record(id))?;
            grouped.entry(prompt.concept).or_default().push((prompt, trace));
        }
    }
    let mut contrast = BTreeMap::new();
    for (concept, mut items) in grouped {
        if concept == Concept::Dosages {
            report.warnings.push(format!(
                "dosages: {} prompts skipped, dose values form no label clusters",
                items.len()
            ));
            continue;
        }
        if concept != Concept::Age && concept != Concept::Progression && !cfg.metrics.label_keys.contains_key(&concept)
        {
            report
                .warnings
                .push(format!("{concept}: no label keys configured, skipped"));
            continue;
        }
        items.sort_by(|a, b| a.0.prompt_id.cmp(&b.0.prompt_id));
        let (prompts, traces): (Vec<_>, Vec<_>) = items.into_iter().unzip();
        let data = ConceptActivations {
            concept,
            prompts,
            traces,
            n_rows: bundles.n_layers + 1,
        };
        let seed = derive_seed(stage_seed, concept.as_str());
        let outcome = analyze_concept(&data, &cfg.metrics, seed, export)?;
        report.series.extend(outcome.series);
        for (k, v) in outcome.details {
            contrast.entry(k).or_insert_with(BTreeMap::new).insert(concept, v);
        }
        if let Some(planar) = outcome.planar {
            let ids: Vec<&str> = data.prompts.iter().map(|p| p.prompt_id.as_str()).collect();
            let layers: Vec<Vec<[f64; 2]>> = planar
                .iter()
                .map(|m| m.rows().into_iter().map(|r| [r[0], r[1]]).collect())
                .collect();
            let doc = json!({
                "concept": concept,
                "dim": 2,
                "seed": seed,
                "params": cfg.metrics.umap,
                "prompt_ids": ids,
                "layers": layers,
            });
            extra.push((
                cfg.out_dir.join("embeddings").join(format!("umap_{concept}.json")),
                pretty(&doc),
            ));
        }
    }
    for (k, per_concept) in contrast {
        report.details.insert(k, json!(per_concept));
    }
    report.details.insert("umap_params".into(), json!(cfg.metrics.umap));
    report
        .details
        .insert("silhouette_dim".into(), json!(cfg.metrics.silhouette_dim));
    Ok(())
}

fn check_record_layers(n: usize, n_layers: usize, file: &Path, id: &str) -> Result<(), CliError> {
    if n != n_layers {
        return Err(CliError::new(
            "causal-metrics",
            format!("record has {n} layers, bundle declares {n_layers}"),
        )
        .file(file)
        .record(id));
    }
    Ok(())
}

fn analyze_saliency(
    cfg: &PipelineConfig,
    bundles: &Bundles,
    index: &ConceptIndex,
    stage_seed: u64,
    report: &mut MetricReport,
) -> Result<(), CliError> {
    let mut items: Vec<(Concept, SaliencyProfileRecord)> = Vec::new();
    for (path, bundle) in &bundles.items {
        for r in bundle
            .saliency_records()
            .map_err(|e| CliError::new("trace-store", e).file(path))?
        {
            check_record_layers(r.per_layer.len(), bundles.n_layers, path, &r.prompt_id)?;
            items.push((index.prompt_concept(&r.prompt_id, path)?, r.clone()));
        }
    }
    let mut normalized = BTreeMap::new();
    for (concept, records) in group_by_concept(items, cfg) {
        let seed = derive_seed(stage_seed, concept.as_str());
        let profile = saliency_profile(&records, concept, cfg.metrics.n_resamples, seed)
            .map_err(|e| CliError::new("causal-metrics", e).record(concept.as_str()))?;
        report.series.push(profile.series);
        normalized.insert(concept, profile.normalized);
    }
    report.details.insert("normalized".into(), json!(normalized));
    Ok(())
}

fn analyze_lesion(
    cfg: &PipelineConfig,
    bundles: &Bundles,
    index: &ConceptIndex,
    stage_seed: u64,
    report: &mut MetricReport,
) -> Result<(), CliError> {
    let mut items: Vec<(Concept, LesionRecord)> = Vec::new();
    let mut origin: BTreeMap<(String, usize), PathBuf> = BTreeMap::new();
    for (path, bundle) in &bundles.items {
        for r in bundle
            .lesion_records()
            .map_err(|e| CliError::new("trace-store", e).file(path))?
        {
            origin.insert((r.prompt_id.clone(), r.layer), path.clone());
            items.push((index.prompt_concept(&r.prompt_id, path)?, r.clone()));
        }
    }
    let mut scored = BTreeMap::new();
    for (concept, records) in group_by_concept(items, cfg) {
        let seed = derive_seed(stage_seed, concept.as_str());
        let series =
            lesion_profile(&records, concept, bundles.n_layers, cfg.metrics.n_resamples, seed).map_err(|e| {
                let err = CliError::new("causal-metrics", &e);
                match e {
                    CausalError::Unscored { id, layer } => {
                        let file = origin.get(&(id.clone(), layer)).cloned().unwrap_or_default();
                        err.file(&file).record(format!("{id} layer {layer}"))
                    }
                    _ => err.record(concept.as_str()),
                }
            })?;
        scored.insert(concept, records.len());
        report.series.push(series);
    }
    report.details.insert("records".into(), json!(scored));
    Ok(())
}

fn analyze_patch(
    cfg: &PipelineConfig,
    bundles: &Bundles,
    index: &ConceptIndex,
    stage_seed: u64,
    report: &mut MetricReport,
    extra: &mut Vec<(PathBuf, String)>,
) -> Result<(), CliError> {
    let mut items: Vec<(Concept, PatchRecord)> = Vec::new();
    for (path, bundle) in &bundles.items {
        for r in bundle
            .patch_records()
            .map_err(|e| CliError::new("trace-store", e).file(path))?
        {
            items.push((index.pair_concept(&r.pair_id, path)?, r.clone()));
        }
    }
    let mut details = BTreeMap::new();
    for (concept, records) in group_by_concept(items, cfg) {
        let seed = derive_seed(stage_seed, concept.as_str());
        let profile = patching_profile(&records, concept, bundles.n_layers, cfg.metrics.n_resamples, seed)
            .map_err(|e| CliError::new("causal-metrics", e).record(concept.as_str()))?;
        if !profile.degenerate.is_empty() {
            report.warnings.push(format!(
                "{concept}: {} patch records skipped for a near-zero clean-corrupt logit difference",
                profile.degenerate.len()
            ));
        }
        extra.push((
            cfg.reports_dir().join(format!("patching_{concept}.csv")),
            profile.to_csv(),
        ));
        report.series.push(profile.combined.clone());
        details.insert(
            concept,
            json!({
                "per_site": profile.per_site,
                "success_fraction": profile.success_fraction,
                "n_valid": profile.n_valid,
                "degenerate": profile.degenerate,
            }),
        );
    }
    report.details.insert("patching".into(), json!(details));
    Ok(())
}

/// Scores every unscored lesion record and writes judged copies of the
/// bundles. Partial failure still writes what was scored, then errors.
pub fn cmd_judge(cfg: &PipelineConfig) -> Result<Summary, CliError> {
    cfg.validate()?;
    require_paths(
        cfg.bundles
            .lesion
            .iter()
            .map(PathBuf::as_path)
            .chain(cfg.judge_config.as_deref()),
    )?;
    let judge_cfg = cfg.judge_settings()?;
    let bundles = load_bundles(&cfg.bundles.lesion, CaptureKind::LesionResponses, "lesion")?;
    let corpus_path = cfg.corpus_path();
    let corpus = if corpus_path.exists() {
        Some(load_corpus(&corpus_path)?)
    } else {
        None
    };
    let prompts: BTreeMap<String, String> = corpus
        .iter()
        .flat_map(|c| &c.prompts)
        .map(|p| (p.prompt_id.clone(), p.text.clone()))
        .collect();

    let cache_path = cfg.judge_cache_path();
    let cache = JudgeCache::open(&cache_path).map_err(|e| CliError::new("judge-client", e))?;
    let judge = Judge::connect(judge_cfg, cache).map_err(|e| CliError::new("judge-client", e))?;

    let mut summary = Summary::new("judge", cfg.seed);
    let mut failures = Vec::new();
    for (i, (path, bundle)) in bundles.items.iter().enumerate() {
        let records = bundle
            .lesion_records()
            .map_err(|e| CliError::new("trace-store", e).file(path))?;
        let report = judge.score_batch(records, Some(&prompts));
        let out = judged_path(cfg, i, path);
        if out.exists() {
            fs::remove_dir_all(&out).map_err(|e| io_error(&out, e))?;
        }
        let m = bundle.manifest();
        let mut w = BundleWriter::create(
            &out,
            &m.model_name,
            m.n_layers,
            m.hidden_dim,
            &m.corpus_id,
            m.capture_kind,
        )
        .map_err(|e| CliError::new("trace-store", e).file(&out))?;
        w.add_lesions("lesions", &report.records)
            .map_err(|e| CliError::new("trace-store", e).file(&out))?;
        w.finish().map_err(|e| CliError::new("trace-store", e).file(&out))?;
        summary.outputs.push(out.display().to_string());
        for (k, v) in [
            ("records", report.records.len()),
            ("already_scored", report.already_scored),
            ("cache_hits", report.cache_hits),
            ("network_calls", report.network_calls),
            ("failures", report.failures.len()),
        ] {
            *summary.counts.entry(k.into()).or_default() += v;
        }
        failures.extend(report.failures.into_iter().map(|f| (path.clone(), f)));
    }
    summary.outputs.push(cache_path.display().to_string());

    let failures_path = cfg.out_dir.join("judged").join("failures.json");
    let listed: Vec<Value> = failures
        .iter()
        .map(|(p, f)| json!({"file": p.display().to_string(), "prompt_id": f.prompt_id, "layer": f.layer, "message": f.message}))
        .collect();
    write_text(&failures_path, &pretty(&listed))?;
    summary.outputs.push(failures_path.display().to_string());
    if let Some((path, first)) = failures.first() {
        return Err(CliError::new(
            "judge-client",
            format!(
                "{} of {} records failed; first: {}",
                failures.len(),
                summary.counts["records"],
                first.message
            ),
        )
        .file(path)
        .record(format!("{} layer {}", first.prompt_id, first.layer)));
    }
    Ok(summary)
}

fn load_report(path: &Path) -> Result<MetricReport, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let report: MetricReport = serde_json::from_str(&text)
        .map_err(|e| CliError::new("cartographer", format!("malformed report: {e}")).file(path))?;
    if report.schema != REPORT_SCHEMA {
        return Err(CliError::new("cartographer", format!("unsupported report schema `{}`", report.schema)).file(path));
    }
    Ok(report)
}

/// Builds the map from every report under `<out>/reports` and renders it in
/// each of `formats` (`json`, `svg`).
pub fn cmd_map(cfg: &PipelineConfig, formats: &[String]) -> Result<Summary, CliError> {
    cfg.validate()?;
    if formats.is_empty() {
        return Err(CliError::new("cli", "no output format requested"));
    }
    let mut reports = Vec::new();
    for analysis in Analysis::ALL {
        let path = report_path(cfg, analysis);
        if path.exists() {
            reports.push((path.clone(), load_report(&path)?));
        }
    }
    let Some((_, first)) = reports.first() else {
        return Err(
            CliError::new("cartographer", "no metric reports found; run `analyze` first").file(&cfg.reports_dir()),
        );
    };
    let (model_name, n_layers) = (first.model_name.clone(), first.n_layers);
    let mut series = Vec::new();
    for (path, r) in &reports {
        if r.model_name != model_name || r.n_layers != n_layers {
            return Err(CliError::new(
                "cartographer",
                format!(
                    "report is for {} ({} layers), others for {model_name} ({n_layers} layers)",
                    r.model_name, r.n_layers
                ),
            )
            .file(path));
        }
        series.extend(r.series.iter().filter(|s| cfg.wants(s.concept)).cloned());
    }
    let map: LlmMap = assemble_map(&model_name, n_layers, &series, &cfg.metrics.map)
        .map_err(|e| CliError::new("cartographer", e).file(&cfg.reports_dir()))?;

    let mut summary = Summary::new("map", cfg.seed);
    for format in formats {
        let text = render_map(&map, format).map_err(|e| CliError::new("cartographer", e))?;
        let path = cfg.out_dir.join(format!("map.{format}"));
        write_text(&path, &text)?;
        summary.outputs.push(path.display().to_string());
    }
    summary.counts.insert("reports".into(), reports.len());
    summary
        .counts
        .insert("rows".into(), map.rows.values().map(Vec::len).sum());
    summary.counts.insert(
        "intervals".into(),
        map.rows.values().flatten().map(|r| r.intervals.len()).sum(),
    );
    summary.warnings = map.metadata.warnings.clone();
    Ok(summary)
}
