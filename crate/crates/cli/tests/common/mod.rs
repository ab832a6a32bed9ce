//! A synthetic stand-in for the extraction harness: writes trace bundles for
//! the symptoms corpus with a signal planted on map layers 10 to 15.
//!
//! Map layer `l` is trace row `l` for activations and block `l - 1` for the
//! causal analyses, so causal peaks sit on blocks 9 to 14.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use medmap_cli::{cmd_gen_prompts, PipelineConfig};
use medmap_core::prompt::{CorpusConfig, CorpusManifest};
use medmap_core::seed::rng_from_seed;
use medmap_core::trace::{
    BundleWriter, CaptureKind, LesionRecord, PatchRecord, PatchSite, SaliencyProfileRecord, TensorBlob,
};
use medmap_core::{Analysis, Concept};
use medmap_judge::mock::{MockReply, MockServer};
use medmap_judge::JudgeConfig;
use rand::Rng;
use rand_distr::StandardNormal;

pub const MODEL: &str = "planted-24L";
pub const N_LAYERS: usize = 24;
pub const HIDDEN: usize = 32;
pub const PLANTED: (usize, usize) = (10, 15);

fn on_map(layer: usize) -> bool {
    (PLANTED.0..=PLANTED.1).contains(&layer)
}

fn block_planted(block: usize) -> bool {
    on_map(block + 1)
}

pub fn base_config(root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        out_dir: root.join("out"),
        seed: 7,
        corpus_spec: Some(CorpusConfig::new(
            &["symptoms"],
            &["umap", "saliency", "lesioning", "patching"],
        )),
        ..PipelineConfig::default()
    };
    cfg.metrics.n_resamples = 200;
    cfg
}

fn prompts_for(corpus: &CorpusManifest, analysis: Analysis) -> Vec<&medmap_core::prompt::PromptRecord> {
    corpus
        .prompts
        .iter()
        .filter(|p| p.concept == Concept::Symptoms && p.analysis == analysis)
        .collect()
}

/// Group-separated activations on rows 10..=15, pure noise elsewhere.
pub fn write_activations(corpus: &CorpusManifest, dir: &Path, seed: u64) -> PathBuf {
    let mut rng = rng_from_seed(seed);
    let prompts = prompts_for(corpus, Analysis::Umap);
    let mut groups: Vec<String> = prompts.iter().map(|p| p.label("group").unwrap().render()).collect();
    groups.sort();
    groups.dedup();
    let centers: Vec<Vec<f64>> = groups
        .iter()
        .map(|_| {
            (0..HIDDEN)
                .map(|_| 8.0 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut w = BundleWriter::create(dir, MODEL, N_LAYERS, HIDDEN, "medmap-corpus", CaptureKind::Activations).unwrap();
    for p in &prompts {
        let g = groups
            .iter()
            .position(|x| *x == p.label("group").unwrap().render())
            .unwrap();
        let mut data = Vec::with_capacity((N_LAYERS + 1) * HIDDEN);
        for row in 0..=N_LAYERS {
            let sep = if on_map(row) { 1.0 } else { 0.0 };
            for center in &centers[g] {
                data.push((sep * center + rng.sample::<f64, _>(StandardNormal)) as f32);
            }
        }
        w.add_activation(
            &p.prompt_id,
            &TensorBlob::new(vec![N_LAYERS + 1, HIDDEN], data).unwrap(),
        )
        .unwrap();
    }
    w.finish().unwrap();
    dir.to_path_buf()
}

pub fn write_saliency(corpus: &CorpusManifest, dir: &Path, seed: u64) -> PathBuf {
    let mut rng = rng_from_seed(seed);
    let records: Vec<SaliencyProfileRecord> = prompts_for(corpus, Analysis::Saliency)
        .iter()
        .map(|p| SaliencyProfileRecord {
            prompt_id: p.prompt_id.clone(),
            per_layer: (0..N_LAYERS)
                .map(|b| if block_planted(b) { 4.0 } else { 1.0 } + rng.random_range(0.0..0.3))
                .collect(),
        })
        .collect();
    let mut w = BundleWriter::create(dir, MODEL, N_LAYERS, HIDDEN, "medmap-corpus", CaptureKind::Saliency).unwrap();
    w.add_saliency("saliency", &records).unwrap();
    w.finish().unwrap();
    dir.to_path_buf()
}

/// Unscored transcripts: gibberish when a planted block is lesioned.
pub fn write_lesions(corpus: &CorpusManifest, dir: &Path) -> PathBuf {
    let original = "Lupus is associated with joint pain, fatigue, fever and a butterfly-shaped facial rash.";
    let mut records = Vec::new();
    for p in prompts_for(corpus, Analysis::Lesioning) {
        for b in 0..N_LAYERS {
            let lesioned = if block_planted(b) {
                format!("the the the rash rash {b} the the")
            } else {
                format!("Lupus is associated with joint pain, fatigue and fever (variant {b}).")
            };
            records.push(LesionRecord {
                prompt_id: p.prompt_id.clone(),
                layer: b,
                original_response: original.into(),
                lesioned_response: lesioned,
                judge_score: None,
                judge_reply: None,
            });
        }
    }
    let mut w = BundleWriter::create(
        dir,
        MODEL,
        N_LAYERS,
        HIDDEN,
        "medmap-corpus",
        CaptureKind::LesionResponses,
    )
    .unwrap();
    w.add_lesions("lesions", &records).unwrap();
    w.finish().unwrap();
    dir.to_path_buf()
}

pub fn write_patches(corpus: &CorpusManifest, dir: &Path, seed: u64) -> PathBuf {
    let mut rng = rng_from_seed(seed);
    let mut pairs: Vec<String> = prompts_for(corpus, Analysis::Patching)
        .iter()
        .filter_map(|p| p.pair_id.clone())
        .collect();
    pairs.sort();
    pairs.dedup();
    let mut records = Vec::new();
    for pair in &pairs {
        for b in 0..N_LAYERS {
            for site in PatchSite::ALL {
                let p = if block_planted(b) { 0.9 } else { 0.05 } + rng.random_range(-0.03..0.03);
                let (clean, corrupt) = (6.0, -4.0);
                let shift: f64 = rng.random_range(-2.0..2.0);
                records.push(PatchRecord {
                    pair_id: pair.clone(),
                    layer: b,
                    site,
                    logit_clean_r: clean + shift,
                    logit_clean_rp: shift,
                    logit_corrupt_r: corrupt + shift,
                    logit_corrupt_rp: shift,
                    logit_patched_r: corrupt + p * (clean - corrupt) + 1.0,
                    logit_patched_rp: 1.0,
                });
            }
        }
    }
    let mut w = BundleWriter::create(dir, MODEL, N_LAYERS, HIDDEN, "medmap-corpus", CaptureKind::PatchLogits).unwrap();
    w.add_patches("patches", &records).unwrap();
    w.finish().unwrap();
    dir.to_path_buf()
}

/// Judge that reads degradation off the lesioned text.
pub fn gibberish_judge() -> MockServer {
    MockServer::start(|msgs| {
        let text = &msgs[0].content;
        let lesioned = text.split("Modified response:").nth(1).unwrap_or("");
        MockReply::Content(if lesioned.contains("the the the") {
            "9/10".into()
        } else {
            "Score: 2".into()
        })
    })
    .unwrap()
}

pub fn judge_config(server: &MockServer) -> JudgeConfig {
    JudgeConfig {
        endpoint: server.endpoint(),
        model: "mock-judge".into(),
        backoff_ms: 1,
        api_key_env: None,
        ..JudgeConfig::default()
    }
}

/// Runs `gen-prompts` and writes all four planted bundles; returns the
/// config pointing at them.
pub fn planted_pipeline(root: &Path) -> PipelineConfig {
    let mut cfg = base_config(root);
    cmd_gen_prompts(&cfg).unwrap();
    let corpus = CorpusManifest::read(&cfg.corpus_path()).unwrap();
    cfg.bundles.umap = vec![write_activations(&corpus, &root.join("traces/activations"), 1)];
    cfg.bundles.saliency = vec![write_saliency(&corpus, &root.join("traces/saliency"), 2)];
    cfg.bundles.lesion = vec![write_lesions(&corpus, &root.join("traces/lesions"))];
    cfg.bundles.patch = vec![write_patches(&corpus, &root.join("traces/patches"), 3)];
    cfg
}
