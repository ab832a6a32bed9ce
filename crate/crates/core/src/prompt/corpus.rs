//! Built-in templates and corpus assembly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::template::{expand_template, PromptTemplate, SubstitutionValue, Substitutions};
use super::{CorpusManifest, LabelValue, PromptError, PromptRecord};
use crate::concept::{Analysis, Concept};

const DEFAULT_DATA: &str = include_str!("../../data/default_substitutions.json");

/// The subject tokens used for the age corpus when none are configured.
pub const DEFAULT_SUBJECTS: [&str; 3] = ["he", "she", "someone"];

/// Disease-progression prompts: four diseases, nine stages each, from
/// healthy (stage 1) to death (stage 9).
pub const PROGRESSION_STAGES: [(&str, [&str; 9]); 4] = [
    (
        "Alzheimer's Disease",
        [
            "Someone is healthy with no symptoms.",
            "Someone occasionally worries about minor forgetfulness.",
            "Someone frequently misplaces items and struggles with recent memory.",
            "Someone forgets recent conversations and repeats questions.",
            "Someone struggles significantly with language and daily tasks.",
            "Someone regularly becomes confused and has trouble recognizing family.",
            "Someone has severe cognitive decline and is unable to communicate clearly.",
            "Someone is bedridden, minimally responsive, after severe cognitive decline.",
            "Someone just died from severe cognitive decline.",
        ],
    ),
    (
        "COVID-19",
        [
            "Someone is healthy with no symptoms.",
            "Someone has mild fatigue.",
            "Someone has mild fatigue, slight fever, dry cough.",
            "Someone has persistent cough, fever, mild shortness of breath.",
            "Someone has worsening respiratory distress, oxygen saturation 90%.",
            "Someone has been receiving supplemental oxygen and is in the ICU.",
            "Someone was sedated, intubated and mechanically ventilated.",
            "Someone experienced multi-organ failure and declining vital signs.",
            "Someone just died from multi-organ failure and declining vital signs.",
        ],
    ),
    (
        "COPD",
        [
            "Someone is healthy with no symptoms.",
            "Someone experiences shortness of breath with strenuous exercise.",
            "Someone experiences shortness of breath when climbing stairs, mild cough.",
            "Someone is breathless during everyday tasks, chronic cough.",
            "Someone has regular flare-ups, struggles with daily tasks.",
            "Someone requires frequent hospitalizations due to breathing difficulty.",
            "Someone needs supplemental oxygen at home, has severe breathlessness.",
            "Someone experiences chronic respiratory failure, continuous oxygen dependence.",
            "Someone just died from chronic respiratory failure, continuous oxygen dependence.",
        ],
    ),
    (
        "Parkinson's Disease",
        [
            "Someone is healthy with no symptoms.",
            "Someone has mild tremors in one hand.",
            "Someone experiences stiffness and slowness of movement.",
            "Someone has mild difficulty with balance and coordination.",
            "Someone has moderate difficulty with balance and coordination.",
            "Someone has severe tremors and muscle rigidity.",
            "Someone is unable to walk without assistance.",
            "Someone is bedridden with severe motor impairment and requires full-time care.",
            "Someone just died from severe motor impairment and complications.",
        ],
    ),
];

/// A linear sweep of doses between a recommended and a lethal amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseSweep {
    pub drug: String,
    pub unit: String,
    pub min_dose: f64,
    pub max_dose: f64,
    pub count: usize,
}

impl DoseSweep {
    /// Evenly spaced doses rounded to two decimals, `count` of them.
    pub fn doses(&self) -> Vec<f64> {
        match self.count {
            0 => vec![],
            1 => vec![self.min_dose],
            n => (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    let d = self.min_dose + t * (self.max_dose - self.min_dose);
                    (d * 100.0).round() / 100.0
                })
                .collect(),
        }
    }
}

/// Editable substitution lists plus optional extra templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionData {
    #[serde(default)]
    pub lists: Substitutions,
    #[serde(default)]
    pub dose_sweeps: Vec<DoseSweep>,
    #[serde(default)]
    pub templates: Vec<PromptTemplate>,
}

impl SubstitutionData {
    /// The lists shipped with the crate.
    pub fn builtin() -> Self {
        serde_json::from_str(DEFAULT_DATA).expect("bundled substitution data parses")
    }

    pub fn from_json(json: &str) -> Result<Self, PromptError> {
        serde_json::from_str(json).map_err(|e| PromptError::Json(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// All lists, with the generated `AGE` and `DOSE` lists added.
    fn resolved(&self) -> Substitutions {
        let mut subs = self.lists.clone();
        subs.entry("AGE".into()).or_insert_with(|| {
            (1..=100)
                .map(|a: i64| SubstitutionValue::plain(a.to_string()))
                .collect()
        });
        if !subs.contains_key("DOSE") {
            let doses = self
                .dose_sweeps
                .iter()
                .flat_map(|sweep| {
                    sweep.doses().into_iter().map(move |d| {
                        SubstitutionValue::plain(LabelValue::Num(d).render())
                            .with_label("drug", LabelValue::Text(sweep.drug.clone()))
                            .with_label("unit", LabelValue::Text(sweep.unit.clone()))
                    })
                })
                .collect();
            subs.insert("DOSE".into(), doses);
        }
        subs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    #[serde(default = "default_corpus_id")]
    pub corpus_id: String,
    #[serde(default)]
    pub seed: u64,
    pub concepts: Vec<String>,
    pub analyses: Vec<String>,
    /// Subject tokens for the age corpus; defaults to he/she/someone.
    #[serde(default)]
    pub subjects: Option<Vec<String>>,
}

fn default_corpus_id() -> String {
    "medmap-corpus".into()
}

impl CorpusConfig {
    pub fn new(concepts: &[&str], analyses: &[&str]) -> Self {
        CorpusConfig {
            corpus_id: default_corpus_id(),
            seed: 0,
            concepts: concepts.iter().map(|s| s.to_string()).collect(),
            analyses: analyses.iter().map(|s| s.to_string()).collect(),
            subjects: None,
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn tpl(id: &str, concept: Concept, analysis: Analysis, text: &str, answers: &[&str]) -> PromptTemplate {
    PromptTemplate {
        id: id.into(),
        concept,
        analysis,
        text: text.into(),
        expected_answers: answers.iter().map(|a| a.to_string()).collect(),
        corrupt_text: None,
        corrupt_expected_answers: None,
        labels: BTreeMap::new(),
    }
}

fn paired(id: &str, concept: Concept, clean: &str, corrupt: &str, placeholder: &str) -> PromptTemplate {
    PromptTemplate {
        corrupt_text: Some(corrupt.into()),
        expected_answers: vec![format!("{{{placeholder}.clean_answer}}")],
        corrupt_expected_answers: Some(vec![format!("{{{placeholder}.corrupt_answer}}")]),
        ..tpl(id, concept, Analysis::Patching, clean, &[])
    }
}

/// The prompt templates for every (concept, analysis) pair except the
/// fixed progression corpus.
pub fn builtin_templates(subjects: &[String]) -> Vec<PromptTemplate> {
    use Analysis::*;
    use Concept::*;
    let mut t = Vec::new();

    for subject in subjects {
        let mut age = tpl(
            &format!("age-umap-{subject}"),
            Age,
            Umap,
            &format!("{} is {{AGE}} years old.", capitalize(subject)),
            &[],
        );
        age.labels.insert("gender".into(), LabelValue::Text(subject.clone()));
        t.push(age);
    }
    t.push(tpl(
        "age-saliency",
        Age,
        Saliency,
        "Answer with a single number, nothing else. At what age is someone legally considered an adult?",
        &["18"],
    ));
    t.push(tpl(
        "age-lesioning",
        Age,
        Lesioning,
        "How long do people live around the world?",
        &[],
    ));
    t.push(paired(
        "age-patching",
        Age,
        "A {AGE_PAIR.clean_age}-year-old patient has {AGE_PAIR.symptom}. The most likely cause is ___",
        "A {AGE_PAIR.corrupt_age}-year-old patient has {AGE_PAIR.symptom}. The most likely cause is ___",
        "AGE_PAIR",
    ));

    t.push(tpl("symptoms-umap", Symptoms, Umap, "A patient has {SYMPTOM}.", &[]));
    t.push(tpl(
        "symptoms-saliency",
        Symptoms,
        Saliency,
        "Answer with a single word. What is the main symptom present in {DISEASE}?",
        &["{DISEASE.main_symptom}"],
    ));
    t.push(tpl(
        "symptoms-lesioning",
        Symptoms,
        Lesioning,
        "A patient has a lupus. What symptoms are associated with this disease?",
        &[],
    ));
    t.push(paired(
        "symptoms-patching",
        Symptoms,
        "For {SYMPTOM_PAIR.clean_disease}, a common symptom is ___",
        "For {SYMPTOM_PAIR.corrupt_disease}, a common symptom is ___",
        "SYMPTOM_PAIR",
    ));

    t.push(tpl(
        "diseases-umap",
        Diseases,
        Umap,
        "A patient was diagnosed with {DISEASE}.",
        &[],
    ));
    t.push(tpl(
        "diseases-saliency",
        Diseases,
        Saliency,
        "A patient has fever, productive cough, and chest crackles on exam. The most likely diagnosis is _",
        &["Pneumonia"],
    ));
    t.push(tpl(
        "diseases-lesioning",
        Diseases,
        Lesioning,
        "A 30-year-old female patient presents with chronic cough, shortness of breath, and wheezing. What is the most likely diagnosis?",
        &[],
    ));
    t.push(paired(
        "diseases-patching",
        Diseases,
        "A patient has {DISEASE_PAIR.clean_symptoms}. The most likely diagnosis is ___",
        "A patient has {DISEASE_PAIR.corrupt_symptoms}. The most likely diagnosis is ___",
        "DISEASE_PAIR",
    ));

    t.push(tpl("drugs-umap", Drugs, Umap, "A patient takes {DRUG}.", &[]));
    t.push(tpl(
        "drugs-saliency",
        Drugs,
        Saliency,
        "Answer with a single word only, describing a drug. A patient suffers from high LDL cholesterol and has atherosclerotic disease. What drug should the patient take?",
        &["Atorvastatin"],
    ));
    t.push(tpl(
        "drugs-lesioning",
        Drugs,
        Lesioning,
        "A patient takes Metformin. What are the side effects?",
        &[],
    ));
    t.push(paired(
        "drugs-patching",
        Drugs,
        "The patient has {DRUG_PAIR.clean_condition}. A common medication is ___",
        "The patient has {DRUG_PAIR.corrupt_condition}. A common medication is ___",
        "DRUG_PAIR",
    ));

    t.push(tpl(
        "dosages-umap",
        Dosages,
        Umap,
        "A patient took {DOSE}mg of {DOSE.drug}.",
        &[],
    ));
    t.push(tpl(
        "dosages-saliency",
        Dosages,
        Saliency,
        "A patient has taken {DOSE} mg of {DOSE.drug}. Will the patient be alive or dead?",
        &["alive", "dead"],
    ));
    t.push(tpl(
        "dosages-lesioning",
        Dosages,
        Lesioning,
        "What is a safe dose of Amlodipine and what is a lethal dose?",
        &[],
    ));
    t.push(paired(
        "dosages-patching",
        Dosages,
        "What will happen to the patient? Answer in exactly one English word: stable or dead. A patient took {DOSE_PAIR.safe_dose}mg of {DOSE_PAIR.drug}. The patient will be __",
        "What will happen to the patient? Answer in exactly one English word: stable or dead. A patient took {DOSE_PAIR.lethal_dose}mg of {DOSE_PAIR.drug}. The patient will be __",
        "DOSE_PAIR",
    ));
    t
}

/// The 4 × 9 disease-progression UMAP corpus.
pub fn progression_records() -> Vec<PromptRecord> {
    PROGRESSION_STAGES
        .iter()
        .flat_map(|(disease, stages)| {
            let slug: String = disease
                .chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .collect::<String>()
                .to_ascii_lowercase();
            stages.iter().enumerate().map(move |(i, text)| {
                let stage = i as i64 + 1;
                PromptRecord {
                    prompt_id: format!("progression-umap-{slug}-stage{stage}"),
                    concept: Concept::Progression,
                    analysis: Analysis::Umap,
                    text: (*text).to_string(),
                    labels: BTreeMap::from([
                        ("disease".to_string(), LabelValue::Text((*disease).to_string())),
                        ("stage".to_string(), LabelValue::Int(stage)),
                    ]),
                    expected_answers: vec![],
                    pair_id: None,
                }
            })
        })
        .collect()
}

/// Expands every built-in and data-file template matching the configured
/// (concept, analysis) pairs into one validated manifest.
pub fn build_corpus(config: &CorpusConfig, data: &SubstitutionData) -> Result<CorpusManifest, PromptError> {
    if config.concepts.is_empty() {
        return Err(PromptError::EmptySelection("concepts"));
    }
    if config.analyses.is_empty() {
        return Err(PromptError::EmptySelection("analyses"));
    }
    let concepts: BTreeSet<Concept> = config
        .concepts
        .iter()
        .map(|c| c.parse().map_err(|_| PromptError::UnknownConcept(c.clone())))
        .collect::<Result<_, _>>()?;
    let analyses: BTreeSet<Analysis> = config
        .analyses
        .iter()
        .map(|a| a.parse().map_err(|_| PromptError::UnknownAnalysis(a.clone())))
        .collect::<Result<_, _>>()?;

    let subjects: Vec<String> = match &config.subjects {
        Some(s) => s.clone(),
        None => DEFAULT_SUBJECTS.iter().map(|s| s.to_string()).collect(),
    };
    let subs = data.resolved();
    let mut templates = builtin_templates(&subjects);
    templates.extend(data.templates.iter().cloned());

    let mut prompts = Vec::new();
    for concept in &concepts {
        for analysis in &analyses {
            if *concept == Concept::Progression && *analysis == Analysis::Umap {
                prompts.extend(progression_records());
            }
            for template in templates
                .iter()
                .filter(|t| t.concept == *concept && t.analysis == *analysis)
            {
                prompts.extend(expand_template(template, &subs)?);
            }
        }
    }
    let manifest = CorpusManifest::new(config.corpus_id.clone(), config.seed, prompts);
    manifest.validate()?;
    Ok(manifest)
}
