//! Template expansion with curly-brace placeholders.
//!
//! A placeholder is `{NAME}` or `{NAME.attr}`. `{NAME}` inserts the chosen
//! substitution value; `{NAME.attr}` inserts the label `attr` attached to
//! that value, which lets one substitution drive several coupled slots
//! (a clean/corrupt pair, a drug and its dose).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{LabelValue, PromptError, PromptRecord};
use crate::concept::{Analysis, Concept};

/// One value a placeholder can take, with the labels it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionValue {
    pub value: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, LabelValue>,
}

impl SubstitutionValue {
    pub fn plain(value: impl Into<String>) -> Self {
        SubstitutionValue {
            value: value.into(),
            labels: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, key: impl Into<String>, value: LabelValue) -> Self {
        self.labels.insert(key.into(), value);
        self
    }
}

pub type Substitutions = BTreeMap<String, Vec<SubstitutionValue>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub concept: Concept,
    pub analysis: Analysis,
    pub text: String,
    #[serde(default)]
    pub expected_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_expected_answers: Option<Vec<String>>,
    /// Labels stamped on every expanded record.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, LabelValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Placeholder {
    pub name: String,
    pub attr: Option<String>,
}

enum Segment<'a> {
    Literal(&'a str),
    Slot(Placeholder),
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_slot(inner: &str) -> Option<Placeholder> {
    match inner.split_once('.') {
        Some((name, attr)) if is_ident(name) && is_ident(attr) => Some(Placeholder {
            name: name.to_string(),
            attr: Some(attr.to_string()),
        }),
        None if is_ident(inner) => Some(Placeholder {
            name: inner.to_string(),
            attr: None,
        }),
        _ => None,
    }
}

fn segments(text: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let Some(close_rel) = rest[open + 1..].find('}') else {
            break;
        };
        let close = open + 1 + close_rel;
        match parse_slot(&rest[open + 1..close]) {
            Some(slot) => {
                if open > 0 {
                    out.push(Segment::Literal(&rest[..open]));
                }
                out.push(Segment::Slot(slot));
                rest = &rest[close + 1..];
            }
            None => {
                out.push(Segment::Literal(&rest[..=open]));
                rest = &rest[open + 1..];
            }
        }
    }
    if !rest.is_empty() {
        out.push(Segment::Literal(rest));
    }
    out
}

pub(crate) fn placeholders(text: &str) -> Vec<Placeholder> {
    segments(text)
        .into_iter()
        .filter_map(|s| match s {
            Segment::Slot(p) => Some(p),
            Segment::Literal(_) => None,
        })
        .collect()
}

/// True when `text` still contains a `{NAME}`-style token.
pub fn has_placeholder(text: &str) -> bool {
    !placeholders(text).is_empty()
}

fn render(text: &str, chosen: &BTreeMap<&str, &SubstitutionValue>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    for seg in segments(text) {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Slot(p) => {
                let value = chosen
                    .get(p.name.as_str())
                    .ok_or_else(|| PromptError::MissingSubstitution(p.name.clone()))?;
                match &p.attr {
                    None => out.push_str(&value.value),
                    Some(attr) => {
                        let label = value.labels.get(attr).ok_or_else(|| PromptError::MissingAttribute {
                            placeholder: p.name.clone(),
                            attr: attr.clone(),
                            value: value.value.clone(),
                        })?;
                        out.push_str(&label.render());
                    }
                }
            }
        }
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn is_paired(&self) -> bool {
        self.corrupt_text.is_some()
    }

    fn all_texts(&self) -> Vec<&str> {
        let mut texts = vec![self.text.as_str()];
        texts.extend(self.expected_answers.iter().map(String::as_str));
        if let Some(c) = &self.corrupt_text {
            texts.push(c);
        }
        if let Some(answers) = &self.corrupt_expected_answers {
            texts.extend(answers.iter().map(String::as_str));
        }
        texts
    }

    /// Placeholder names referenced anywhere in the template, sorted.
    pub fn placeholder_names(&self) -> BTreeSet<String> {
        self.all_texts()
            .into_iter()
            .flat_map(placeholders)
            .map(|p| p.name)
            .collect()
    }

    fn check_shape(&self) -> Result<(), PromptError> {
        let paired = self.analysis == Analysis::Patching;
        if paired != self.is_paired() || paired != self.corrupt_expected_answers.is_some() {
            return Err(PromptError::InvalidTemplate {
                id: self.id.clone(),
                reason: if paired {
                    "patching templates need corrupt_text and corrupt_expected_answers".into()
                } else {
                    "only patching templates may carry a corrupt variant".into()
                },
            });
        }
        Ok(())
    }
}

/// Expands `template` over the Cartesian product of its placeholder values.
///
/// Records are ordered by placeholder name (the lexicographically first
/// name varies slowest), then by each value list's order. Patching
/// templates yield a clean and a corrupt record per combination, linked by
/// `pair_id`.
pub fn expand_template(
    template: &PromptTemplate,
    substitutions: &Substitutions,
) -> Result<Vec<PromptRecord>, PromptError> {
    template.check_shape()?;
    let names: Vec<String> = template.placeholder_names().into_iter().collect();
    let mut lists = Vec::with_capacity(names.len());
    for name in &names {
        let values = substitutions
            .get(name)
            .ok_or_else(|| PromptError::MissingSubstitution(name.clone()))?;
        if values.is_empty() {
            return Err(PromptError::EmptySubstitution(name.clone()));
        }
        lists.push(values.as_slice());
    }

    let total: usize = lists.iter().map(|l| l.len()).product();
    let width = total.to_string().len().max(4);
    let mut records = Vec::with_capacity(if template.is_paired() { 2 * total } else { total });
    let mut odometer = vec![0usize; lists.len()];

    for combo in 0..total {
        let chosen: BTreeMap<&str, &SubstitutionValue> = names
            .iter()
            .zip(&lists)
            .zip(&odometer)
            .map(|((name, list), &i)| (name.as_str(), &list[i]))
            .collect();

        let mut labels = template.labels.clone();
        for (name, value) in &chosen {
            labels.insert(name.to_ascii_lowercase(), LabelValue::infer(&value.value));
            for (k, v) in &value.labels {
                labels.insert(k.clone(), v.clone());
            }
        }

        let render_all = |answers: &[String]| -> Result<Vec<String>, PromptError> {
            answers.iter().map(|a| render(a, &chosen)).collect()
        };
        let base_id = format!("{}-{:0width$}", template.id, combo, width = width);
        let text = render(&template.text, &chosen)?;
        let expected = render_all(&template.expected_answers)?;

        match (&template.corrupt_text, &template.corrupt_expected_answers) {
            (Some(corrupt_text), Some(corrupt_answers)) => {
                let corrupt = render(corrupt_text, &chosen)?;
                let corrupt_expected = render_all(corrupt_answers)?;
                if expected.is_empty() || corrupt_expected.is_empty() || expected == corrupt_expected {
                    return Err(PromptError::InvalidPair {
                        pair_id: base_id,
                        reason: "clean and corrupt answers must be non-empty and distinct".into(),
                    });
                }
                for (variant, text, answers) in [("clean", text, expected), ("corrupt", corrupt, corrupt_expected)] {
                    let mut labels = labels.clone();
                    labels.insert("variant".into(), LabelValue::Text(variant.into()));
                    records.push(PromptRecord {
                        prompt_id: format!("{base_id}-{variant}"),
                        concept: template.concept,
                        analysis: template.analysis,
                        text,
                        labels,
                        expected_answers: answers,
                        pair_id: Some(base_id.clone()),
                    });
                }
            }
            _ => records.push(PromptRecord {
                prompt_id: base_id,
                concept: template.concept,
                analysis: template.analysis,
                text,
                labels,
                expected_answers: expected,
                pair_id: None,
            }),
        }

        // Advance the odometer, last placeholder fastest.
        for slot in (0..odometer.len()).rev() {
            odometer[slot] += 1;
            if odometer[slot] < lists[slot].len() {
                break;
            }
            odometer[slot] = 0;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template(text: &str) -> PromptTemplate {
        PromptTemplate {
            id: "t".into(),
            concept: Concept::Age,
            analysis: Analysis::Umap,
            text: text.into(),
            expected_answers: vec![],
            corrupt_text: None,
            corrupt_expected_answers: None,
            labels: BTreeMap::new(),
        }
    }

    fn values(vals: &[&str]) -> Vec<SubstitutionValue> {
        vals.iter().map(|v| SubstitutionValue::plain(*v)).collect()
    }

    #[test]
    fn age_template_expands_to_hundred_records() {
        let mut t = template("He is {AGE} years old.");
        t.labels.insert("gender".into(), LabelValue::Text("he".into()));
        let ages: Vec<String> = (1..=100).map(|a| a.to_string()).collect();
        let subs = Substitutions::from([("AGE".to_string(), ages.iter().map(SubstitutionValue::plain).collect())]);
        let records = expand_template(&t, &subs).unwrap();
        assert_eq!(records.len(), 100);
        let twentieth = &records[19];
        assert_eq!(twentieth.text, "He is 20 years old.");
        assert_eq!(twentieth.labels["age"], LabelValue::Int(20));
        assert_eq!(twentieth.labels["gender"], LabelValue::Text("he".into()));
    }

    #[test]
    fn no_placeholders_yields_identity() {
        let t = template("How long do people live around the world?");
        let records = expand_template(&t, &Substitutions::new()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].text, t.text);
    }

    #[test]
    fn cross_product_matches_enumeration() {
        let t = template("{B} and {A}");
        let a = ["a1", "a2", "a3"];
        let b = ["b1", "b2", "b3", "b4"];
        let subs = Substitutions::from([("A".to_string(), values(&a)), ("B".to_string(), values(&b))]);
        let records = expand_template(&t, &subs).unwrap();

        // Oracle: nested loops, A (first name) outermost.
        let mut expected = Vec::new();
        for x in &a {
            for y in &b {
                expected.push(format!("{y} and {x}"));
            }
        }
        let got: Vec<_> = records.iter().map(|r| r.text.clone()).collect();
        assert_eq!(got, expected);
        assert_eq!(records.len(), 12);
    }

    #[test]
    fn missing_placeholder_is_named() {
        let t = template("A patient has {SYMPTOM}.");
        let err = expand_template(&t, &Substitutions::new()).unwrap_err();
        assert_eq!(err, PromptError::MissingSubstitution("SYMPTOM".into()));
    }

    #[test]
    fn empty_value_list_is_rejected() {
        let t = template("A patient has {SYMPTOM}.");
        let subs = Substitutions::from([("SYMPTOM".to_string(), vec![])]);
        assert_eq!(
            expand_template(&t, &subs).unwrap_err(),
            PromptError::EmptySubstitution("SYMPTOM".into())
        );
    }

    #[test]
    fn attribute_slots_follow_the_chosen_value() {
        let mut t = template("For {P.clean}, a common symptom is");
        t.analysis = Analysis::Patching;
        t.expected_answers = vec!["{P.clean_answer}".into()];
        t.corrupt_text = Some("For {P.corrupt}, a common symptom is".into());
        t.corrupt_expected_answers = Some(vec!["{P.corrupt_answer}".into()]);
        let pair = SubstitutionValue::plain("m-e")
            .with_label("clean", LabelValue::Text("migraine".into()))
            .with_label("corrupt", LabelValue::Text("epilepsy".into()))
            .with_label("clean_answer", LabelValue::Text("headache".into()))
            .with_label("corrupt_answer", LabelValue::Text("seizures".into()));
        let subs = Substitutions::from([("P".to_string(), vec![pair])]);
        let records = expand_template(&t, &subs).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].text, "For migraine, a common symptom is");
        assert_eq!(records[1].expected_answers, vec!["seizures".to_string()]);
        assert_eq!(records[0].pair_id, records[1].pair_id);
    }

    #[test]
    fn identical_pair_answers_are_rejected() {
        let mut t = template("x {P}");
        t.analysis = Analysis::Patching;
        t.expected_answers = vec!["same".into()];
        t.corrupt_text = Some("y {P}".into());
        t.corrupt_expected_answers = Some(vec!["same".into()]);
        let subs = Substitutions::from([("P".to_string(), values(&["v"]))]);
        assert!(matches!(
            expand_template(&t, &subs),
            Err(PromptError::InvalidPair { .. })
        ));
    }

    #[test]
    fn non_identifier_braces_are_literal() {
        assert!(placeholders("a {not a slot} b").is_empty());
        assert_eq!(placeholders("{X.y} {Z}").len(), 2);
    }
}
