//! Response judging and accuracy aggregation.
//!
//! Hidden text must appear verbatim (as a whole-token sequence for Latin
//! script, as an exact code-point run otherwise). Hidden objects only need the
//! category or one of the curated synonyms.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::manifest::{BenchmarkItem, ItemKind};
use crate::protocol::{EvalTranscript, StageVerdict};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("transcripts come from different manifests ({0} vs {1})")]
    MixedRun(String, String),
    #[error("override targets no transcript entry: item {item_id}, model {model}, stage {stage}")]
    UnknownKey { item_id: String, model: String, stage: String },
    #[error("cannot read overrides {path}: {message}")]
    OverrideFile { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleFired {
    ExactText,
    CategoryTerm,
    ManualOverride,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_span: Option<String>,
    pub rule_fired: RuleFired,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    fn miss() -> Self {
        Self { correct: false, matched_span: None, rule_fired: RuleFired::None, note: None }
    }
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic()
        || matches!(c as u32, 0x00C0..=0x024F | 0x1E00..=0x1EFF)
}

/// True when every letter of `text` belongs to the Latin blocks.
pub fn is_latin_text(text: &str) -> bool {
    text.chars().filter(|c| c.is_alphabetic()).all(is_latin_letter)
}

/// Alphanumeric runs with their byte spans.
fn tokens(text: &str) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i, text[s..i].to_lowercase()));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len(), text[s..].to_lowercase()));
    }
    out
}

pub fn judge_text(response: &str, ground_truth: &str) -> Verdict {
    let response: String = collapse_whitespace(&response.nfc().collect::<String>());
    let truth: String = collapse_whitespace(&ground_truth.nfc().collect::<String>());
    if truth.is_empty() {
        return Verdict::miss();
    }
    if is_latin_text(&truth) {
        let wanted: Vec<String> = tokens(&truth).into_iter().map(|t| t.2).collect();
        if wanted.is_empty() {
            return Verdict::miss();
        }
        let got = tokens(&response);
        for window in got.windows(wanted.len()) {
            if window.iter().zip(&wanted).all(|(g, w)| &g.2 == w) {
                let span = response[window[0].0..window[window.len() - 1].1].to_string();
                return Verdict { correct: true, matched_span: Some(span), rule_fired: RuleFired::ExactText, note: None };
            }
        }
        Verdict::miss()
    } else if response.contains(&truth) {
        Verdict { correct: true, matched_span: Some(truth), rule_fired: RuleFired::ExactText, note: None }
    } else {
        Verdict::miss()
    }
}

/// Case-insensitive occurrence of `term` not embedded in a longer word.
fn find_term(haystack: &str, term: &str) -> Option<(usize, usize)> {
    if term.is_empty() {
        return None;
    }
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(term) {
        let start = from + pos;
        let end = start + term.len();
        let before_ok = haystack[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return Some((start, end));
        }
        from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

pub fn judge_object(response: &str, ground_truth: &str, synonyms: &[String]) -> Verdict {
    let haystack = collapse_whitespace(&response.nfc().collect::<String>()).to_lowercase();
    for term in std::iter::once(ground_truth).chain(synonyms.iter().map(String::as_str)) {
        let needle = collapse_whitespace(&term.nfc().collect::<String>()).to_lowercase();
        if let Some((s, e)) = find_term(&haystack, &needle) {
            return Verdict {
                correct: true,
                matched_span: Some(haystack[s..e].to_string()),
                rule_fired: RuleFired::CategoryTerm,
                note: None,
            };
        }
    }
    Verdict::miss()
}

/// Dispatches on the item kind.
pub fn judge(item: &BenchmarkItem, response: &str) -> Verdict {
    match item.kind {
        ItemKind::HiddenText => judge_text(response, &item.ground_truth),
        ItemKind::HiddenObject => judge_object(response, &item.ground_truth, &item.synonyms),
    }
}

/// `round(10000 * num / den)` half away from zero, i.e. percent in hundredths.
pub fn percent_hundredths(numerator: u64, denominator: u64) -> u64 {
    if denominator == 0 {
        return 0;
    }
    (20000 * numerator + denominator) / (2 * denominator)
}

pub fn format_hundredths(value: i64) -> String {
    let sign = if value < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", value.abs() / 100, value.abs() % 100)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub model: String,
    pub stage: String,
    pub kind: ItemKind,
    pub numerator: u64,
    pub denominator: u64,
    /// Percent times 100, rounded half away from zero.
    pub percent_hundredths: u64,
    pub percent: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_vs_best_baseline: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageColumn {
    pub label: String,
    pub baseline: bool,
    pub header: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyTable {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
    pub models: Vec<String>,
    pub stages: Vec<StageColumn>,
    pub cells: Vec<AccuracyCell>,
}

impl AccuracyTable {
    pub fn cell(&self, model: &str, stage: &str, kind: ItemKind) -> Option<&AccuracyCell> {
        self.cells.iter().find(|c| c.model == model && c.stage == stage && c.kind == kind)
    }

    /// Cell percent minus the best baseline-stage percent for the same model
    /// and kind. `None` for baseline stages or when no baseline ran.
    pub fn delta_vs_best_baseline(&self, model: &str, stage: &str, kind: ItemKind) -> Option<i64> {
        let column = self.stages.iter().find(|s| s.label == stage)?;
        if column.baseline {
            return None;
        }
        let cell = self.cell(model, stage, kind)?;
        let best = self
            .stages
            .iter()
            .filter(|s| s.baseline)
            .filter_map(|s| self.cell(model, &s.label, kind))
            .map(|c| c.percent_hundredths)
            .max()?;
        Some(cell.percent_hundredths as i64 - best as i64)
    }
}

/// Per (model, stage, kind) accuracy over one run's transcripts.
pub fn aggregate(transcripts: &[EvalTranscript]) -> Result<AccuracyTable, ScoringError> {
    let mut manifest_hash: Option<&str> = None;
    for t in transcripts {
        match manifest_hash {
            None => manifest_hash = Some(&t.manifest_hash),
            Some(h) if h != t.manifest_hash => return Err(ScoringError::MixedRun(h.to_string(), t.manifest_hash.clone())),
            _ => {}
        }
    }

    let mut models: Vec<String> = Vec::new();
    let mut stages: Vec<StageColumn> = Vec::new();
    let mut seen_stage = HashSet::new();
    // (model, stage, kind) -> (correct, total)
    let mut counts: BTreeMap<(String, String, ItemKind), (u64, u64)> = BTreeMap::new();
    for t in transcripts {
        if !models.contains(&t.model_name) {
            models.push(t.model_name.clone());
        }
        for outcome in &t.outcomes {
            if seen_stage.insert(outcome.stage.clone()) {
                stages.push(StageColumn {
                    label: outcome.stage.clone(),
                    baseline: outcome.baseline,
                    header: outcome.header.clone(),
                });
            }
            let entry = counts.entry((t.model_name.clone(), outcome.stage.clone(), t.kind)).or_default();
            entry.1 += 1;
            if outcome.verdict == StageVerdict::Correct {
                entry.0 += 1;
            }
        }
    }

    let mut table = AccuracyTable { manifest_hash: manifest_hash.map(str::to_string), models, stages, cells: Vec::new() };
    for model in &table.models {
        for stage in &table.stages {
            for kind in [ItemKind::HiddenText, ItemKind::HiddenObject] {
                if let Some(&(num, den)) = counts.get(&(model.clone(), stage.label.clone(), kind)) {
                    let hundredths = percent_hundredths(num, den);
                    table.cells.push(AccuracyCell {
                        model: model.clone(),
                        stage: stage.label.clone(),
                        kind,
                        numerator: num,
                        denominator: den,
                        percent_hundredths: hundredths,
                        percent: format_hundredths(hundredths as i64),
                        delta_vs_best_baseline: None,
                    });
                }
            }
        }
    }
    let deltas: Vec<Option<String>> = table
        .cells
        .iter()
        .map(|c| table.delta_vs_best_baseline(&c.model, &c.stage, c.kind).map(|d| format!("{:+}", Signed(d))))
        .collect();
    for (cell, delta) in table.cells.iter_mut().zip(deltas) {
        cell.delta_vs_best_baseline = delta;
    }
    Ok(table)
}

/// Hundredths rendered with an explicit sign, e.g. `+91.07`.
pub struct Signed(pub i64);

impl std::fmt::Display for Signed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = format_hundredths(self.0);
        if f.sign_plus() && self.0 >= 0 {
            write!(f, "+{text}")
        } else {
            f.write_str(&text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub item_id: String,
    pub model: String,
    pub stage: String,
    pub correct: bool,
    #[serde(default)]
    pub note: String,
}

pub fn load_overrides(path: impl AsRef<Path>) -> Result<Vec<Override>, ScoringError> {
    let path = path.as_ref();
    let err = |message: String| ScoringError::OverrideFile { path: path.display().to_string(), message };
    let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| err(e.to_string()))
}

/// Replaces judged verdicts with reviewer decisions.
pub fn apply_overrides(transcripts: &[EvalTranscript], overrides: &[Override]) -> Result<Vec<EvalTranscript>, ScoringError> {
    let mut out = transcripts.to_vec();
    for o in overrides {
        let unknown = || ScoringError::UnknownKey { item_id: o.item_id.clone(), model: o.model.clone(), stage: o.stage.clone() };
        let transcript = out
            .iter_mut()
            .find(|t| t.item_id == o.item_id && t.model_name == o.model)
            .ok_or_else(unknown)?;
        let outcome = transcript.outcomes.iter_mut().find(|s| s.stage == o.stage).ok_or_else(unknown)?;
        outcome.verdict = if o.correct { StageVerdict::Correct } else { StageVerdict::Incorrect };
        let judgement = Verdict {
            correct: o.correct,
            matched_span: None,
            rule_fired: RuleFired::ManualOverride,
            note: (!o.note.is_empty()).then(|| o.note.clone()),
        };
        outcome.judgement = Some(judgement.clone());
        if let Some(record) = transcript.records.iter_mut().find(|r| r.label == o.stage) {
            record.verdict = outcome.verdict;
            record.judgement = Some(judgement);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_examples() {
        let v = judge_text("The hidden text says NEW YORK.", "New York");
        assert!(v.correct);
        assert_eq!(v.rule_fired, RuleFired::ExactText);
        assert_eq!(v.matched_span.as_deref(), Some("NEW YORK"));
        assert!(!judge_text("I see a city street at dusk.", "New York").correct);
        assert!(!judge_text("it spells 'Newyork'", "New York").correct);
    }

    #[test]
    fn text_is_whole_token() {
        assert!(!judge_text("a map used in cartography", "art").correct);
        assert!(judge_text("the word is\n  art", "ART").correct);
        assert!(judge_text("Mars, the red planet", "Mars").correct);
        assert!(!judge_text("New", "New York").correct);
    }

    #[test]
    fn non_latin_is_exact_codepoints() {
        assert!(judge_text("画像には「東京」と書かれています", "東京").correct);
        assert!(!judge_text("画像には「東」と書かれています", "東京").correct);
        // NFC: decomposed input still matches a composed truth in Latin text
        assert!(judge_text("the word is cafe\u{301}", "café").correct);
    }

    #[test]
    fn object_examples() {
        assert_eq!(judge_object("a hidden cat silhouette emerges", "cat", &[]).rule_fired, RuleFired::CategoryTerm);
        let syn = vec!["dinosaur".to_string(), "T-rex".to_string()];
        let v = judge_object("looks like a dinosaur shape", "Tyrannosaurus", &syn);
        assert!(v.correct);
        assert_eq!(v.matched_span.as_deref(), Some("dinosaur"));
        assert!(judge_object("A T-REX stands there", "Tyrannosaurus", &syn).correct);
        assert!(!judge_object("mountains, a lake and some clouds", "cat", &[]).correct);
        assert!(!judge_object("a concatenated pattern", "cat", &[]).correct);
    }

    #[test]
    fn percent_rounding() {
        assert_eq!(format_hundredths(percent_hundredths(55, 56) as i64), "98.21");
        assert_eq!(format_hundredths(percent_hundredths(3, 56) as i64), "5.36");
        assert_eq!(format_hundredths(percent_hundredths(5, 56) as i64), "8.93");
        assert_eq!(format_hundredths(percent_hundredths(1, 56) as i64), "1.79");
        assert_eq!(format_hundredths(percent_hundredths(0, 56) as i64), "0.00");
        assert_eq!(format_hundredths(percent_hundredths(56, 56) as i64), "100.00");
        // exact half rounds away from zero: 1/8 = 12.5%
        assert_eq!(percent_hundredths(1, 8), 1250);
        assert_eq!(percent_hundredths(1, 16000), 1);
        assert_eq!(format!("{:+}", Signed(10000 - 893)), "+91.07");
        assert_eq!(format!("{:+}", Signed(-50)), "-0.50");
    }
}
