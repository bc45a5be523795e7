//! Answer-quality and memory-efficiency metrics.
//!
//! Answer metrics compare a prediction with one or more gold answers after
//! [`normalize_answer`] and take the best score over the golds. Memory
//! metrics describe the retrieved memory text itself.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no records")]
    Empty,
    #[error("no record has any tokens")]
    NoTokens,
    #[error("no record has gold evidence")]
    NoGoldEvidence,
    #[error("answer pair has no gold answers")]
    NoGold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPair {
    pub prediction: String,
    pub golds: Vec<String>,
}

impl AnswerPair {
    pub fn new(prediction: impl Into<String>, golds: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { prediction: prediction.into(), golds: golds.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub retrieved_text: String,
    pub gold_answer: String,
    pub has_gold_evidence: bool,
}

/// Lowercase, drop ASCII punctuation, drop the articles `a`/`an`/`the`, and
/// collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn tokens(s: &str) -> Vec<String> {
    normalize_answer(s).split_whitespace().map(str::to_string).collect()
}

fn best_over_golds(p: &AnswerPair, score: impl Fn(&str, &str) -> f64) -> f64 {
    p.golds.iter().map(|g| score(&p.prediction, g)).fold(0.0, f64::max)
}

pub fn exact_match(p: &AnswerPair) -> u8 {
    let pred = normalize_answer(&p.prediction);
    u8::from(p.golds.iter().any(|g| normalize_answer(g) == pred))
}

/// Size of the multiset intersection of two token lists.
fn overlap(a: &[String], b: &[String]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in b {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut common = 0;
    for t in a {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    common
}

fn f_measure(common: usize, pred_len: usize, gold_len: usize) -> f64 {
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_len as f64;
    let recall = common as f64 / gold_len as f64;
    2.0 * precision * recall / (precision + recall)
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let (p, g) = (tokens(pred), tokens(gold));
    match (p.is_empty(), g.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => f_measure(overlap(&p, &g), p.len(), g.len()),
    }
}

/// SQuAD-style token F1 with multiset overlap. Both sides empty scores 1.
pub fn token_f1(p: &AnswerPair) -> f64 {
    best_over_golds(p, f1_single)
}

fn rouge1_single(pred: &str, gold: &str) -> f64 {
    let (p, g) = (tokens(pred), tokens(gold));
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    f_measure(overlap(&p, &g), p.len(), g.len())
}

/// ROUGE-1 F-measure: unigram overlap clipped by gold counts. Unlike
/// [`token_f1`], an empty side always scores 0.
pub fn rouge1(p: &AnswerPair) -> f64 {
    best_over_golds(p, rouge1_single)
}

/// Mean length of the retrieved text in Unicode scalar values.
pub fn mem_length(records: &[MemoryRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: usize = records.iter().map(|r| r.retrieved_text.chars().count()).sum();
    Ok(total as f64 / records.len() as f64)
}

/// Mean over records of distinct/total whitespace tokens of the lowercased
/// text. Records without tokens have no ratio and are skipped.
pub fn unique_ratio(records: &[MemoryRecord]) -> Result<f64, MetricsError> {
    let ratios: Vec<f64> = records
        .iter()
        .filter_map(|r| {
            let lowered = r.retrieved_text.to_lowercase();
            let toks: Vec<&str> = lowered.split_whitespace().collect();
            if toks.is_empty() {
                return None;
            }
            let distinct: HashSet<&str> = toks.iter().copied().collect();
            Some(distinct.len() as f64 / toks.len() as f64)
        })
        .collect();
    if ratios.is_empty() {
        return Err(if records.is_empty() { MetricsError::Empty } else { MetricsError::NoTokens });
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Whether the normalized answer occurs as a contiguous token run of the
/// normalized text. An answer that normalizes to nothing never does.
pub fn contains_answer(text: &str, answer: &str) -> bool {
    let hay = tokens(text);
    let needle = tokens(answer);
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Fraction of gold-evidence records whose retrieved text contains the
/// answer.
pub fn memory_utilization(records: &[MemoryRecord]) -> Result<f64, MetricsError> {
    let with_gold: Vec<&MemoryRecord> = records.iter().filter(|r| r.has_gold_evidence).collect();
    if with_gold.is_empty() {
        return Err(MetricsError::NoGoldEvidence);
    }
    let answered = with_gold.iter().filter(|r| contains_answer(&r.retrieved_text, &r.gold_answer)).count();
    Ok(answered as f64 / with_gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub em: f64,
    pub f1: f64,
    pub rouge1: f64,
    pub mem_length: f64,
    pub unique_ratio: f64,
    pub utilization: f64,
    pub n: usize,
}

/// All six metrics over paired answers and memory records.
pub fn evaluate(answers: &[AnswerPair], records: &[MemoryRecord]) -> Result<EvalReport, MetricsError> {
    if answers.is_empty() {
        return Err(MetricsError::Empty);
    }
    if answers.iter().any(|a| a.golds.is_empty()) {
        return Err(MetricsError::NoGold);
    }
    let n = answers.len() as f64;
    Ok(EvalReport {
        em: answers.iter().map(|a| f64::from(exact_match(a))).sum::<f64>() / n,
        f1: answers.iter().map(token_f1).sum::<f64>() / n,
        rouge1: answers.iter().map(rouge1).sum::<f64>() / n,
        mem_length: mem_length(records)?,
        unique_ratio: unique_ratio(records)?,
        utilization: memory_utilization(records)?,
        n: answers.len(),
    })
}
