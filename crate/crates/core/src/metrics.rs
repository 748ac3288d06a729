//! Exact Match, token F1 and ROUGE-L with SQuAD-style answer normalization.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("at least one gold answer is required")]
    NoGolds,
}

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").unwrap());

/// Lowercase, strip ASCII punctuation, drop the articles a/an/the and
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalized_tokens(text: &str) -> Vec<String> {
    normalize_answer(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn require_golds<S: AsRef<str>>(golds: &[S]) -> Result<(), MetricsError> {
    if golds.is_empty() {
        Err(MetricsError::NoGolds)
    } else {
        Ok(())
    }
}

/// 1 if the normalized prediction equals any normalized gold answer.
pub fn exact_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<u8, MetricsError> {
    require_golds(golds)?;
    let pred = normalize_answer(prediction);
    Ok(golds.iter().any(|g| normalize_answer(g.as_ref()) == pred) as u8)
}

fn f_measure(overlap: usize, pred_len: usize, gold_len: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred_len as f64;
    let recall = overlap as f64 / gold_len as f64;
    2.0 * precision * recall / (precision + recall)
}

fn token_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return (pred.is_empty() && gold.is_empty()) as u8 as f64;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    f_measure(overlap, pred.len(), gold.len())
}

/// Token-level F1 against the best-matching gold answer.
pub fn f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<f64, MetricsError> {
    require_golds(golds)?;
    let pred = normalized_tokens(prediction);
    Ok(golds
        .iter()
        .map(|g| token_f1(&pred, &normalized_tokens(g.as_ref())))
        .fold(0.0, f64::max))
}

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn rouge_l_tokens(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    f_measure(lcs_len(pred, gold), pred.len(), gold.len())
}

/// ROUGE-L F-measure (beta = 1) against one reference.
pub fn rouge_l(prediction: &str, gold: &str) -> f64 {
    rouge_l_tokens(&normalized_tokens(prediction), &normalized_tokens(gold))
}

/// ROUGE-L against the best-matching gold answer.
pub fn rouge_l_multi<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<f64, MetricsError> {
    require_golds(golds)?;
    let pred = normalized_tokens(prediction);
    Ok(golds
        .iter()
        .map(|g| rouge_l_tokens(&pred, &normalized_tokens(g.as_ref())))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub prediction: String,
    pub golds: Vec<String>,
    pub em: u8,
    pub f1: f64,
    pub rouge_l: f64,
}

impl EvalRecord {
    pub fn score(
        question_id: impl Into<String>,
        prediction: impl Into<String>,
        golds: Vec<String>,
    ) -> Result<Self, MetricsError> {
        let prediction = prediction.into();
        Ok(EvalRecord {
            em: exact_match(&prediction, &golds)?,
            f1: f1(&prediction, &golds)?,
            rouge_l: rouge_l_multi(&prediction, &golds)?,
            question_id: question_id.into(),
            prediction,
            golds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub em_pct: f64,
    pub f1_pct: f64,
    pub rouge_l_pct: f64,
    /// Questions whose pipeline run failed; they score zero.
    pub failed: usize,
    /// Questions for which nothing was retrieved; they score zero.
    pub no_evidence: usize,
}

impl EvalReport {
    pub fn aggregate<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Self {
        let (mut n, mut em, mut f1, mut rl) = (0usize, 0.0, 0.0, 0.0);
        for r in records {
            n += 1;
            em += r.em as f64;
            f1 += r.f1;
            rl += r.rouge_l;
        }
        let pct = |sum: f64| if n == 0 { 0.0 } else { 100.0 * sum / n as f64 };
        EvalReport {
            n,
            em_pct: pct(em),
            f1_pct: pct(f1),
            rouge_l_pct: pct(rl),
            failed: 0,
            no_evidence: 0,
        }
    }
}
