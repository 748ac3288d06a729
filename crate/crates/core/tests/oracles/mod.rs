//! Independent reference implementations shared by the oracle tests and
//! the acceptance suite.
#![allow(dead_code)]

use std::collections::HashMap;

/// (prediction, golds, em, f1) produced by `oracles/squad_reference.py`.
pub const SQUAD_REFERENCE: &[(&str, &[&str], u8, f64)] = &[
    ("Cam Newton", &["Cam Newton"], 1, 1.0),
    ("cam newton", &["Cam Newton"], 1, 1.0),
    ("denver broncos", &["Cam Newton"], 0, 0.0),
    ("2003", &["2003", "February 2003"], 1, 1.0),
    ("newton", &["cam newton"], 0, 0.6666666666666666),
    ("pink", &["Pink."], 1, 1.0),
    ("The Chevron.", &["Chevron"], 1, 1.0),
    ("a Chevron", &["the chevron corporation"], 0, 0.6666666666666666),
    ("An apple a day", &["apple day"], 1, 1.0),
    ("theatre", &["the atre"], 0, 0.0),
    ("Levi's Stadium", &["Levis Stadium"], 1, 1.0),
    ("Levi's Stadium", &["Levi Stadium"], 0, 0.5),
    ("February 7, 2016", &["February 7, 2016", "7 February 2016"], 1, 1.0),
    ("7 February", &["February 7, 2016", "2016"], 0, 0.8),
    ("super bowl xxxiii", &["Super Bowl 50"], 0, 0.6666666666666666),
    ("the the the", &["the"], 1, 1.0),
    ("", &["the"], 1, 1.0),
    ("", &["Chevron"], 0, 0.0),
    ("asotus", &["Asotus", "asotus the prodigal"], 1, 1.0),
    ("a dark brown slime", &["Pink."], 0, 0.0),
    ("24-10", &["24–10"], 0, 0.0),
    ("24-10", &["2410"], 1, 1.0),
    ("U.S.A.", &["USA"], 1, 1.0),
    ("new new york", &["new york york"], 0, 0.6666666666666666),
    ("Über café", &["über Café!"], 1, 1.0),
    ("(Denver) [Broncos]", &["Denver Broncos"], 1, 1.0),
    ("  spaced    out  ", &["spaced out"], 1, 1.0),
    ("page 62", &["page", "62"], 0, 0.6666666666666666),
    ("the page", &["page", "Anaides"], 1, 1.0),
    ("a total of 62", &["296"], 0, 0.0),
];

/// Direct evaluation of the BM25 sum over raw token lists, without any
/// index structure.
pub fn brute_force_bm25(docs: &[Vec<String>], query: &[String], doc: usize, k1: f64, b: f64) -> f64 {
    let n_docs = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n_docs;
    let d = &docs[doc];
    let mut score = 0.0;
    for term in query {
        let f = d.iter().filter(|t| *t == term).count() as f64;
        if f == 0.0 {
            continue;
        }
        let n = docs.iter().filter(|other| other.contains(term)).count() as f64;
        let idf = (1.0 + (n_docs - n + 0.5) / (n + 0.5)).ln();
        score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
    }
    score
}

/// Plain recursive LCS with memoization.
pub fn lcs_memo(a: &[&str], b: &[&str], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if i == a.len() || j == b.len() {
        return 0;
    }
    if let Some(&v) = memo.get(&(i, j)) {
        return v;
    }
    let v = if a[i] == b[j] {
        1 + lcs_memo(a, b, i + 1, j + 1, memo)
    } else {
        lcs_memo(a, b, i + 1, j, memo).max(lcs_memo(a, b, i, j + 1, memo))
    };
    memo.insert((i, j), v);
    v
}

pub fn rouge_oracle(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let lcs = lcs_memo(pred, gold, 0, 0, &mut HashMap::new()) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / pred.len() as f64;
    let r = lcs / gold.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn f1_oracle(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut p: Vec<&str> = pred.to_vec();
    let mut g: Vec<&str> = gold.to_vec();
    p.sort_unstable();
    g.sort_unstable();
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < p.len() && j < g.len() {
        match p[i].cmp(g[j]) {
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn lcs_oracle(a: &[&str], b: &[&str]) -> usize {
    lcs_memo(a, b, 0, 0, &mut HashMap::new())
}
