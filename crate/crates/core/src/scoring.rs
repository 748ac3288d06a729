//! Answer confidence and the LoR selection score.
//!
//! A generated answer's confidence is the mean, over its decoding steps, of
//! the vocabulary-softmax probability of the token emitted at that step. The
//! LoR score blends that confidence with the inverse of the 1-based rank of
//! the context the answer was generated from:
//!
//! ```text
//! LoR = w1 * mean_score + w2 / context_rank
//! ```

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("empty logit vector")]
    EmptyLogits,
    #[error("token index {index} out of range for {len} logits")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite logit")]
    NonFiniteLogit,
    #[error("no step probabilities")]
    EmptyProbabilities,
    #[error("step probability {0} outside (0, 1]")]
    InvalidProbability(f64),
    #[error("mean score {0} outside [0, 1]")]
    InvalidMean(f64),
    #[error("context rank must be >= 1")]
    InvalidRank,
    #[error("invalid LoR weights ({w1}, {w2}): both must be >= 0 with a positive sum")]
    InvalidWeights { w1: f64, w2: f64 },
    #[error("no candidate answers")]
    NoCandidates,
}

/// Probability of `emitted_index` under a softmax over `step_logits`.
pub fn step_probability(step_logits: &[f64], emitted_index: usize) -> Result<f64, ScoringError> {
    if step_logits.is_empty() {
        return Err(ScoringError::EmptyLogits);
    }
    if emitted_index >= step_logits.len() {
        return Err(ScoringError::IndexOutOfRange {
            index: emitted_index,
            len: step_logits.len(),
        });
    }
    if step_logits.iter().any(|l| !l.is_finite()) {
        return Err(ScoringError::NonFiniteLogit);
    }
    let max = step_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = step_logits.iter().map(|l| (l - max).exp()).sum();
    Ok((step_logits[emitted_index] - max).exp() / denom)
}

pub fn validate_probability(p: f64) -> Result<f64, ScoringError> {
    if p.is_finite() && p > 0.0 && p <= 1.0 {
        Ok(p)
    } else {
        Err(ScoringError::InvalidProbability(p))
    }
}

/// Arithmetic mean of per-step probabilities.
pub fn mean_score(step_probs: &[f64]) -> Result<f64, ScoringError> {
    if step_probs.is_empty() {
        return Err(ScoringError::EmptyProbabilities);
    }
    let mut sum = 0.0;
    for &p in step_probs {
        sum += validate_probability(p)?;
    }
    // the mean of values in (0, 1] can exceed 1 by rounding
    Ok((sum / step_probs.len() as f64).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorWeights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for LorWeights {
    fn default() -> Self {
        LorWeights { w1: 0.8, w2: 0.2 }
    }
}

impl LorWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, ScoringError> {
        let w = LorWeights { w1, w2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        let ok =
            self.w1.is_finite() && self.w2.is_finite() && self.w1 >= 0.0 && self.w2 >= 0.0 && self.w1 + self.w2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ScoringError::InvalidWeights {
                w1: self.w1,
                w2: self.w2,
            })
        }
    }
}

pub fn lor(mean: f64, context_rank: usize, w: LorWeights) -> Result<f64, ScoringError> {
    if context_rank < 1 {
        return Err(ScoringError::InvalidRank);
    }
    if !(0.0..=1.0).contains(&mean) {
        return Err(ScoringError::InvalidMean(mean));
    }
    w.validate()?;
    Ok(w.w1 * mean + w.w2 / context_rank as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub text: String,
    pub passage_id: String,
    pub mean_score: f64,
    pub context_rank: usize,
    pub lor_score: f64,
}

impl ScoredAnswer {
    pub fn new(
        text: impl Into<String>,
        passage_id: impl Into<String>,
        mean_score: f64,
        context_rank: usize,
        w: LorWeights,
    ) -> Result<Self, ScoringError> {
        Ok(ScoredAnswer {
            lor_score: lor(mean_score, context_rank, w)?,
            text: text.into(),
            passage_id: passage_id.into(),
            mean_score,
            context_rank,
        })
    }

    /// Scores a generation from its per-step probabilities.
    pub fn from_step_probs(
        text: impl Into<String>,
        passage_id: impl Into<String>,
        step_probs: &[f64],
        context_rank: usize,
        w: LorWeights,
    ) -> Result<Self, ScoringError> {
        Self::new(text, passage_id, mean_score(step_probs)?, context_rank, w)
    }
}

/// Orders answers best-first: higher LoR, then smaller context rank, then text.
pub fn selection_order(a: &ScoredAnswer, b: &ScoredAnswer) -> Ordering {
    b.lor_score
        .total_cmp(&a.lor_score)
        .then(a.context_rank.cmp(&b.context_rank))
        .then_with(|| a.text.cmp(&b.text))
}

/// The answer with the highest LoR score.
pub fn select(answers: &[ScoredAnswer]) -> Result<&ScoredAnswer, ScoringError> {
    answers
        .iter()
        .min_by(|a, b| selection_order(a, b))
        .ok_or(ScoringError::NoCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_probability_examples() {
        assert_eq!(step_probability(&[0.0, 0.0], 0).unwrap(), 0.5);
        let p = step_probability(&[10.0, 0.0], 0).unwrap();
        let direct = 10f64.exp() / (10f64.exp() + 1.0);
        assert!((p - direct).abs() < 1e-15);
        assert!((p - 0.9999546).abs() < 1e-7);
        assert_eq!(step_probability(&[5.0], 0).unwrap(), 1.0);
    }

    #[test]
    fn step_probability_is_stable_for_large_logits() {
        let p = step_probability(&[1000.0, 999.0], 1).unwrap();
        assert!((p - 1.0 / (1.0 + 1f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn step_probability_errors() {
        assert_eq!(step_probability(&[], 0), Err(ScoringError::EmptyLogits));
        assert!(matches!(
            step_probability(&[1.0], 1),
            Err(ScoringError::IndexOutOfRange { .. })
        ));
        assert_eq!(step_probability(&[f64::NAN, 1.0], 1), Err(ScoringError::NonFiniteLogit));
        assert_eq!(step_probability(&[f64::INFINITY], 0), Err(ScoringError::NonFiniteLogit));
    }

    #[test]
    fn mean_score_examples() {
        assert!((mean_score(&[0.9, 0.8, 1.0]).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(mean_score(&[0.37]).unwrap(), 0.37);
        assert_eq!(mean_score(&[0.995, 0.995]).unwrap(), 0.995);
        assert_eq!(mean_score(&[]), Err(ScoringError::EmptyProbabilities));
        assert_eq!(mean_score(&[0.5, 0.0]), Err(ScoringError::InvalidProbability(0.0)));
        assert!(mean_score(&[1.5]).is_err());
    }

    #[test]
    fn lor_examples() {
        let w = LorWeights::default();
        assert_eq!(lor(1.0, 1, w).unwrap(), 1.0);
        assert!((lor(0.995, 1, w).unwrap() - 0.996).abs() < 1e-12);
        assert!((lor(0.944, 8, w).unwrap() - 0.7802).abs() < 1e-12);
        assert_eq!(lor(0.5, 0, w), Err(ScoringError::InvalidRank));
        assert!(lor(1.1, 1, w).is_err());
        assert!(LorWeights::new(0.0, 0.0).is_err());
        assert!(LorWeights::new(-0.1, 1.0).is_err());
    }

    fn answer(text: &str, mean: f64, rank: usize) -> ScoredAnswer {
        ScoredAnswer::new(text, format!("p{rank}"), mean, rank, LorWeights::default()).unwrap()
    }

    #[test]
    fn select_ties_prefer_smaller_rank_then_text() {
        // equal weights make (1.0, rank 2) and (0.5, rank 1) tie exactly
        let w = LorWeights::new(1.0, 1.0).unwrap();
        let a = ScoredAnswer::new("far", "p2", 1.0, 2, w).unwrap();
        let b = ScoredAnswer::new("near", "p1", 0.5, 1, w).unwrap();
        assert_eq!(a.lor_score, b.lor_score);
        assert_eq!(select(&[a.clone(), b.clone()]).unwrap().text, "near");
        assert_eq!(select(&[b, a]).unwrap().text, "near");

        let x = answer("beta", 0.9, 3);
        let y = answer("alpha", 0.9, 3);
        assert_eq!(select(&[x, y]).unwrap().text, "alpha");
    }

    #[test]
    fn select_empty() {
        assert_eq!(select(&[]), Err(ScoringError::NoCandidates));
    }
}
