//! Reciprocal Rank Fusion of per-retriever rankings.
//!
//! Every passage receives `Σ 1 / (rank_i + k)` over the lists it appears in;
//! lists that do not contain it contribute nothing. The fused order defines
//! the 1-based context rank used when scoring answers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RRF_K: usize = 60;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("rank must be >= 1, got {0}")]
    InvalidRank(usize),
    #[error("rrf constant k must be >= 1")]
    InvalidK,
    #[error("ranked list {retriever:?} is malformed: {reason}")]
    MalformedList { retriever: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub passage_id: String,
    pub score: f64,
    pub rank: usize,
}

/// One retriever's output, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub retriever_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Builds a list from `(passage_id, score)` pairs already in rank order,
    /// assigning ranks 1..=m.
    pub fn from_ordered<I, S>(retriever_id: impl Into<String>, ordered: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let entries = ordered
            .into_iter()
            .enumerate()
            .map(|(i, (id, score))| RankedEntry {
                passage_id: id.into(),
                score,
                rank: i + 1,
            })
            .collect();
        RankedList {
            retriever_id: retriever_id.into(),
            entries,
        }
    }

    pub fn empty(retriever_id: impl Into<String>) -> Self {
        RankedList {
            retriever_id: retriever_id.into(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn passage_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.passage_id.as_str())
    }

    /// Checks ranks are exactly 1..=m and passage ids are unique.
    pub fn validate(&self) -> Result<(), FusionError> {
        let malformed = |reason: String| FusionError::MalformedList {
            retriever: self.retriever_id.clone(),
            reason,
        };
        let mut seen = HashSet::new();
        for (i, entry) in self.entries.iter().enumerate() {
            if entry.rank != i + 1 {
                return Err(malformed(format!(
                    "entry {i} has rank {}, expected {}",
                    entry.rank,
                    i + 1
                )));
            }
            if !seen.insert(entry.passage_id.as_str()) {
                return Err(malformed(format!("duplicate passage {:?}", entry.passage_id)));
            }
        }
        Ok(())
    }
}

/// A passage in the fused ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedContext {
    pub passage_id: String,
    pub rrf_score: f64,
    pub context_rank: usize,
}

/// RRF score for one passage given its rank in each list (`None` = absent).
pub fn rrf_score(ranks: &[Option<usize>], k: usize) -> Result<f64, FusionError> {
    if k == 0 {
        return Err(FusionError::InvalidK);
    }
    let mut present = Vec::with_capacity(ranks.len());
    for &rank in ranks.iter().flatten() {
        if rank == 0 {
            return Err(FusionError::InvalidRank(rank));
        }
        present.push(rank);
    }
    // summing in a canonical order makes the result independent of list order
    present.sort_unstable_by(|a, b| b.cmp(a));
    Ok(present.iter().map(|&r| 1.0 / (r + k) as f64).sum())
}

/// Fuses rankings; ties on score go to the better single-list rank, then to
/// the smaller passage id.
pub fn fuse(lists: &[RankedList], k: usize) -> Result<Vec<FusedContext>, FusionError> {
    if k == 0 {
        return Err(FusionError::InvalidK);
    }
    let mut ranks: BTreeMap<&str, Vec<Option<usize>>> = BTreeMap::new();
    for (i, list) in lists.iter().enumerate() {
        list.validate()?;
        for entry in &list.entries {
            ranks
                .entry(entry.passage_id.as_str())
                .or_insert_with(|| vec![None; lists.len()])[i] = Some(entry.rank);
        }
    }

    let mut scored = Vec::with_capacity(ranks.len());
    for (id, passage_ranks) in ranks {
        let best = passage_ranks.iter().flatten().min().copied().unwrap_or(usize::MAX);
        scored.push((id, rrf_score(&passage_ranks, k)?, best));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)).then_with(|| a.0.cmp(b.0)));

    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (id, rrf_score, _))| FusedContext {
            passage_id: id.to_owned(),
            rrf_score,
            context_rank: i + 1,
        })
        .collect())
}

/// Descending score order with ascending id as the tie-break; shared by the
/// retrievers so their rankings are deterministic.
pub(crate) fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}
