//! BM25 inverted index over unigram tokens.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Corpus};
use crate::fusion::{by_score_then_id, RankedList};
use crate::persist::{IndexReader, IndexWriter, PersistError};

pub const SPARSE_MAGIC: &str = "LOREIDX1 sparse";
pub const SPARSE_RETRIEVER_ID: &str = "bm25";

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error("unknown passage id {0:?}")]
    UnknownPassage(String),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), SparseError> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(SparseError::InvalidParams(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(SparseError::InvalidParams(format!(
                "b must be in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    doc: u32,
    tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    doc_by_id: HashMap<String, u32>,
    postings: HashMap<String, Vec<Posting>>,
    avgdl: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    num_docs: usize,
    avgdl: f64,
    k1: f64,
    b: f64,
    /// `[passage_id, token_count]` in index order.
    docs: Vec<(String, u32)>,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    term: String,
    postings: Vec<(String, u32)>,
}

impl SparseIndex {
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self, SparseError> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(SparseError::EmptyCorpus);
        }
        let mut index = SparseIndex {
            params,
            doc_ids: Vec::with_capacity(corpus.len()),
            doc_lengths: Vec::with_capacity(corpus.len()),
            doc_by_id: HashMap::with_capacity(corpus.len()),
            postings: HashMap::new(),
            avgdl: 0.0,
        };
        for passage in corpus.passages() {
            let doc = index.doc_ids.len() as u32;
            let tokens = tokenize(&passage.text);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for token in &tokens {
                *counts.entry(token.clone()).or_default() += 1;
            }
            for (term, tf) in counts {
                index.postings.entry(term).or_default().push(Posting { doc, tf });
            }
            index.doc_ids.push(passage.id.clone());
            index.doc_lengths.push(tokens.len() as u32);
            index.doc_by_id.insert(passage.id.clone(), doc);
        }
        index.avgdl = mean_length(&index.doc_lengths);
        Ok(index)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn vocab_size(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_length(&self, passage_id: &str) -> Option<u32> {
        self.doc_by_id.get(passage_id).map(|&d| self.doc_lengths[d as usize])
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_frequency(&self, term: &str, passage_id: &str) -> u32 {
        let Some(&doc) = self.doc_by_id.get(passage_id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|list| list.binary_search_by_key(&doc, |p| p.doc).ok().map(|i| list[i].tf))
            .unwrap_or(0)
    }

    /// `(passage_id, tf)` postings for `term`, in index order.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings.get(term).map_or_else(Vec::new, |list| {
            list.iter()
                .map(|p| (self.doc_ids[p.doc as usize].as_str(), p.tf))
                .collect()
        })
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`; never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.document_frequency(term) as f64;
        let total = self.num_docs() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = k1 * (1.0 - b + b * doc_len as f64 / self.avgdl);
        idf * tf * (k1 + 1.0) / (tf + norm)
    }

    /// BM25 score of one passage, summed over `query_tokens` as given
    /// (repeated query terms count repeatedly).
    pub fn score(&self, query_tokens: &[impl AsRef<str>], passage_id: &str) -> Result<f64, SparseError> {
        let doc_len = self
            .doc_length(passage_id)
            .ok_or_else(|| SparseError::UnknownPassage(passage_id.to_owned()))?;
        let mut total = 0.0;
        for term in query_tokens {
            let term = term.as_ref();
            let tf = self.term_frequency(term, passage_id);
            if tf > 0 {
                total += self.term_weight(self.idf(term), tf, doc_len);
            }
        }
        Ok(total)
    }

    /// Top-`n` passages for `query`. Passages with no matching term are left
    /// out, so the result may be shorter than `n` or empty.
    pub fn search(&self, query: &str, n: usize) -> RankedList {
        let tokens = tokenize(query);
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in &tokens {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in list {
                *acc.entry(p.doc).or_insert(0.0) += self.term_weight(idf, p.tf, self.doc_lengths[p.doc as usize]);
            }
        }
        let mut hits: Vec<(String, f64)> = acc
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(doc, s)| (self.doc_ids[doc as usize].clone(), s))
            .collect();
        hits.sort_by(by_score_then_id);
        hits.truncate(n);
        RankedList::from_ordered(SPARSE_RETRIEVER_ID, hits)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SparseError> {
        let header = Header {
            num_docs: self.num_docs(),
            avgdl: self.avgdl,
            k1: self.params.k1,
            b: self.params.b,
            docs: self
                .doc_ids
                .iter()
                .cloned()
                .zip(self.doc_lengths.iter().copied())
                .collect(),
        };
        let mut writer = IndexWriter::create(path.as_ref(), SPARSE_MAGIC, &header)?;
        let terms: BTreeMap<&String, &Vec<Posting>> = self.postings.iter().collect();
        for (term, list) in terms {
            writer.record(&TermLine {
                term: term.clone(),
                postings: list
                    .iter()
                    .map(|p| (self.doc_ids[p.doc as usize].clone(), p.tf))
                    .collect(),
            })?;
        }
        Ok(writer.finish()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SparseError> {
        let (mut reader, header): (_, Header) = IndexReader::open(path.as_ref(), SPARSE_MAGIC)?;
        let params = Bm25Params {
            k1: header.k1,
            b: header.b,
        };
        params.validate()?;
        if header.docs.len() != header.num_docs || header.num_docs == 0 {
            return Err(reader
                .malformed(format!(
                    "header lists {} docs but num_docs is {}",
                    header.docs.len(),
                    header.num_docs
                ))
                .into());
        }
        let mut index = SparseIndex {
            params,
            doc_ids: Vec::with_capacity(header.num_docs),
            doc_lengths: Vec::with_capacity(header.num_docs),
            doc_by_id: HashMap::with_capacity(header.num_docs),
            postings: HashMap::new(),
            avgdl: 0.0,
        };
        for (id, len) in header.docs {
            let doc = index.doc_ids.len() as u32;
            if index.doc_by_id.insert(id.clone(), doc).is_some() {
                return Err(reader.malformed(format!("duplicate passage id {id:?}")).into());
            }
            index.doc_ids.push(id);
            index.doc_lengths.push(len);
        }
        index.avgdl = mean_length(&index.doc_lengths);

        while let Some(line) = reader.next_record::<TermLine>()? {
            let mut list = Vec::with_capacity(line.postings.len());
            for (id, tf) in line.postings {
                let Some(&doc) = index.doc_by_id.get(&id) else {
                    return Err(reader.malformed(format!("posting for unknown passage {id:?}")).into());
                };
                if tf == 0 {
                    return Err(reader.malformed("zero term frequency".into()).into());
                }
                list.push(Posting { doc, tf });
            }
            if !list.windows(2).all(|w| w[0].doc < w[1].doc) {
                return Err(reader
                    .malformed(format!("postings for {:?} out of order", line.term))
                    .into());
            }
            index.postings.insert(line.term, list);
        }
        Ok(index)
    }
}

fn mean_length(lengths: &[u32]) -> f64 {
    lengths.iter().map(|&l| l as f64).sum::<f64>() / lengths.len() as f64
}
