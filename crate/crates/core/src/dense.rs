//! Exact cosine-similarity search over unit-normalized vectors.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{by_score_then_id, RankedList};
use crate::persist::{IndexReader, IndexWriter, PersistError};

pub const DENSE_MAGIC: &str = "LOREIDX1 dense";
pub const DENSE_RETRIEVER_ID: &str = "dense";

#[derive(Debug, Error)]
pub enum DenseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero or non-finite vector{}", .0.as_ref().map(|id| format!(" for {id:?}")).unwrap_or_default())]
    DegenerateVector(Option<String>),
    #[error("vectors must have at least one dimension")]
    EmptyVector,
    #[error("duplicate passage id {0:?}")]
    DuplicateId(String),
    #[error("cannot build a dense index without vectors")]
    Empty,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}: no embedding records")]
    NoRecords(PathBuf),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    #[serde(rename = "id")]
    pub passage_id: String,
    pub vector: Vec<f64>,
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, DenseError> {
    if u.len() != v.len() {
        return Err(DenseError::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if !(nu.is_finite() && nv.is_finite()) || nu == 0.0 || nv == 0.0 {
        return Err(DenseError::DegenerateVector(None));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Returns `v / ‖v‖`.
pub fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if !n.is_finite() || n == 0.0 {
        return None;
    }
    Some(v.iter().map(|x| x / n).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    records: Vec<EmbeddingRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    num_vectors: usize,
}

impl DenseIndex {
    pub fn build(records: Vec<EmbeddingRecord>) -> Result<Self, DenseError> {
        let dim = records.first().ok_or(DenseError::Empty)?.vector.len();
        if dim == 0 {
            return Err(DenseError::EmptyVector);
        }
        let mut seen = HashSet::with_capacity(records.len());
        let mut stored = Vec::with_capacity(records.len());
        for record in records {
            if record.vector.len() != dim {
                return Err(DenseError::DimensionMismatch {
                    expected: dim,
                    got: record.vector.len(),
                });
            }
            if !seen.insert(record.passage_id.clone()) {
                return Err(DenseError::DuplicateId(record.passage_id));
            }
            let vector = normalize(&record.vector)
                .ok_or_else(|| DenseError::DegenerateVector(Some(record.passage_id.clone())))?;
            stored.push(EmbeddingRecord {
                passage_id: record.passage_id,
                vector,
            });
        }
        Ok(DenseIndex { dim, records: stored })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    /// Top-`n` passages by cosine similarity to `query`.
    pub fn search(&self, query: &[f64], n: usize) -> Result<RankedList, DenseError> {
        if query.len() != self.dim {
            return Err(DenseError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let query = normalize(query).ok_or(DenseError::DegenerateVector(None))?;
        let mut hits: Vec<(String, f64)> = self
            .records
            .iter()
            .map(|r| (r.passage_id.clone(), dot(&query, &r.vector).clamp(-1.0, 1.0)))
            .collect();
        hits.sort_by(by_score_then_id);
        hits.truncate(n);
        Ok(RankedList::from_ordered(DENSE_RETRIEVER_ID, hits))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DenseError> {
        let header = Header {
            dim: self.dim,
            num_vectors: self.records.len(),
        };
        let mut writer = IndexWriter::create(path.as_ref(), DENSE_MAGIC, &header)?;
        for record in &self.records {
            writer.record(record)?;
        }
        Ok(writer.finish()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DenseError> {
        let (mut reader, header): (_, Header) = IndexReader::open(path.as_ref(), DENSE_MAGIC)?;
        let mut records = Vec::with_capacity(header.num_vectors);
        while let Some(record) = reader.next_record::<EmbeddingRecord>()? {
            if record.vector.len() != header.dim {
                return Err(reader
                    .malformed(format!(
                        "vector has dim {}, header says {}",
                        record.vector.len(),
                        header.dim
                    ))
                    .into());
            }
            records.push(record);
        }
        if records.len() != header.num_vectors {
            return Err(reader
                .malformed(format!(
                    "expected {} vectors, found {}",
                    header.num_vectors,
                    records.len()
                ))
                .into());
        }
        let mut seen = HashSet::with_capacity(records.len());
        for record in &records {
            if !seen.insert(record.passage_id.as_str()) {
                return Err(DenseError::DuplicateId(record.passage_id.clone()));
            }
            if (norm(&record.vector) - 1.0).abs() > 1e-6 {
                return Err(reader
                    .malformed(format!("stored vector for {:?} is not unit length", record.passage_id))
                    .into());
            }
        }
        Ok(DenseIndex {
            dim: header.dim,
            records,
        })
    }
}

/// Reads `{id, vector: [...]}` JSONL records.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>, DenseError> {
    let path = path.as_ref();
    let io_err = |source| DenseError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut records: Vec<EmbeddingRecord> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| DenseError::Malformed {
            path: path.to_owned(),
            line: idx + 1,
            message,
        };
        let record: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if record.vector.is_empty() {
            return Err(malformed("empty vector".into()));
        }
        if let Some(first) = records.first() {
            if first.vector.len() != record.vector.len() {
                return Err(malformed(format!(
                    "vector has dim {}, earlier records have dim {}",
                    record.vector.len(),
                    first.vector.len()
                )));
            }
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(DenseError::NoRecords(path.to_owned()));
    }
    Ok(records)
}
