//! End-to-end question answering: retrieve, fuse, generate per context,
//! score, select; plus dataset evaluation.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Passage, QaPair};
use crate::dense::{DenseError, DenseIndex, EmbeddingRecord, DENSE_RETRIEVER_ID};
use crate::fusion::{fuse, FusedContext, FusionError, RankedList, DEFAULT_RRF_K};
use crate::metrics::{EvalRecord, EvalReport};
use crate::reader::{Reader, ReaderError};
use crate::scoring::{select, LorWeights, ScoredAnswer, ScoringError};
use crate::sparse::{Bm25Params, SparseError, SparseIndex};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const SPARSE_FILE: &str = "sparse.idx";
pub const DENSE_FILE: &str = "dense.idx";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("no passages retrieved for the query")]
    NoEvidence,
    #[error("query embedding failed: {0}")]
    Embedding(ReaderError),
    #[error("all {attempted} contexts failed; last error: {last}")]
    AllContextsFailed { attempted: usize, last: String },
    #[error("reader failed: {0}")]
    Reader(#[from] ReaderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("embedding for unknown passage {0:?}")]
    UnknownEmbedding(String),
    #[error("fused passage {0:?} is missing from the corpus")]
    MissingPassage(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// True when the failure comes from the generator or embedder being
    /// unavailable rather than from the request or the data.
    pub fn is_reader_unavailable(&self) -> bool {
        match self {
            PipelineError::Embedding(e) | PipelineError::Reader(e) => e.is_retryable(),
            PipelineError::AllContextsFailed { .. } => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Fused contexts handed to the reader, one generation each.
    pub top_k: usize,
    pub rrf_k: usize,
    /// Used when building the sparse index.
    pub bm25: Bm25Params,
    pub weights: LorWeights,
    /// Candidates requested from each retriever before fusion.
    pub retrieval_depth: usize,
    /// Generation calls in flight per question.
    pub parallelism: usize,
    /// Dense hits at or below this cosine similarity are discarded before
    /// fusion.
    pub min_dense_similarity: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            top_k: 10,
            rrf_k: DEFAULT_RRF_K,
            bm25: Bm25Params::default(),
            weights: LorWeights::default(),
            retrieval_depth: 50,
            parallelism: 4,
            min_dense_similarity: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.top_k < 1 {
            return bad("top_k must be >= 1".into());
        }
        if self.rrf_k < 1 {
            return bad("rrf_k must be >= 1".into());
        }
        if self.retrieval_depth < self.top_k {
            return bad(format!(
                "retrieval_depth ({}) must be >= top_k ({})",
                self.retrieval_depth, self.top_k
            ));
        }
        if self.parallelism < 1 {
            return bad("parallelism must be >= 1".into());
        }
        if !(-1.0..=1.0).contains(&self.min_dense_similarity) {
            return bad("min_dense_similarity must lie in [-1, 1]".into());
        }
        self.bm25.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.weights
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// Corpus plus both indexes, shared read-only between queries.
#[derive(Debug, Clone)]
pub struct Retrievers {
    pub corpus: Corpus,
    pub sparse: SparseIndex,
    pub dense: DenseIndex,
}

impl Retrievers {
    pub fn build(corpus: Corpus, embeddings: Vec<EmbeddingRecord>, bm25: Bm25Params) -> Result<Self, PipelineError> {
        if let Some(unknown) = embeddings.iter().find(|r| corpus.get_passage(&r.passage_id).is_none()) {
            return Err(PipelineError::UnknownEmbedding(unknown.passage_id.clone()));
        }
        let sparse = SparseIndex::build(&corpus, bm25)?;
        let dense = DenseIndex::build(embeddings)?;
        Ok(Retrievers { corpus, sparse, dense })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.to_owned(),
            source,
        })?;
        self.corpus.write_jsonl(dir.join(CORPUS_FILE))?;
        self.sparse.save(dir.join(SPARSE_FILE))?;
        self.dense.save(dir.join(DENSE_FILE))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = dir.as_ref();
        let corpus = Corpus::load_jsonl(dir.join(CORPUS_FILE))?;
        let sparse = SparseIndex::load(dir.join(SPARSE_FILE))?;
        let dense = DenseIndex::load(dir.join(DENSE_FILE))?;
        if sparse.num_docs() != corpus.len() {
            return Err(PipelineError::Config(format!(
                "sparse index covers {} passages but the corpus has {}",
                sparse.num_docs(),
                corpus.len()
            )));
        }
        if let Some(unknown) = dense
            .records()
            .iter()
            .find(|r| corpus.get_passage(&r.passage_id).is_none())
        {
            return Err(PipelineError::UnknownEmbedding(unknown.passage_id.clone()));
        }
        Ok(Retrievers { corpus, sparse, dense })
    }

    /// Dense ranking for `query`, keeping only hits above `min_similarity`.
    pub fn dense_search(
        &self,
        query: &str,
        depth: usize,
        min_similarity: f64,
        reader: &dyn Reader,
    ) -> Result<RankedList, PipelineError> {
        let mut vectors = reader.embed(&[query.to_owned()]).map_err(PipelineError::Embedding)?;
        let vector = vectors
            .pop()
            .ok_or_else(|| PipelineError::Embedding(ReaderError::Malformed("no query vector".into())))?;
        let hits = self.dense.search(&vector, depth)?;
        Ok(RankedList::from_ordered(
            DENSE_RETRIEVER_ID,
            hits.entries
                .into_iter()
                .filter(|e| e.score > min_similarity)
                .map(|e| (e.passage_id, e.score)),
        ))
    }
}

/// A context whose generation or scoring failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedContext {
    pub passage_id: String,
    pub context_rank: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub query: String,
    pub fused: Vec<FusedContext>,
    /// One per answered context, in context-rank order.
    pub candidates: Vec<ScoredAnswer>,
    pub selected: ScoredAnswer,
    pub dropped: Vec<DroppedContext>,
}

/// Runs `task` over `items` with at most `parallelism` workers; results keep
/// the input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], parallelism: usize, task: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = parallelism.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(task).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = task(&items[i]);
                slots.lock().expect("result slots poisoned")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

pub fn answer_question(
    query: &str,
    config: &PipelineConfig,
    retrievers: &Retrievers,
    reader: &dyn Reader,
) -> Result<AnswerTrace, PipelineError> {
    config.validate()?;
    if query.trim().is_empty() {
        return Err(PipelineError::Reader(ReaderError::InvalidInput("empty query".into())));
    }
    let sparse = retrievers.sparse.search(query, config.retrieval_depth);
    let dense = retrievers.dense_search(query, config.retrieval_depth, config.min_dense_similarity, reader)?;
    let fused = fuse(&[sparse, dense], config.rrf_k)?;
    if fused.is_empty() {
        return Err(PipelineError::NoEvidence);
    }

    let contexts: Vec<(&FusedContext, &Passage)> = fused
        .iter()
        .take(config.top_k)
        .map(|f| {
            retrievers
                .corpus
                .get_passage(&f.passage_id)
                .map(|p| (f, p))
                .ok_or_else(|| PipelineError::MissingPassage(f.passage_id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let outcomes = parallel_map(&contexts, config.parallelism, |(fc, passage)| {
        reader
            .generate(query, passage)
            .map_err(|e| e.to_string())
            .and_then(|g| {
                ScoredAnswer::from_step_probs(g.text, &fc.passage_id, &g.step_probs, fc.context_rank, config.weights)
                    .map_err(|e: ScoringError| e.to_string())
            })
    });

    let mut candidates = Vec::with_capacity(contexts.len());
    let mut dropped = Vec::new();
    for ((fc, _), outcome) in contexts.iter().zip(outcomes) {
        match outcome {
            Ok(answer) => candidates.push(answer),
            Err(error) => dropped.push(DroppedContext {
                passage_id: fc.passage_id.clone(),
                context_rank: fc.context_rank,
                error,
            }),
        }
    }
    let selected = match select(&candidates) {
        Ok(best) => best.clone(),
        Err(_) => {
            return Err(PipelineError::AllContextsFailed {
                attempted: contexts.len(),
                last: dropped.last().map(|d| d.error.clone()).unwrap_or_default(),
            })
        }
    };
    Ok(AnswerTrace {
        query: query.to_owned(),
        fused,
        candidates,
        selected,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Answered,
    NoEvidence,
    Failed,
}

/// One line of the evaluation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub question_id: String,
    pub query: String,
    pub status: RecordStatus,
    pub selected_answer: Option<String>,
    pub lor: Option<f64>,
    pub mean_score: Option<f64>,
    pub context_rank: Option<usize>,
    pub passage_id: Option<String>,
    pub em: u8,
    pub f1: f64,
    pub rouge_l: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub records: Vec<TraceRecord>,
    pub report: EvalReport,
}

impl Evaluation {
    pub fn failure_fraction(&self) -> f64 {
        if self.report.n == 0 {
            0.0
        } else {
            self.report.failed as f64 / self.report.n as f64
        }
    }

    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        let io_err = |source| PipelineError::Io {
            path: path.to_owned(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for record in &self.records {
            let line = serde_json::to_string(record).expect("trace record serializes");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.report).expect("report serializes");
        fs::write(path, json + "\n").map_err(|source| PipelineError::Io {
            path: path.to_owned(),
            source,
        })
    }
}

/// Answers every question and scores it against its gold answers. Failed
/// and unanswerable questions stay in the report with zero scores.
pub fn evaluate(
    dataset: &[QaPair],
    config: &PipelineConfig,
    retrievers: &Retrievers,
    reader: &dyn Reader,
) -> Result<Evaluation, PipelineError> {
    config.validate()?;
    let mut records = Vec::with_capacity(dataset.len());
    let mut metric_rows = Vec::with_capacity(dataset.len());
    let (mut failed, mut no_evidence) = (0, 0);
    for pair in dataset {
        let mut record = TraceRecord {
            question_id: pair.id.clone(),
            query: pair.question.clone(),
            status: RecordStatus::Answered,
            selected_answer: None,
            lor: None,
            mean_score: None,
            context_rank: None,
            passage_id: None,
            em: 0,
            f1: 0.0,
            rouge_l: 0.0,
            error: None,
        };
        let mut metrics = EvalRecord {
            question_id: pair.id.clone(),
            prediction: String::new(),
            golds: pair.gold_answers.clone(),
            em: 0,
            f1: 0.0,
            rouge_l: 0.0,
        };
        match answer_question(&pair.question, config, retrievers, reader) {
            Ok(trace) => {
                let selected = trace.selected;
                metrics = EvalRecord::score(&pair.id, selected.text.clone(), pair.gold_answers.clone())
                    .map_err(|e| PipelineError::Config(format!("question {:?}: {e}", pair.id)))?;
                record.em = metrics.em;
                record.f1 = metrics.f1;
                record.rouge_l = metrics.rouge_l;
                record.lor = Some(selected.lor_score);
                record.mean_score = Some(selected.mean_score);
                record.context_rank = Some(selected.context_rank);
                record.passage_id = Some(selected.passage_id);
                record.selected_answer = Some(selected.text);
            }
            Err(PipelineError::NoEvidence) => {
                no_evidence += 1;
                record.status = RecordStatus::NoEvidence;
            }
            Err(e @ PipelineError::Config(_)) => return Err(e),
            Err(e) => {
                failed += 1;
                record.status = RecordStatus::Failed;
                record.error = Some(e.to_string());
            }
        }
        records.push(record);
        metric_rows.push(metrics);
    }
    let mut report = EvalReport::aggregate(&metric_rows);
    report.failed = failed;
    report.no_evidence = no_evidence;
    Ok(Evaluation { records, report })
}
