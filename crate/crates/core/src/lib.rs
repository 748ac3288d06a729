//! Hybrid retrieval question answering with confidence and rank based answer selection.
//!
//! Passages are retrieved by a BM25 inverted index and an exact cosine
//! vector index, the two rankings are merged with Reciprocal Rank Fusion,
//! a generator produces one candidate answer per top fused context, and the
//! final answer is the candidate with the highest LoR score:
//!
//! ```text
//! LoR = w1 * mean_token_probability + w2 / context_rank
//! ```
//!
//! The crate is organised bottom-up: [`corpus`] feeds [`sparse`] and
//! [`dense`], [`fusion`] merges their [`RankedList`]s, [`reader`] talks to the
//! generator, [`scoring`] turns generations into [`ScoredAnswer`]s and
//! [`pipeline`] wires everything together and runs evaluations with the
//! [`metrics`] module.

pub mod corpus;
pub mod dense;
pub mod fusion;
pub mod metrics;
pub mod persist;
pub mod pipeline;
pub mod reader;
pub mod scoring;
pub mod sparse;

pub use corpus::{tokenize, Corpus, CorpusError, CorpusStats, Passage, QaPair};
pub use dense::{cosine, DenseError, DenseIndex, EmbeddingRecord};
pub use fusion::{fuse, rrf_score, FusedContext, FusionError, RankedEntry, RankedList};
pub use metrics::{exact_match, f1, normalize_answer, rouge_l, EvalRecord, EvalReport};
pub use pipeline::{answer_question, evaluate, AnswerTrace, PipelineConfig, PipelineError, Retrievers};
pub use reader::{GeneratedAnswer, HttpReader, Reader, ReaderConfig, ReaderError, StubReader};
pub use scoring::{lor, mean_score, select, step_probability, LorWeights, ScoredAnswer, ScoringError};
pub use sparse::{Bm25Params, SparseError, SparseIndex};
