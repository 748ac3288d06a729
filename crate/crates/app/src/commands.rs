use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lore_core::corpus::{load_qa_jsonl, load_squad};
use lore_core::dense::load_embeddings;
use lore_core::pipeline::{answer_question, evaluate, AnswerTrace, PipelineError, Retrievers};
use lore_core::reader::{HttpReader, Reader, StubReader};
use lore_core::{Corpus, EmbeddingRecord, QaPair};
use serde_json::{json, Value};

use crate::config::AppConfig;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// Builds the configured reader. The stub reader's embedding size follows
/// `embed_dim` so query vectors match the dense index.
pub fn make_reader(config: &AppConfig, embed_dim: usize) -> Result<Box<dyn Reader>> {
    if let Some(endpoint) = &config.reader_endpoint {
        return Ok(Box::new(HttpReader::new(config.http_reader_config(endpoint))?));
    }
    let stub = match &config.reader_stub_table {
        Some(path) => StubReader::load(path)?,
        None => StubReader::new([])?,
    };
    Ok(Box::new(stub.with_embed_dim(embed_dim)))
}

pub fn load_retrievers(config: &AppConfig) -> Result<Retrievers> {
    let dir = config.index_dir();
    Retrievers::load(&dir).with_context(|| format!("cannot load indexes from {}", dir.display()))
}

pub fn index(config: &AppConfig, corpus_path: &Path, embeddings_path: &Path, out: &Path) -> Result<()> {
    let mut corpus = Corpus::new();
    let stats = corpus
        .ingest_jsonl(corpus_path)
        .with_context(|| format!("cannot ingest corpus {}", corpus_path.display()))?;
    let embeddings = load_embeddings(embeddings_path)
        .with_context(|| format!("cannot load embeddings {}", embeddings_path.display()))?;
    let retrievers = Retrievers::build(corpus, embeddings, config.pipeline.bm25)?;
    retrievers.save(out)?;
    let report = json!({
        "num_passages": stats.num_passages,
        "avgdl": stats.avgdl,
        "vocab_size": stats.vocab_size,
        "embedding_dim": retrievers.dense.dim(),
        "index_dir": out.display().to_string(),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Writes one `{id, vector}` line per passage using the configured reader's
/// embedder.
pub fn embed(config: &AppConfig, corpus_path: &Path, out: &Path) -> Result<()> {
    let corpus =
        Corpus::load_jsonl(corpus_path).with_context(|| format!("cannot ingest corpus {}", corpus_path.display()))?;
    let reader = make_reader(config, config.stub_embed_dim)?;
    let mut file =
        std::io::BufWriter::new(fs::File::create(out).with_context(|| format!("cannot create {}", out.display()))?);
    for chunk in corpus.passages().chunks(32) {
        let texts: Vec<String> = chunk.iter().map(|p| p.text.clone()).collect();
        let vectors = reader.embed(&texts)?;
        for (passage, vector) in chunk.iter().zip(vectors) {
            let record = EmbeddingRecord {
                passage_id: passage.id.clone(),
                vector,
            };
            writeln!(file, "{}", serde_json::to_string(&record)?)?;
        }
    }
    file.flush()?;
    eprintln!("wrote {} embeddings to {}", corpus.len(), out.display());
    Ok(())
}

pub fn trace_json(trace: &AnswerTrace) -> Value {
    json!({
        "query": trace.query,
        "no_evidence": false,
        "selected_answer": trace.selected.text,
        "passage_id": trace.selected.passage_id,
        "lor_score": trace.selected.lor_score,
        "mean_score": trace.selected.mean_score,
        "context_rank": trace.selected.context_rank,
        "contexts": trace.fused,
        "candidates": trace.candidates,
        "dropped": trace.dropped,
    })
}

pub fn query(config: &AppConfig, question: &str) -> Result<()> {
    let retrievers = load_retrievers(config)?;
    let reader = make_reader(config, retrievers.dense.dim())?;
    let output = match answer_question(question, &config.pipeline, &retrievers, reader.as_ref()) {
        Ok(trace) => trace_json(&trace),
        Err(PipelineError::NoEvidence) => json!({
            "query": question,
            "no_evidence": true,
            "contexts": [],
        }),
        Err(e) => return Err(e.into()),
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<QaPair>> {
    let is_jsonl = path.extension().is_some_and(|ext| ext == "jsonl");
    let pairs = if is_jsonl {
        load_qa_jsonl(path)?
    } else {
        load_squad(path)?.1
    };
    Ok(pairs)
}

pub fn eval(config: &AppConfig, dataset_path: &Path, out: &Path) -> Result<()> {
    let dataset =
        load_dataset(dataset_path).with_context(|| format!("cannot load dataset {}", dataset_path.display()))?;
    let retrievers = load_retrievers(config)?;
    let reader = make_reader(config, retrievers.dense.dim())?;
    let evaluation = evaluate(&dataset, &config.pipeline, &retrievers, reader.as_ref())?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    evaluation.write_trace(out.join(TRACE_FILE))?;
    evaluation.write_summary(out.join(SUMMARY_FILE))?;

    let r = &evaluation.report;
    println!("questions  {}", r.n);
    println!("EM         {:.2}", r.em_pct);
    println!("F1         {:.2}", r.f1_pct);
    println!("ROUGE-L    {:.2}", r.rouge_l_pct);
    println!("no-evidence {}  failed {}", r.no_evidence, r.failed);

    if evaluation.failure_fraction() > config.max_failure_fraction {
        bail!(
            "{} of {} questions failed (allowed fraction {})",
            r.failed,
            r.n,
            config.max_failure_fraction
        );
    }
    Ok(())
}
