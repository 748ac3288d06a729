mod commands;
mod config;
mod service;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::AppConfig;

/// Hybrid sparse/dense retrieval QA with confidence and rank reranking.
#[derive(Parser)]
#[command(name = "lore", version)]
struct Cli {
    /// JSON config file (falls back to $LORE_CONFIG, then ./lore.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding corpus.jsonl, sparse.idx and dense.idx.
    #[arg(long, global = true)]
    index_dir: Option<PathBuf>,
    /// Inference sidecar base URL, e.g. http://127.0.0.1:9000
    #[arg(long, global = true)]
    reader_endpoint: Option<String>,
    /// Stub reader answer table (JSONL); used when no endpoint is set.
    #[arg(long, global = true)]
    stub_table: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist the sparse and dense indexes.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed every passage of a corpus with the configured reader.
    Embed {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer one question and print the trace as JSON.
    Query {
        question: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        top_k: Option<u64>,
    },
    /// Score a QA dataset (QA JSONL or SQuAD JSON) and write trace + summary.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        top_k: Option<u64>,
        #[arg(long)]
        max_failure_fraction: Option<f64>,
    },
    /// Run the HTTP QA service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut config = AppConfig::resolve(cli.config.as_deref())?;
    if let Some(dir) = cli.index_dir {
        config.index_dir = Some(dir);
    }
    if let Some(url) = cli.reader_endpoint {
        config.reader_endpoint = Some(url);
    }
    if let Some(table) = cli.stub_table {
        config.reader_stub_table = Some(table);
    }

    match cli.command {
        Command::Index {
            corpus,
            embeddings,
            out,
        } => {
            let corpus = corpus.or(config.corpus_path.clone()).context("no corpus path given")?;
            let embeddings = embeddings
                .or(config.embeddings_path.clone())
                .context("no embeddings path given")?;
            let out = out.unwrap_or_else(|| config.index_dir());
            commands::index(&config, &corpus, &embeddings, &out)
        }
        Command::Embed { corpus, out } => {
            let corpus = corpus.or(config.corpus_path.clone()).context("no corpus path given")?;
            commands::embed(&config, &corpus, &out)
        }
        Command::Query { question, top_k } => {
            if let Some(k) = top_k {
                config.set_top_k(k as usize);
            }
            commands::query(&config, &question)
        }
        Command::Eval {
            dataset,
            out,
            top_k,
            max_failure_fraction,
        } => {
            if let Some(k) = top_k {
                config.set_top_k(k as usize);
            }
            if let Some(f) = max_failure_fraction {
                config.max_failure_fraction = f;
            }
            config.validate()?;
            commands::eval(&config, &dataset, &out)
        }
        Command::Serve { port } => {
            if let Some(p) = port {
                config.port = p;
            }
            config.validate()?;
            let retrievers = commands::load_retrievers(&config)?;
            let reader = commands::make_reader(&config, retrievers.dense.dim())?;
            let state = service::AppState {
                retrievers,
                reader,
                pipeline: config.pipeline.clone(),
            };
            tokio::runtime::Runtime::new()?.block_on(service::serve(state, config.port))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut message = e.to_string();
            for cause in e.chain().skip(1) {
                let text = cause.to_string();
                if !message.contains(&text) {
                    message = format!("{message}: {text}");
                }
            }
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
