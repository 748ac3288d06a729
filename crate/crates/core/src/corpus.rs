//! Passage storage, tokenization and dataset readers.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate passage id {0:?}")]
    DuplicateId(String),
    #[error("invalid passage {id:?}: {reason}")]
    InvalidPassage { id: String, reason: &'static str },
    #[error("{path}: malformed SQuAD file: {message}")]
    MalformedDataset { path: PathBuf, message: String },
    #[error("{0}: dataset contains no questions")]
    EmptyDataset(PathBuf),
}

/// Lowercases `text` and splits it on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(skip)]
    pub token_count: usize,
}

impl Passage {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Result<Self, CorpusError> {
        let mut passage = Passage {
            id: id.into(),
            title: title.into(),
            text: text.into(),
            token_count: 0,
        };
        passage.validate()?;
        Ok(passage)
    }

    fn validate(&mut self) -> Result<(), CorpusError> {
        let invalid = |reason| CorpusError::InvalidPassage {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if self.text.is_empty() {
            return Err(invalid("empty text"));
        }
        self.token_count = tokenize(&self.text).len();
        if self.token_count == 0 {
            return Err(invalid("text has no indexable tokens"));
        }
        Ok(())
    }
}

/// One question with its accepted answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    #[serde(default)]
    pub id: String,
    pub question: String,
    #[serde(alias = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub passage_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_passages: usize,
    pub avgdl: f64,
    pub vocab_size: usize,
}

/// Immutable-after-ingest passage store, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_passages(passages: impl IntoIterator<Item = Passage>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::new();
        for p in passages {
            corpus.insert(p)?;
        }
        Ok(corpus)
    }

    pub fn insert(&mut self, mut passage: Passage) -> Result<(), CorpusError> {
        passage.validate()?;
        if self.by_id.contains_key(&passage.id) {
            return Err(CorpusError::DuplicateId(passage.id));
        }
        self.by_id.insert(passage.id.clone(), self.passages.len());
        self.passages.push(passage);
        Ok(())
    }

    /// Reads newline-delimited `{id, title?, text}` records. Blank lines are
    /// skipped; errors carry the 1-based line number.
    pub fn ingest_jsonl(&mut self, path: impl AsRef<Path>) -> Result<CorpusStats, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| CorpusError::Io {
                path: path.to_owned(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| CorpusError::Malformed {
                path: path.to_owned(),
                line: line_no,
                message,
            };
            let passage: Passage = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            match self.insert(passage) {
                Err(CorpusError::InvalidPassage { id, reason }) => {
                    return Err(malformed(format!("passage {id:?}: {reason}")))
                }
                Err(CorpusError::DuplicateId(id)) => return Err(malformed(format!("duplicate passage id {id:?}"))),
                other => other?,
            }
        }
        Ok(self.stats())
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::new();
        corpus.ingest_jsonl(path)?;
        Ok(corpus)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.to_owned(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for p in &self.passages {
            let line = serde_json::to_string(p).expect("passage serializes");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn get_passage(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        let total: usize = self.passages.iter().map(|p| p.token_count).sum();
        let vocab: std::collections::HashSet<String> = self.passages.iter().flat_map(|p| tokenize(&p.text)).collect();
        CorpusStats {
            num_passages: self.passages.len(),
            avgdl: if self.passages.is_empty() {
                0.0
            } else {
                total as f64 / self.passages.len() as f64
            },
            vocab_size: vocab.len(),
        }
    }
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    #[serde(default)]
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQuestion>,
}

#[derive(Deserialize)]
struct SquadQuestion {
    #[serde(default)]
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
}

/// Passage id for the `ordinal`-th paragraph (0-based) of an article.
pub fn squad_passage_id(title: &str, ordinal: usize) -> String {
    let title: String = title.split_whitespace().collect::<Vec<_>>().join("_");
    format!("{title}#{ordinal}")
}

/// Reads a SQuAD v1.1 file into one passage per paragraph and one QA pair
/// per question.
pub fn load_squad(path: impl AsRef<Path>) -> Result<(Vec<Passage>, Vec<QaPair>), CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    let malformed = |message: String| CorpusError::MalformedDataset {
        path: path.to_owned(),
        message,
    };
    let squad: SquadFile = serde_json::from_reader(BufReader::new(file)).map_err(|e| malformed(e.to_string()))?;

    let mut passages = Vec::new();
    let mut pairs = Vec::new();
    for (a, article) in squad.data.into_iter().enumerate() {
        for (ordinal, paragraph) in article.paragraphs.into_iter().enumerate() {
            let passage_id = squad_passage_id(&article.title, ordinal);
            for (q, qa) in paragraph.qas.into_iter().enumerate() {
                if qa.answers.is_empty() {
                    return Err(malformed(format!("question {:?} has no answers", qa.question)));
                }
                let id = if qa.id.is_empty() {
                    format!("{a}-{ordinal}-{q}")
                } else {
                    qa.id
                };
                pairs.push(QaPair {
                    id,
                    question: qa.question,
                    gold_answers: qa.answers.into_iter().map(|ans| ans.text).collect(),
                    passage_id: Some(passage_id.clone()),
                });
            }
            let passage = Passage::new(passage_id, article.title.clone(), paragraph.context)
                .map_err(|e| malformed(e.to_string()))?;
            passages.push(passage);
        }
    }
    if pairs.is_empty() {
        return Err(CorpusError::EmptyDataset(path.to_owned()));
    }
    Ok((passages, pairs))
}

/// Reads newline-delimited QA records
/// `{id?, question, gold_answers|answers, passage_id?}`.
pub fn load_qa_jsonl(path: impl AsRef<Path>) -> Result<Vec<QaPair>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            path: path.to_owned(),
            line: idx + 1,
            message,
        };
        let mut pair: QaPair = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if pair.gold_answers.is_empty() {
            return Err(malformed("gold_answers is empty".into()));
        }
        if pair.id.is_empty() {
            pair.id = format!("q{}", pairs.len());
        }
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(CorpusError::EmptyDataset(path.to_owned()));
    }
    Ok(pairs)
}
