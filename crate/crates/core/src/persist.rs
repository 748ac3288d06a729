//! Line-oriented index files: a magic line, a JSON header line, then one
//! JSON record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected magic {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub(crate) struct IndexWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl IndexWriter {
    pub fn create(path: &Path, magic: &str, header: &impl Serialize) -> Result<Self, PersistError> {
        let file = File::create(path).map_err(|source| PersistError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut writer = IndexWriter {
            path: path.to_owned(),
            out: BufWriter::new(file),
        };
        writer.raw_line(magic)?;
        writer.record(header)?;
        Ok(writer)
    }

    fn raw_line(&mut self, line: &str) -> Result<(), PersistError> {
        writeln!(self.out, "{line}").map_err(|source| PersistError::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn record(&mut self, value: &impl Serialize) -> Result<(), PersistError> {
        let line = serde_json::to_string(value).expect("index records serialize");
        self.raw_line(&line)
    }

    pub fn finish(mut self) -> Result<(), PersistError> {
        self.out.flush().map_err(|source| PersistError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub(crate) struct IndexReader {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    line_no: usize,
}

impl IndexReader {
    /// Opens `path`, checks the magic line and returns the parsed header.
    pub fn open<H: DeserializeOwned>(path: &Path, magic: &'static str) -> Result<(Self, H), PersistError> {
        let file = File::open(path).map_err(|source| PersistError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut reader = IndexReader {
            path: path.to_owned(),
            lines: BufReader::new(file).lines(),
            line_no: 0,
        };
        let found = reader.next_line()?.unwrap_or_default();
        if found != magic {
            return Err(PersistError::BadMagic {
                path: path.to_owned(),
                expected: magic,
                found,
            });
        }
        let header = reader
            .next_record()?
            .ok_or_else(|| reader.malformed("missing header".into()))?;
        Ok((reader, header))
    }

    fn next_line(&mut self) -> Result<Option<String>, PersistError> {
        match self.lines.next() {
            None => Ok(None),
            Some(line) => {
                self.line_no += 1;
                line.map(Some).map_err(|source| PersistError::Io {
                    path: self.path.clone(),
                    source,
                })
            }
        }
    }

    pub fn next_record<T: DeserializeOwned>(&mut self) -> Result<Option<T>, PersistError> {
        loop {
            match self.next_line()? {
                None => return Ok(None),
                Some(line) if line.trim().is_empty() => continue,
                Some(line) => {
                    return serde_json::from_str(&line)
                        .map(Some)
                        .map_err(|e| self.malformed(e.to_string()))
                }
            }
        }
    }

    pub fn malformed(&self, message: String) -> PersistError {
        PersistError::Malformed {
            path: self.path.clone(),
            line: self.line_no,
            message,
        }
    }
}
