//! Reading and writing the on-disk artifacts.
//!
//! All files are UTF-8 with one record per LF-terminated line; the final
//! newline is optional. Token files are split on whitespace only.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexical::ConstraintPair;
use crate::tokens::{Span, TokenSeq};
use crate::vocab::{ReservedVocab, VocabError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line count mismatch {0} vs {1}")]
    LineCount(usize, usize),
    #[error("line {line}: malformed alignment item {item:?}")]
    AlignmentItem { line: usize, item: String },
    #[error("line {line}: link {src}-{tgt} out of bounds for {src_len}x{tgt_len} sentence pair")]
    AlignmentBounds {
        line: usize,
        src: usize,
        tgt: usize,
        src_len: usize,
        tgt_len: usize,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {detail}")]
    Invalid { line: usize, detail: String },
    #[error("vocabulary: {0}")]
    Vocab(#[from] VocabError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Word alignment links `(src_index, tgt_index)`, 0-based, deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentSet {
    pub links: BTreeSet<(usize, usize)>,
}

impl AlignmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, src: usize, tgt: usize) {
        self.links.insert((src, tgt));
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.links.iter().copied()
    }

    /// Pharaoh rendering, e.g. `0-0 1-2`.
    pub fn to_line(&self) -> String {
        self.links
            .iter()
            .map(|(s, t)| format!("{s}-{t}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl FromIterator<(usize, usize)> for AlignmentSet {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Self {
            links: iter.into_iter().collect(),
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn write_lines<I, S>(path: &Path, lines: I) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{}", line.as_ref()).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_token_lines(path: &Path) -> Result<Vec<TokenSeq>, CorpusError> {
    Ok(read_lines(path)?.iter().map(|l| TokenSeq::from_line(l)).collect())
}

pub fn write_token_lines<'a, I>(path: &Path, seqs: I) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = &'a TokenSeq>,
{
    write_lines(path, seqs.into_iter().map(TokenSeq::to_line))
}

/// Reads a sentence-aligned pair of token files.
pub fn read_bitext(src_path: &Path, tgt_path: &Path) -> Result<Vec<(TokenSeq, TokenSeq)>, CorpusError> {
    let src = read_token_lines(src_path)?;
    let tgt = read_token_lines(tgt_path)?;
    if src.len() != tgt.len() {
        return Err(CorpusError::LineCount(src.len(), tgt.len()));
    }
    Ok(src.into_iter().zip(tgt).collect())
}

/// Parses one Pharaoh line against the sentence lengths. `line` is 1-based
/// and only used for error messages.
pub fn parse_alignment_line(
    text: &str,
    line: usize,
    src_len: usize,
    tgt_len: usize,
) -> Result<AlignmentSet, CorpusError> {
    let mut set = AlignmentSet::new();
    for item in text.split_whitespace() {
        let parsed = item
            .split_once('-')
            .and_then(|(s, t)| Some((s.parse::<usize>().ok()?, t.parse::<usize>().ok()?)));
        let (src, tgt) = parsed.ok_or_else(|| CorpusError::AlignmentItem {
            line,
            item: item.to_owned(),
        })?;
        if src >= src_len || tgt >= tgt_len {
            return Err(CorpusError::AlignmentBounds {
                line,
                src,
                tgt,
                src_len,
                tgt_len,
            });
        }
        set.insert(src, tgt);
    }
    Ok(set)
}

pub fn read_alignments(path: &Path, pairs: &[(TokenSeq, TokenSeq)]) -> Result<Vec<AlignmentSet>, CorpusError> {
    let lines = read_lines(path)?;
    if lines.len() != pairs.len() {
        return Err(CorpusError::LineCount(lines.len(), pairs.len()));
    }
    lines
        .iter()
        .zip(pairs)
        .enumerate()
        .map(|(i, (text, (x, y)))| parse_alignment_line(text, i + 1, x.len(), y.len()))
        .collect()
}

pub fn write_alignments(path: &Path, sets: &[AlignmentSet]) -> Result<(), CorpusError> {
    write_lines(path, sets.iter().map(AlignmentSet::to_line))
}

/// Reads one JSON value per line. Empty lines are errors.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| CorpusError::Json { line: i + 1, source }))
        .collect()
}

pub fn write_jsonl<'a, T, I>(path: &Path, records: I) -> Result<(), CorpusError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let lines: Vec<String> = records
        .into_iter()
        .map(|r| serde_json::to_string(r).expect("records serialize"))
        .collect();
    write_lines(path, lines)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    #[serde(deserialize_with = "phrase")]
    pub src: TokenSeq,
    #[serde(deserialize_with = "phrase")]
    pub tgt: TokenSeq,
}

/// A phrase is written as a token list; a space-separated string is also read.
fn phrase<'de, D: serde::Deserializer<'de>>(d: D) -> Result<TokenSeq, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Phrase {
        Line(String),
        Tokens(TokenSeq),
    }
    Ok(match Phrase::deserialize(d)? {
        Phrase::Line(line) => TokenSeq::from_line(&line),
        Phrase::Tokens(tokens) => tokens,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintLine {
    pub constraints: Vec<ConstraintRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanPair {
    pub src: Span,
    pub tgt: Span,
}

/// The spans chosen for each sampled constraint, parallel to the constraint file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanLine {
    pub spans: Vec<SpanPair>,
}

/// Parses a constraints line. Indices are assigned 1..N in file order.
/// A blank line is an empty constraint set.
pub fn parse_constraint_line(text: &str, line: usize) -> Result<Vec<ConstraintPair>, CorpusError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let parsed: ConstraintLine =
        serde_json::from_str(text).map_err(|source| CorpusError::Json { line, source })?;
    constraints_from_records(parsed.constraints, line)
}

fn constraints_from_records(records: Vec<ConstraintRecord>, line: usize) -> Result<Vec<ConstraintPair>, CorpusError> {
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            ConstraintPair::new(r.src, r.tgt, i + 1).map_err(|e| CorpusError::Invalid {
                line,
                detail: e.to_string(),
            })
        })
        .collect()
}

pub fn read_constraints(path: &Path) -> Result<Vec<Vec<ConstraintPair>>, CorpusError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| parse_constraint_line(l, i + 1))
        .collect()
}

pub fn constraint_line(constraints: &[ConstraintPair]) -> ConstraintLine {
    ConstraintLine {
        constraints: constraints
            .iter()
            .map(|c| ConstraintRecord {
                src: c.src.clone(),
                tgt: c.tgt.clone(),
            })
            .collect(),
    }
}

pub fn write_constraints(path: &Path, sets: &[Vec<ConstraintPair>]) -> Result<(), CorpusError> {
    let lines: Vec<ConstraintLine> = sets.iter().map(|c| constraint_line(c)).collect();
    write_jsonl(path, &lines)
}

pub fn read_spans(path: &Path) -> Result<Vec<SpanLine>, CorpusError> {
    read_jsonl(path)
}

pub fn write_spans(path: &Path, lines: &[SpanLine]) -> Result<(), CorpusError> {
    write_jsonl(path, lines)
}

pub fn read_vocab(path: &Path) -> Result<ReservedVocab, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let vocab: ReservedVocab =
        serde_json::from_str(&text).map_err(|source| CorpusError::Json { line: 1, source })?;
    vocab.validate()?;
    Ok(vocab)
}

pub fn write_vocab(path: &Path, vocab: &ReservedVocab) -> Result<(), CorpusError> {
    let text = serde_json::to_string_pretty(vocab).expect("vocab serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}
