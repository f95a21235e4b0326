//! Whitespace-tokenized sentences and token spans.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("empty token at position {0}")]
    Empty(usize),
    #[error("token {0:?} contains whitespace")]
    Whitespace(String),
}

/// An ordered sequence of non-empty, whitespace-free tokens.
///
/// The empty sequence is legal and stands for an empty fragment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    /// Splits a line on whitespace runs. Never re-tokenizes beyond that.
    pub fn from_line(line: &str) -> Self {
        Self(line.split_whitespace().map(str::to_owned).collect())
    }

    pub fn to_line(&self) -> String {
        self.0.join(" ")
    }

    pub fn push(&mut self, token: impl Into<String>) {
        let token = token.into();
        debug_assert!(!token.is_empty() && !token.chars().any(char::is_whitespace));
        self.0.push(token);
    }

    pub fn extend_from(&mut self, other: &[String]) {
        self.0.extend_from_slice(other);
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn slice(&self, span: Span) -> &[String] {
        &self.0[span.start..span.end]
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl AsRef<[String]> for TokenSeq {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for TokenSeq {
    type Error = TokenError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(TokenError::Empty(i));
            }
            if tok.chars().any(char::is_whitespace) {
                return Err(TokenError::Whitespace(tok.clone()));
            }
        }
        Ok(Self(tokens))
    }
}

impl From<&[String]> for TokenSeq {
    /// The slice must already satisfy the token invariants, e.g. a sub-slice
    /// of another `TokenSeq`.
    fn from(tokens: &[String]) -> Self {
        Self(tokens.to_vec())
    }
}

impl From<TokenSeq> for Vec<String> {
    fn from(seq: TokenSeq) -> Self {
        seq.0
    }
}

impl FromIterator<String> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut seq = TokenSeq::new();
        for tok in iter {
            seq.push(tok);
        }
        seq
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

/// Half-open token range `[start, end)`. Serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos < self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Self { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(span: Span) -> Self {
        (span.start, span.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}
