//! Reserved surface forms: the delimiter, nonterminal tokens, and registered markup tags.
//!
//! Nonterminals render as `<{prefix}_{index}>`, so with the default prefixes the
//! source free-token fragments are `<X_0>`, `<X_1>`, …, the target fragments
//! `<Y_0>`, … and the constraints `<C_1>`, ….

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NtKind {
    /// Source-side free-token fragment.
    X,
    /// Target-side free-token fragment.
    Y,
    /// Constraint, shared by both sides.
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nonterminal {
    pub kind: NtKind,
    pub index: usize,
}

impl Nonterminal {
    pub fn x(index: usize) -> Self {
        Self { kind: NtKind::X, index }
    }

    pub fn y(index: usize) -> Self {
        Self { kind: NtKind::Y, index }
    }

    pub fn c(index: usize) -> Self {
        Self { kind: NtKind::C, index }
    }
}

impl fmt::Display for Nonterminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.kind, self.index)
    }
}

/// How a registered tag participates in nesting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TagKind {
    Open(String),
    Close(String),
    /// Entities, placeholders, and any tag without a registered counterpart.
    Void,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("reserved surface form {0:?} is empty or contains whitespace")]
    BadSurface(String),
    #[error("nonterminal prefix {0:?} must not contain '<' or '>'")]
    BadPrefix(String),
    #[error("reserved surface forms collide: {0:?}")]
    Collision(String),
    #[error("max_index must be positive")]
    ZeroMaxIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReservedVocab {
    pub sep_token: String,
    pub x_prefix: String,
    pub y_prefix: String,
    pub c_prefix: String,
    pub max_index: usize,
    pub registered_tags: BTreeSet<String>,
}

impl Default for ReservedVocab {
    fn default() -> Self {
        Self {
            sep_token: "<sep>".to_owned(),
            x_prefix: "X".to_owned(),
            y_prefix: "Y".to_owned(),
            c_prefix: "C".to_owned(),
            max_index: 64,
            registered_tags: ["<ph>", "</ph>", "&amp;", "&lt;", "&gt;"]
                .into_iter()
                .map(str::to_owned)
                .collect(),
        }
    }
}

impl ReservedVocab {
    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.registered_tags = tags.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), VocabError> {
        if self.max_index == 0 {
            return Err(VocabError::ZeroMaxIndex);
        }
        let prefixes = [&self.x_prefix, &self.y_prefix, &self.c_prefix];
        for p in prefixes {
            if !is_surface(p) {
                return Err(VocabError::BadSurface(p.clone()));
            }
            if p.contains(['<', '>']) {
                return Err(VocabError::BadPrefix(p.clone()));
            }
        }
        if self.x_prefix == self.y_prefix
            || self.x_prefix == self.c_prefix
            || self.y_prefix == self.c_prefix
        {
            return Err(VocabError::Collision(format!(
                "{}/{}/{}",
                self.x_prefix, self.y_prefix, self.c_prefix
            )));
        }
        if !is_surface(&self.sep_token) {
            return Err(VocabError::BadSurface(self.sep_token.clone()));
        }
        if self.parse_nonterminal(&self.sep_token).is_some() {
            return Err(VocabError::Collision(self.sep_token.clone()));
        }
        for tag in &self.registered_tags {
            if !is_surface(tag) {
                return Err(VocabError::BadSurface(tag.clone()));
            }
            if *tag == self.sep_token || self.parse_nonterminal(tag).is_some() {
                return Err(VocabError::Collision(tag.clone()));
            }
        }
        Ok(())
    }

    fn prefix(&self, kind: NtKind) -> &str {
        match kind {
            NtKind::X => &self.x_prefix,
            NtKind::Y => &self.y_prefix,
            NtKind::C => &self.c_prefix,
        }
    }

    pub fn render(&self, nt: Nonterminal) -> String {
        format!("<{}_{}>", self.prefix(nt.kind), nt.index)
    }

    /// Inverse of [`render`](Self::render). Indices above `max_index` and
    /// non-canonical digit strings (`<X_01>`) are not nonterminals.
    pub fn parse_nonterminal(&self, token: &str) -> Option<Nonterminal> {
        let inner = token.strip_prefix('<')?.strip_suffix('>')?;
        let (prefix, digits) = inner.rsplit_once('_')?;
        if digits.is_empty()
            || !digits.bytes().all(|b| b.is_ascii_digit())
            || (digits.len() > 1 && digits.starts_with('0'))
        {
            return None;
        }
        let index: usize = digits.parse().ok()?;
        if index > self.max_index {
            return None;
        }
        let kind = [NtKind::X, NtKind::Y, NtKind::C]
            .into_iter()
            .find(|&k| self.prefix(k) == prefix)?;
        Some(Nonterminal { kind, index })
    }

    pub fn is_sep(&self, token: &str) -> bool {
        token == self.sep_token
    }

    /// True for the delimiter and every renderable nonterminal.
    pub fn is_reserved(&self, token: &str) -> bool {
        self.is_sep(token) || self.parse_nonterminal(token).is_some()
    }

    pub fn is_tag(&self, token: &str) -> bool {
        self.registered_tags.contains(token)
    }

    /// Classifies a registered tag. `<name>` is an opening tag only when
    /// `</name>` is also registered, and vice versa; everything else is void.
    pub fn tag_kind(&self, token: &str) -> Option<TagKind> {
        if !self.is_tag(token) {
            return None;
        }
        if let Some(name) = token.strip_prefix("</").and_then(|t| t.strip_suffix('>')) {
            if !name.is_empty() && self.is_tag(&format!("<{name}>")) {
                return Some(TagKind::Close(name.to_owned()));
            }
        } else if let Some(name) = token.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
            if !name.is_empty() && !name.ends_with('/') && self.is_tag(&format!("</{name}>")) {
                return Some(TagKind::Open(name.to_owned()));
            }
        }
        Some(TagKind::Void)
    }
}

fn is_surface(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_inverse() {
        let v = ReservedVocab::default();
        for nt in [Nonterminal::x(0), Nonterminal::y(12), Nonterminal::c(64)] {
            assert_eq!(v.parse_nonterminal(&v.render(nt)), Some(nt));
        }
        assert_eq!(v.render(Nonterminal::c(2)), "<C_2>");
    }

    #[test]
    fn rejects_non_nonterminals() {
        let v = ReservedVocab::default();
        for tok in ["<X_65>", "<X_01>", "<Z_1>", "X_1", "<X_>", "<X1>", "<sep>", "<ph>"] {
            assert_eq!(v.parse_nonterminal(tok), None, "{tok}");
        }
    }

    #[test]
    fn default_is_valid() {
        ReservedVocab::default().validate().unwrap();
    }

    #[test]
    fn collisions_detected() {
        let mut v = ReservedVocab::default();
        v.y_prefix = "X".into();
        assert!(matches!(v.validate(), Err(VocabError::Collision(_))));

        let v = ReservedVocab::default().with_tags(["<X_3>"]);
        assert!(matches!(v.validate(), Err(VocabError::Collision(_))));

        let v = ReservedVocab::default().with_tags(["<sep>"]);
        assert!(v.validate().is_err());

        let mut v = ReservedVocab::default();
        v.sep_token = "<C_1>".into();
        assert!(v.validate().is_err());
    }

    #[test]
    fn tag_kinds() {
        let v = ReservedVocab::default().with_tags(["<ph>", "</ph>", "&amp;", "<url>", "</b>"]);
        assert_eq!(v.tag_kind("<ph>"), Some(TagKind::Open("ph".into())));
        assert_eq!(v.tag_kind("</ph>"), Some(TagKind::Close("ph".into())));
        assert_eq!(v.tag_kind("&amp;"), Some(TagKind::Void));
        assert_eq!(v.tag_kind("<url>"), Some(TagKind::Void));
        assert_eq!(v.tag_kind("</b>"), Some(TagKind::Void));
        assert_eq!(v.tag_kind("hello"), None);
    }
}
