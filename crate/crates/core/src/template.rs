//! Templates, derivation tables, and parsing of model continuations.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::tokens::{Span, TokenSeq};
use crate::vocab::{NtKind, Nonterminal, ReservedVocab};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Element {
    Nt(Nonterminal),
    /// A literal token kept verbatim: a markup tag, or junk recovered from a
    /// malformed output.
    Literal(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Template {
    pub elements: Vec<Element>,
}

impl Template {
    pub fn new(elements: Vec<Element>) -> Self {
        Self { elements }
    }

    /// Builds `F0 a1 F1 a2 … aN FN` for fragment nonterminals of `kind`.
    pub fn interleave<I>(kind: NtKind, anchors: I) -> Self
    where
        I: IntoIterator<Item = Element>,
    {
        let mut elements = vec![Element::Nt(Nonterminal { kind, index: 0 })];
        for (i, anchor) in anchors.into_iter().enumerate() {
            elements.push(anchor);
            elements.push(Element::Nt(Nonterminal { kind, index: i + 1 }));
        }
        Self { elements }
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = Nonterminal> + '_ {
        self.elements.iter().filter_map(|e| match e {
            Element::Nt(nt) => Some(*nt),
            Element::Literal(_) => None,
        })
    }

    pub fn literals(&self) -> impl Iterator<Item = &str> + '_ {
        self.elements.iter().filter_map(|e| match e {
            Element::Literal(t) => Some(t.as_str()),
            Element::Nt(_) => None,
        })
    }

    pub fn render(&self, vocab: &ReservedVocab) -> Vec<String> {
        self.elements
            .iter()
            .map(|e| match e {
                Element::Nt(nt) => vocab.render(*nt),
                Element::Literal(t) => t.clone(),
            })
            .collect()
    }

    pub fn display<'a>(&'a self, vocab: &'a ReservedVocab) -> impl fmt::Display + 'a {
        DisplayTemplate(self, vocab)
    }
}

struct DisplayTemplate<'a>(&'a Template, &'a ReservedVocab);

impl fmt::Display for DisplayTemplate<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.render(self.1).join(" "))
    }
}

/// Derivation rules `nonterminal → fragment`, kept in ascending nonterminal order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DerivationTable {
    rules: BTreeMap<Nonterminal, TokenSeq>,
}

impl DerivationTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a rule unless one already exists for `nt`; returns whether it was added.
    pub fn insert(&mut self, nt: Nonterminal, value: TokenSeq) -> bool {
        match self.rules.entry(nt) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(value);
                true
            }
        }
    }

    pub fn get(&self, nt: &Nonterminal) -> Option<&TokenSeq> {
        self.rules.get(nt)
    }

    pub fn contains(&self, nt: &Nonterminal) -> bool {
        self.rules.contains_key(nt)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Nonterminal, &TokenSeq)> {
        self.rules.iter()
    }

    /// Each rule as the nonterminal token followed by its fragment.
    pub fn render(&self, vocab: &ReservedVocab) -> Vec<String> {
        let mut out = Vec::new();
        for (nt, value) in &self.rules {
            out.push(vocab.render(*nt));
            out.extend(value.iter().cloned());
        }
        out
    }
}

impl FromIterator<(Nonterminal, TokenSeq)> for DerivationTable {
    fn from_iter<I: IntoIterator<Item = (Nonterminal, TokenSeq)>>(iter: I) -> Self {
        let mut table = Self::new();
        for (nt, value) in iter {
            table.insert(nt, value);
        }
        table
    }
}

/// The flattened encoder input, the forced decoder prefix, and the decoder target.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SerializedExample {
    pub encoder_input: TokenSeq,
    pub decoder_prefix: TokenSeq,
    pub target_output: TokenSeq,
}

impl SerializedExample {
    /// The part of the target the model is expected to generate.
    pub fn target_tail(&self) -> &[String] {
        &self.target_output[self.decoder_prefix.len().min(self.target_output.len())..]
    }
}

/// Why a generated template was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InvalidReason {
    MissingConstraint { index: usize },
    DuplicateConstraint { index: usize },
    UnknownConstraint { index: usize },
    Shape { detail: String },
    IllFormed { detail: String },
    TagRecall { detail: String },
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingConstraint { index } => write!(f, "missing C{index}"),
            Self::DuplicateConstraint { index } => write!(f, "repeated C{index}"),
            Self::UnknownConstraint { index } => write!(f, "unknown C{index}"),
            Self::Shape { detail } => write!(f, "bad shape: {detail}"),
            Self::IllFormed { detail } => write!(f, "ill-formed markup: {detail}"),
            Self::TagRecall { detail } => write!(f, "tag recall: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(InvalidReason),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("constraint {index} has an empty phrase")]
    EmptyConstraint { index: usize },
    #[error("source phrase of constraint {index} ({phrase:?}) has no free occurrence")]
    UnmatchedConstraint { index: usize, phrase: String },
    #[error("target phrase of constraint {index} ({phrase:?}) has no free occurrence")]
    UnmatchedTarget { index: usize, phrase: String },
    #[error("spans {0} and {1} overlap or are out of order")]
    OverlappingSpans(Span, Span),
    #[error("span {span} is out of bounds for a sentence of {len} tokens")]
    SpanOutOfBounds { span: Span, len: usize },
    #[error("span {span} does not cover the phrase of constraint {index}")]
    SpanMismatch { index: usize, span: Span },
    #[error("{spans} spans given for {constraints} constraints")]
    SpanCount { spans: usize, constraints: usize },
    #[error("{needed} nonterminals needed but max_index is {max}")]
    TooManyNonterminals { needed: usize, max: usize },
    #[error("sentence contains reserved token {0:?}")]
    ReservedToken(String),
    #[error("no derivation rule for {0}")]
    MissingRule(Nonterminal),
    #[error("template element {0:?} cannot be reconstructed here")]
    UnexpectedElement(String),
    #[error(transparent)]
    Output(#[from] OutputError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OutputError {
    #[error("no separator token in model output")]
    MissingSeparator,
    #[error("unexpected token {token:?} at position {position} in template region")]
    TemplateToken { position: usize, token: String },
    #[error("nonterminal {0} is not allowed in the derivation region")]
    DerivationNonterminal(Nonterminal),
    #[error("tag {0:?} is not allowed in the derivation region")]
    DerivationTag(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseWarning {
    /// A repeated rule; the first occurrence was kept.
    DuplicateRule { nonterminal: String },
    /// Tokens after the separator that no rule opened.
    OrphanTokens { count: usize },
    ExtraSeparator,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateRule { nonterminal } => write!(f, "duplicate rule for {nonterminal}"),
            Self::OrphanTokens { count } => write!(f, "{count} tokens before the first rule"),
            Self::ExtraSeparator => f.write_str("extra separator in derivation region"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedOutput {
    pub template: Template,
    pub derivations: DerivationTable,
    pub warnings: Vec<ParseWarning>,
}

/// What a template region may contain besides nonterminals of `template_kinds`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OutputGrammar {
    pub template_kinds: &'static [NtKind],
    pub rule_kind: NtKind,
    pub allow_tags: bool,
}

/// Result of a tolerant scan: everything recoverable plus every hard error seen.
#[derive(Debug, Clone)]
pub(crate) struct Scan {
    pub parsed: ParsedOutput,
    pub errors: Vec<OutputError>,
}

impl Scan {
    pub fn strict(self) -> Result<ParsedOutput, OutputError> {
        match self.errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(self.parsed),
        }
    }
}

/// Splits `tail` at its first separator and reads the template and derivation
/// regions. Never fails; hard errors are collected and unusable tokens are
/// kept as literals (template region) or dropped (derivation region).
pub(crate) fn scan_output(tail: &[String], vocab: &ReservedVocab, grammar: OutputGrammar) -> Scan {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    let sep_at = tail.iter().position(|t| vocab.is_sep(t));
    let (template_region, derivation_region) = match sep_at {
        Some(i) => (&tail[..i], &tail[i + 1..]),
        None => {
            errors.push(OutputError::MissingSeparator);
            (tail, &tail[tail.len()..])
        }
    };

    let mut elements = Vec::with_capacity(template_region.len());
    for (position, token) in template_region.iter().enumerate() {
        match vocab.parse_nonterminal(token) {
            Some(nt) if grammar.template_kinds.contains(&nt.kind) => elements.push(Element::Nt(nt)),
            _ if grammar.allow_tags && vocab.is_tag(token) => {
                elements.push(Element::Literal(token.clone()))
            }
            _ => {
                errors.push(OutputError::TemplateToken {
                    position,
                    token: token.clone(),
                });
                // constraint markers stay recoverable even when misplaced
                match vocab.parse_nonterminal(token) {
                    Some(nt) => elements.push(Element::Nt(nt)),
                    None if !vocab.is_sep(token) => elements.push(Element::Literal(token.clone())),
                    None => {}
                }
            }
        }
    }

    let mut derivations = DerivationTable::new();
    let mut open: Option<(Nonterminal, TokenSeq)> = None;
    let mut discarding = false;
    let mut orphans = 0usize;
    let mut close = |open: &mut Option<(Nonterminal, TokenSeq)>, warnings: &mut Vec<ParseWarning>| {
        if let Some((nt, value)) = open.take() {
            if !derivations.insert(nt, value) {
                warnings.push(ParseWarning::DuplicateRule {
                    nonterminal: vocab.render(nt),
                });
            }
        }
    };
    for token in derivation_region {
        if vocab.is_sep(token) {
            warnings.push(ParseWarning::ExtraSeparator);
            continue;
        }
        if let Some(nt) = vocab.parse_nonterminal(token) {
            close(&mut open, &mut warnings);
            if nt.kind == grammar.rule_kind {
                open = Some((nt, TokenSeq::new()));
                discarding = false;
            } else {
                errors.push(OutputError::DerivationNonterminal(nt));
                discarding = true;
            }
            continue;
        }
        if grammar.allow_tags && vocab.is_tag(token) {
            errors.push(OutputError::DerivationTag(token.clone()));
            continue;
        }
        match open.as_mut() {
            Some((_, value)) => value.push(token.clone()),
            None if discarding => {}
            None => orphans += 1,
        }
    }
    close(&mut open, &mut warnings);
    if orphans > 0 {
        warnings.push(ParseWarning::OrphanTokens { count: orphans });
    }

    Scan {
        parsed: ParsedOutput {
            template: Template::new(elements),
            derivations,
            warnings,
        },
        errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEX: OutputGrammar = OutputGrammar {
        template_kinds: &[NtKind::Y, NtKind::C],
        rule_kind: NtKind::Y,
        allow_tags: false,
    };

    fn toks(s: &str) -> Vec<String> {
        TokenSeq::from_line(s).into_inner()
    }

    #[test]
    fn interleave_shape() {
        let v = ReservedVocab::default();
        let t = Template::interleave(NtKind::X, [Element::Nt(Nonterminal::c(1))]);
        assert_eq!(t.display(&v).to_string(), "<X_0> <C_1> <X_1>");
    }

    #[test]
    fn table_keeps_first_rule_and_sorts() {
        let v = ReservedVocab::default();
        let mut d = DerivationTable::new();
        assert!(d.insert(Nonterminal::y(1), TokenSeq::from_line("b")));
        assert!(d.insert(Nonterminal::y(0), TokenSeq::from_line("a")));
        assert!(!d.insert(Nonterminal::y(1), TokenSeq::from_line("zzz")));
        assert_eq!(d.render(&v).join(" "), "<Y_0> a <Y_1> b");
    }

    #[test]
    fn scan_collects_errors_but_recovers() {
        let v = ReservedVocab::default();
        let scan = scan_output(&toks("<Y_0> oops <C_1> <sep> junk <Y_0> a <C_1> b <Y_0> c"), &v, LEX);
        assert_eq!(scan.errors.len(), 2);
        assert_eq!(scan.parsed.template.elements.len(), 3);
        assert_eq!(scan.parsed.derivations.get(&Nonterminal::y(0)).unwrap().to_line(), "a");
        assert!(scan
            .parsed
            .warnings
            .contains(&ParseWarning::OrphanTokens { count: 1 }));
        assert!(scan.parsed.warnings.iter().any(|w| matches!(w, ParseWarning::DuplicateRule { .. })));
    }

    #[test]
    fn missing_separator_is_first_error() {
        let v = ReservedVocab::default();
        let scan = scan_output(&toks("<Y_0> hello"), &v, LEX);
        assert_eq!(scan.strict().unwrap_err(), OutputError::MissingSeparator);
    }
}
