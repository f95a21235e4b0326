//! Markup-preserving templates.
//!
//! Registered tags stay literal in the template while the free text between
//! them is abstracted: a sentence with `N` tags becomes
//! `X0 tag1 X1 … tagN XN <sep> X0 p0 … XN pN`. There is no constraint prefix.

use std::fmt;

use serde::Serialize;

use crate::template::{
    scan_output, DerivationTable, Element, InvalidReason, OutputError, OutputGrammar,
    ParsedOutput, SerializedExample, Template, TemplateError, Verdict,
};
use crate::tokens::TokenSeq;
use crate::vocab::{NtKind, Nonterminal, ReservedVocab, TagKind};

pub(crate) const OUTPUT_GRAMMAR: OutputGrammar = OutputGrammar {
    template_kinds: &[NtKind::Y],
    rule_kind: NtKind::Y,
    allow_tags: true,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSegments {
    pub tags: Vec<String>,
    /// `tags.len() + 1` maximal runs of non-tag tokens, possibly empty.
    pub fragments: Vec<TokenSeq>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructuralWarning {
    /// Source and target carry different tag multisets.
    TagMismatch { source: Vec<String>, target: Vec<String> },
}

impl fmt::Display for StructuralWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TagMismatch { source, target } => write!(
                f,
                "tag multisets differ: source [{}], target [{}]",
                source.join(" "),
                target.join(" ")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralEncoding {
    pub example: SerializedExample,
    pub source_tags: Vec<String>,
    pub warnings: Vec<StructuralWarning>,
}

pub fn segment_tagged(vocab: &ReservedVocab, x: &[String]) -> TaggedSegments {
    let mut tags = Vec::new();
    let mut fragments = vec![TokenSeq::new()];
    for token in x {
        if vocab.is_tag(token) {
            tags.push(token.clone());
            fragments.push(TokenSeq::new());
        } else {
            fragments.last_mut().expect("never empty").push(token.clone());
        }
    }
    TaggedSegments { tags, fragments }
}

/// The ordered tag tokens of a sentence.
pub fn tag_sequence(vocab: &ReservedVocab, tokens: &[String]) -> Vec<String> {
    tokens.iter().filter(|t| vocab.is_tag(t)).cloned().collect()
}

/// Returns the template and its derivation sequence `X0 p0 … XN pN`.
fn abstract_side(
    vocab: &ReservedVocab,
    sentence: &[String],
    kind: NtKind,
) -> Result<(Vec<String>, Vec<String>, Vec<String>), TemplateError> {
    if let Some(t) = sentence.iter().find(|t| vocab.is_reserved(t)) {
        return Err(TemplateError::ReservedToken(t.clone()));
    }
    let TaggedSegments { tags, fragments } = segment_tagged(vocab, sentence);
    if tags.len() > vocab.max_index {
        return Err(TemplateError::TooManyNonterminals {
            needed: tags.len(),
            max: vocab.max_index,
        });
    }
    let template = Template::interleave(kind, tags.iter().cloned().map(Element::Literal));
    let rules: DerivationTable = fragments
        .into_iter()
        .enumerate()
        .map(|(i, p)| (Nonterminal { kind, index: i }, p))
        .collect();
    Ok((tags, template.render(vocab), rules.render(vocab)))
}

fn join(template: Vec<String>, sep: &str, rules: Vec<String>) -> TokenSeq {
    template
        .into_iter()
        .chain(std::iter::once(sep.to_owned()))
        .chain(rules)
        .collect()
}

/// Encoder input `s <sep> e` for a tagged source sentence.
pub fn build_structural_input(vocab: &ReservedVocab, x: &[String]) -> Result<StructuralEncoding, TemplateError> {
    let (source_tags, template, rules) = abstract_side(vocab, x, NtKind::X)?;
    Ok(StructuralEncoding {
        example: SerializedExample {
            encoder_input: join(template, &vocab.sep_token, rules),
            ..Default::default()
        },
        source_tags,
        warnings: Vec::new(),
    })
}

/// Training pair `x′ = s <sep> e`, `y′ = t <sep> f`. Differing tag multisets
/// are reported as a warning, not rejected.
pub fn build_structural_pair(
    vocab: &ReservedVocab,
    x: &[String],
    y: &[String],
) -> Result<StructuralEncoding, TemplateError> {
    let mut encoding = build_structural_input(vocab, x)?;
    let (target_tags, template, rules) = abstract_side(vocab, y, NtKind::Y)?;
    if !same_multiset(&encoding.source_tags, &target_tags) {
        encoding.warnings.push(StructuralWarning::TagMismatch {
            source: encoding.source_tags.clone(),
            target: target_tags,
        });
    }
    encoding.example.target_output = join(template, &vocab.sep_token, rules);
    Ok(encoding)
}

/// Parses `t <sep> f`. The template region admits `Y` nonterminals and registered tags.
pub fn parse_structural_output(vocab: &ReservedVocab, tail: &[String]) -> Result<ParsedOutput, OutputError> {
    scan_output(tail, vocab, OUTPUT_GRAMMAR).strict()
}

/// Checks proper nesting of registered open/close pairs, matched by tag name.
/// Void tags are ignored. Non-tag tokens are skipped.
pub fn check_well_formed<S: AsRef<str>>(vocab: &ReservedVocab, tokens: &[S]) -> Result<(), String> {
    let mut stack: Vec<String> = Vec::new();
    for token in tokens {
        match vocab.tag_kind(token.as_ref()) {
            Some(TagKind::Open(name)) => stack.push(name),
            Some(TagKind::Close(name)) => match stack.pop() {
                Some(open) if open == name => {}
                Some(open) => return Err(format!("</{name}> closes <{open}>")),
                None => return Err(format!("</{name}> without an open tag")),
            },
            Some(TagKind::Void) | None => {}
        }
    }
    match stack.last() {
        Some(open) => Err(format!("<{open}> is never closed")),
        None => Ok(()),
    }
}

/// A generated template is valid when its tags nest properly and recall
/// exactly the source tag multiset.
pub fn validate_structural_template(vocab: &ReservedVocab, template: &Template, source_tags: &[String]) -> Verdict {
    let tags: Vec<&str> = template.literals().collect();
    if let Err(detail) = check_well_formed(vocab, &tags) {
        return Verdict::Invalid(InvalidReason::IllFormed { detail });
    }
    let tags: Vec<String> = tags.into_iter().map(str::to_owned).collect();
    if !same_multiset(&tags, source_tags) {
        return Verdict::Invalid(InvalidReason::TagRecall {
            detail: format!("template [{}] vs source [{}]", tags.join(" "), source_tags.join(" ")),
        });
    }
    Verdict::Valid
}

/// Tags pass through; `Y` nonterminals become their derivation or nothing.
pub fn reconstruct_structural(template: &Template, free_rules: &DerivationTable) -> TokenSeq {
    let mut out = TokenSeq::new();
    for element in &template.elements {
        match element {
            Element::Literal(t) => out.push(t.clone()),
            Element::Nt(nt) => {
                if let Some(q) = free_rules.get(nt) {
                    out.extend_from(q);
                }
            }
        }
    }
    out
}

fn same_multiset(a: &[String], b: &[String]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut a: Vec<&String> = a.iter().collect();
    let mut b: Vec<&String> = b.iter().collect();
    a.sort();
    b.sort();
    a == b
}
