//! Lexical-constraint templates.
//!
//! A source sentence with `N` constraint phrases is cut into `2N + 1` pieces:
//! free fragments `p0 … pN` around the constraint phrases `u1 … uN`. Fragments
//! become `X` nonterminals, constraints become `C` nonterminals, and the
//! encoder input is
//!
//! ```text
//! C1 u1 … CN uN <sep> X0 C1 X1 … CN XN <sep> X0 p0 … XN pN
//! ```
//!
//! The target side mirrors this with `Y` nonterminals, except that the
//! constraints appear in target order inside the template. The constraint
//! derivations `C1 v1 … CN vN <sep>` are forced as the decoder prefix, so a
//! model only generates the template and the free-token derivations.
//!
//! Constraint indices follow source order: `C1` is the constraint whose
//! source phrase comes first in the sentence, whatever order the caller
//! listed the constraints in. [`LexicalEncoding::assignment`] records the
//! mapping.

use log::debug;

use crate::matching;
use crate::template::{
    scan_output, DerivationTable, Element, InvalidReason, OutputError, OutputGrammar,
    ParsedOutput, SerializedExample, Template, TemplateError, Verdict,
};
use crate::tokens::{Span, TokenSeq};
use crate::vocab::{NtKind, Nonterminal, ReservedVocab};

/// A source phrase and the target phrase it must be translated into.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConstraintPair {
    pub src: TokenSeq,
    pub tgt: TokenSeq,
    /// 1-based position of the constraint in its set.
    pub index: usize,
}

impl ConstraintPair {
    pub fn new(src: TokenSeq, tgt: TokenSeq, index: usize) -> Result<Self, TemplateError> {
        if src.is_empty() || tgt.is_empty() {
            return Err(TemplateError::EmptyConstraint { index });
        }
        Ok(Self { src, tgt, index })
    }
}

/// Serialized example plus the bookkeeping needed to decode it later.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexicalEncoding {
    pub example: SerializedExample,
    /// `assignment[j]` is the `C` index given to the `j`-th input constraint.
    pub assignment: Vec<usize>,
    /// The constraint derivations `Ck → vk`.
    pub constraint_rules: DerivationTable,
}

impl LexicalEncoding {
    pub fn n_constraints(&self) -> usize {
        self.assignment.len()
    }
}

pub(crate) const OUTPUT_GRAMMAR: OutputGrammar = OutputGrammar {
    template_kinds: &[NtKind::Y, NtKind::C],
    rule_kind: NtKind::Y,
    allow_tags: false,
};

/// Locates each constraint's source phrase in `x` on pairwise disjoint spans.
///
/// Constraints are placed in the given order, each on its leftmost occurrence
/// not claimed by an earlier one; when that strands a later constraint the
/// search backtracks to the next leftmost arrangement. Returned spans follow
/// input constraint order.
pub fn match_constraint_spans(x: &[String], constraints: &[ConstraintPair]) -> Result<Vec<Span>, TemplateError> {
    let phrases: Vec<&[String]> = constraints.iter().map(|c| c.src.tokens()).collect();
    matching::assign_all(x, &phrases).map_err(|i| TemplateError::UnmatchedConstraint {
        index: constraints[i].index,
        phrase: constraints[i].src.to_line(),
    })
}

/// Same as [`match_constraint_spans`] for the target phrases in `y`.
pub fn match_target_spans(y: &[String], constraints: &[ConstraintPair]) -> Result<Vec<Span>, TemplateError> {
    let phrases: Vec<&[String]> = constraints.iter().map(|c| c.tgt.tokens()).collect();
    matching::assign_all(y, &phrases).map_err(|i| TemplateError::UnmatchedTarget {
        index: constraints[i].index,
        phrase: constraints[i].tgt.to_line(),
    })
}

/// Cuts `x` into the free fragments around `spans`, which must be sorted,
/// disjoint and in bounds. Returns `spans.len() + 1` fragments, any of which
/// may be empty.
pub fn segment(x: &[String], spans: &[Span]) -> Result<Vec<TokenSeq>, TemplateError> {
    let mut fragments = Vec::with_capacity(spans.len() + 1);
    let mut cursor = 0;
    let mut previous: Option<Span> = None;
    for &span in spans {
        if span.is_empty() || span.end > x.len() {
            return Err(TemplateError::SpanOutOfBounds { span, len: x.len() });
        }
        if span.start < cursor {
            return Err(TemplateError::OverlappingSpans(previous.unwrap_or(span), span));
        }
        fragments.push(TokenSeq::from(&x[cursor..span.start]));
        cursor = span.end;
        previous = Some(span);
    }
    fragments.push(TokenSeq::from(&x[cursor..]));
    Ok(fragments)
}

/// Builds `(x′, y′)` for training, locating source phrases with
/// [`match_constraint_spans`] and taking target spans from `tgt_spans`
/// (one per constraint, in input order).
pub fn build_training_pair(
    vocab: &ReservedVocab,
    x: &[String],
    y: &[String],
    constraints: &[ConstraintPair],
    tgt_spans: &[Span],
) -> Result<LexicalEncoding, TemplateError> {
    let src_spans = match_constraint_spans(x, constraints)?;
    build_training_pair_with_spans(vocab, x, y, constraints, &src_spans, tgt_spans)
}

/// Builds `(x′, y′)` from explicit spans on both sides.
pub fn build_training_pair_with_spans(
    vocab: &ReservedVocab,
    x: &[String],
    y: &[String],
    constraints: &[ConstraintPair],
    src_spans: &[Span],
    tgt_spans: &[Span],
) -> Result<LexicalEncoding, TemplateError> {
    let mut encoding = encode_source(vocab, x, constraints, src_spans)?;
    check_plain(vocab, y)?;
    check_spans(y, constraints, tgt_spans, |c| &c.tgt)?;

    // target template: C nonterminals in the order their phrases appear in y
    let mut by_position: Vec<usize> = (0..constraints.len()).collect();
    by_position.sort_by_key(|&j| tgt_spans[j].start);
    let sorted: Vec<Span> = by_position.iter().map(|&j| tgt_spans[j]).collect();
    let fragments = segment(y, &sorted)?;
    let template = Template::interleave(
        NtKind::Y,
        by_position
            .iter()
            .map(|&j| Element::Nt(Nonterminal::c(encoding.assignment[j]))),
    );
    let free_rules: DerivationTable = fragments
        .into_iter()
        .enumerate()
        .map(|(i, q)| (Nonterminal::y(i), q))
        .collect();

    let mut target = encoding.example.decoder_prefix.clone();
    for tok in template.render(vocab) {
        target.push(tok);
    }
    target.push(vocab.sep_token.clone());
    for tok in free_rules.render(vocab) {
        target.push(tok);
    }
    encoding.example.target_output = target;
    Ok(encoding)
}

/// Builds the encoder input and forced decoder prefix for a source sentence.
pub fn build_inference_input(
    vocab: &ReservedVocab,
    x: &[String],
    constraints: &[ConstraintPair],
) -> Result<LexicalEncoding, TemplateError> {
    let spans = match_constraint_spans(x, constraints)?;
    encode_source(vocab, x, constraints, &spans)
}

fn encode_source(
    vocab: &ReservedVocab,
    x: &[String],
    constraints: &[ConstraintPair],
    src_spans: &[Span],
) -> Result<LexicalEncoding, TemplateError> {
    let n = constraints.len();
    if n > vocab.max_index {
        return Err(TemplateError::TooManyNonterminals {
            needed: n,
            max: vocab.max_index,
        });
    }
    for c in constraints {
        if c.src.is_empty() || c.tgt.is_empty() {
            return Err(TemplateError::EmptyConstraint { index: c.index });
        }
        check_plain(vocab, &c.tgt)?;
    }
    check_plain(vocab, x)?;
    check_spans(x, constraints, src_spans, |c| &c.src)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| src_spans[j].start);
    let mut assignment = vec![0; n];
    for (k, &j) in order.iter().enumerate() {
        assignment[j] = k + 1;
    }
    let sorted: Vec<Span> = order.iter().map(|&j| src_spans[j]).collect();
    let fragments = segment(x, &sorted)?;

    let source_rules: DerivationTable = order
        .iter()
        .enumerate()
        .map(|(k, &j)| (Nonterminal::c(k + 1), constraints[j].src.clone()))
        .collect();
    let constraint_rules: DerivationTable = order
        .iter()
        .enumerate()
        .map(|(k, &j)| (Nonterminal::c(k + 1), constraints[j].tgt.clone()))
        .collect();
    let template = Template::interleave(NtKind::X, (1..=n).map(|k| Element::Nt(Nonterminal::c(k))));
    let free_rules: DerivationTable = fragments
        .into_iter()
        .enumerate()
        .map(|(i, p)| (Nonterminal::x(i), p))
        .collect();

    let sep = vocab.sep_token.clone();
    let encoder_input: TokenSeq = source_rules
        .render(vocab)
        .into_iter()
        .chain(std::iter::once(sep.clone()))
        .chain(template.render(vocab))
        .chain(std::iter::once(sep.clone()))
        .chain(free_rules.render(vocab))
        .collect();
    let decoder_prefix: TokenSeq = constraint_rules
        .render(vocab)
        .into_iter()
        .chain(std::iter::once(sep))
        .collect();
    debug!("encoded {n} constraints into {} tokens", encoder_input.len());

    Ok(LexicalEncoding {
        example: SerializedExample {
            encoder_input,
            decoder_prefix,
            target_output: TokenSeq::new(),
        },
        assignment,
        constraint_rules,
    })
}

fn check_plain(vocab: &ReservedVocab, tokens: &[String]) -> Result<(), TemplateError> {
    match tokens.iter().find(|t| vocab.is_reserved(t)) {
        Some(t) => Err(TemplateError::ReservedToken(t.clone())),
        None => Ok(()),
    }
}

fn check_spans(
    sentence: &[String],
    constraints: &[ConstraintPair],
    spans: &[Span],
    phrase: impl Fn(&ConstraintPair) -> &TokenSeq,
) -> Result<(), TemplateError> {
    if spans.len() != constraints.len() {
        return Err(TemplateError::SpanCount {
            spans: spans.len(),
            constraints: constraints.len(),
        });
    }
    for (c, &span) in constraints.iter().zip(spans) {
        if span.is_empty() || span.end > sentence.len() {
            return Err(TemplateError::SpanOutOfBounds {
                span,
                len: sentence.len(),
            });
        }
        if sentence[span.start..span.end] != *phrase(c).tokens() {
            return Err(TemplateError::SpanMismatch { index: c.index, span });
        }
    }
    for (i, a) in spans.iter().enumerate() {
        for b in &spans[i + 1..] {
            if a.overlaps(b) {
                return Err(TemplateError::OverlappingSpans(*a, *b));
            }
        }
    }
    Ok(())
}

/// Parses a model continuation `t <sep> f` (everything after the forced prefix).
///
/// The template region admits only `Y` and `C` nonterminals. In the
/// derivation region each `Y` token opens a rule running to the next
/// nonterminal; a repeated rule keeps its first value and is reported as a
/// warning.
pub fn parse_output(vocab: &ReservedVocab, tail: &[String]) -> Result<ParsedOutput, OutputError> {
    scan_output(tail, vocab, OUTPUT_GRAMMAR).strict()
}

/// Checks that `template` is `Y0 Cj1 Y1 … CjN YN` with `{j1 … jN} = {1 … N}`.
/// Any ordering of the constraints is accepted.
pub fn validate_template(template: &Template, n_constraints: usize) -> Verdict {
    let mut seen = vec![false; n_constraints + 1];
    for nt in template.nonterminals().filter(|nt| nt.kind == NtKind::C) {
        if nt.index == 0 || nt.index > n_constraints {
            return Verdict::Invalid(InvalidReason::UnknownConstraint { index: nt.index });
        }
        if std::mem::replace(&mut seen[nt.index], true) {
            return Verdict::Invalid(InvalidReason::DuplicateConstraint { index: nt.index });
        }
    }
    if let Some(index) = (1..=n_constraints).find(|&k| !seen[k]) {
        return Verdict::Invalid(InvalidReason::MissingConstraint { index });
    }

    let expected_len = 2 * n_constraints + 1;
    if template.elements.len() != expected_len {
        return Verdict::Invalid(InvalidReason::Shape {
            detail: format!("{} elements, expected {expected_len}", template.elements.len()),
        });
    }
    for (pos, element) in template.elements.iter().enumerate() {
        let ok = match element {
            Element::Nt(nt) if pos % 2 == 0 => nt.kind == NtKind::Y && nt.index == pos / 2,
            Element::Nt(nt) => nt.kind == NtKind::C,
            Element::Literal(_) => false,
        };
        if !ok {
            return Verdict::Invalid(InvalidReason::Shape {
                detail: format!("unexpected element at position {pos}"),
            });
        }
    }
    Verdict::Valid
}

/// Replaces every template element by its derivation. `C` rules come from the
/// user constraints, `Y` rules from the model; a `Y` the model never derived
/// becomes the empty fragment.
pub fn reconstruct(
    template: &Template,
    constraint_rules: &DerivationTable,
    free_rules: &DerivationTable,
) -> Result<TokenSeq, TemplateError> {
    let mut out = TokenSeq::new();
    for element in &template.elements {
        match element {
            Element::Nt(nt) if nt.kind == NtKind::Y => {
                if let Some(q) = free_rules.get(nt) {
                    out.extend_from(q);
                }
            }
            Element::Nt(nt) if nt.kind == NtKind::C => {
                let v = constraint_rules.get(nt).ok_or(TemplateError::MissingRule(*nt))?;
                out.extend_from(v);
            }
            Element::Nt(nt) => return Err(TemplateError::UnexpectedElement(nt.to_string())),
            Element::Literal(t) => return Err(TemplateError::UnexpectedElement(t.clone())),
        }
    }
    Ok(out)
}

/// Reconstruction that never fails: unknown nonterminals vanish and literal
/// tokens recovered from a malformed template are kept in place.
pub fn reconstruct_best_effort(
    template: &Template,
    constraint_rules: &DerivationTable,
    free_rules: &DerivationTable,
) -> TokenSeq {
    let mut out = TokenSeq::new();
    for element in &template.elements {
        match element {
            Element::Nt(nt) => {
                let rules = if nt.kind == NtKind::C { constraint_rules } else { free_rules };
                if let Some(value) = rules.get(nt) {
                    out.extend_from(value);
                }
            }
            Element::Literal(t) => out.push(t.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_line(s)
    }

    fn pair(src: &str, tgt: &str, index: usize) -> ConstraintPair {
        ConstraintPair::new(seq(src), seq(tgt), index).unwrap()
    }

    fn template(vocab: &ReservedVocab, s: &str) -> Template {
        Template::new(
            s.split_whitespace()
                .map(|t| Element::Nt(vocab.parse_nonterminal(t).unwrap()))
                .collect(),
        )
    }

    #[test]
    fn matching_no_constraints() {
        assert_eq!(match_constraint_spans(&seq("a b"), &[]).unwrap(), vec![]);
    }

    #[test]
    fn matching_duplicate_phrases() {
        let spans = match_constraint_spans(&seq("a a"), &[pair("a", "x", 1), pair("a", "y", 2)]).unwrap();
        assert_eq!(spans, vec![Span::new(0, 1), Span::new(1, 2)]);
    }

    #[test]
    fn matching_reports_unmatched_constraint() {
        let err = match_constraint_spans(&seq("a b"), &[pair("c", "x", 1)]).unwrap_err();
        assert_eq!(
            err,
            TemplateError::UnmatchedConstraint {
                index: 1,
                phrase: "c".into()
            }
        );
    }

    #[test]
    fn overlapping_constraints_rejected() {
        let err = match_constraint_spans(&seq("a b c"), &[pair("a b", "x", 1), pair("b c", "y", 2)]);
        assert!(matches!(err, Err(TemplateError::UnmatchedConstraint { index: 2, .. })));
    }

    #[test]
    fn segment_examples() {
        let f = segment(&seq("a b c"), &[Span::new(1, 2)]).unwrap();
        assert_eq!(f, vec![seq("a"), seq("c")]);
        let f = segment(&seq("a b"), &[Span::new(0, 1), Span::new(1, 2)]).unwrap();
        assert_eq!(f, vec![seq(""), seq(""), seq("")]);
    }

    #[test]
    fn segment_rejects_overlap_and_bounds() {
        assert!(matches!(
            segment(&seq("a b c"), &[Span::new(0, 2), Span::new(1, 3)]),
            Err(TemplateError::OverlappingSpans(..))
        ));
        assert!(matches!(
            segment(&seq("a"), &[Span::new(0, 2)]),
            Err(TemplateError::SpanOutOfBounds { .. })
        ));
    }

    #[test]
    fn single_token_pair_with_empty_fragments() {
        let v = ReservedVocab::default();
        let enc = build_training_pair(&v, &seq("a"), &seq("a"), &[pair("a", "a", 1)], &[Span::new(0, 1)]).unwrap();
        assert_eq!(
            enc.example.encoder_input.to_line(),
            "<C_1> a <sep> <X_0> <C_1> <X_1> <sep> <X_0> <X_1>"
        );
        assert_eq!(
            enc.example.target_output.to_line(),
            "<C_1> a <sep> <Y_0> <C_1> <Y_1> <sep> <Y_0> <Y_1>"
        );
    }

    #[test]
    fn unconstrained_format() {
        let v = ReservedVocab::default();
        let enc = build_training_pair(&v, &seq("hello world"), &seq("bonjour"), &[], &[]).unwrap();
        assert_eq!(enc.example.encoder_input.to_line(), "<sep> <X_0> <sep> <X_0> hello world");
        assert_eq!(enc.example.target_output.to_line(), "<sep> <Y_0> <sep> <Y_0> bonjour");
        assert_eq!(enc.example.decoder_prefix.to_line(), "<sep>");
    }

    #[test]
    fn inference_prefix() {
        let v = ReservedVocab::default();
        let enc = build_inference_input(&v, &seq("a"), &[pair("a", "b", 1)]).unwrap();
        assert_eq!(enc.example.decoder_prefix.to_line(), "<C_1> b <sep>");
        assert!(enc.example.target_output.is_empty());
    }

    #[test]
    fn constraints_renumbered_by_source_position() {
        let v = ReservedVocab::default();
        let cons = [pair("c", "z", 1), pair("a", "x", 2)];
        let enc = build_inference_input(&v, &seq("a b c"), &cons).unwrap();
        assert_eq!(enc.assignment, vec![2, 1]);
        assert_eq!(enc.example.decoder_prefix.to_line(), "<C_1> x <C_2> z <sep>");
    }

    #[test]
    fn target_order_follows_target_positions() {
        let v = ReservedVocab::default();
        let cons = [pair("a", "x", 1), pair("b", "y", 2)];
        let enc = build_training_pair(&v, &seq("a b"), &seq("y q x"), &cons, &[Span::new(2, 3), Span::new(0, 1)]).unwrap();
        assert_eq!(
            enc.example.target_output.to_line(),
            "<C_1> x <C_2> y <sep> <Y_0> <C_2> <Y_1> <C_1> <Y_2> <sep> <Y_0> <Y_1> q <Y_2>"
        );
    }

    #[test]
    fn reserved_tokens_rejected() {
        let v = ReservedVocab::default();
        let err = build_inference_input(&v, &seq("a <sep> b"), &[]).unwrap_err();
        assert_eq!(err, TemplateError::ReservedToken("<sep>".into()));
    }

    #[test]
    fn bad_spans_rejected() {
        let v = ReservedVocab::default();
        let cons = [pair("a", "x", 1)];
        let err = build_training_pair(&v, &seq("a"), &seq("y"), &cons, &[Span::new(0, 1)]).unwrap_err();
        assert!(matches!(err, TemplateError::SpanMismatch { .. }));
        let err = build_training_pair(&v, &seq("a"), &seq("x"), &cons, &[]).unwrap_err();
        assert!(matches!(err, TemplateError::SpanCount { .. }));
    }

    #[test]
    fn too_many_constraints() {
        let mut v = ReservedVocab::default();
        v.max_index = 1;
        let cons = [pair("a", "x", 1), pair("b", "y", 2)];
        assert!(matches!(
            build_inference_input(&v, &seq("a b"), &cons),
            Err(TemplateError::TooManyNonterminals { needed: 2, max: 1 })
        ));
    }

    #[test]
    fn parse_unconstrained_shape() {
        let v = ReservedVocab::default();
        let out = parse_output(&v, &seq("<Y_0> <sep> <Y_0> hello")).unwrap();
        assert_eq!(out.template, template(&v, "<Y_0>"));
        assert_eq!(out.derivations.get(&Nonterminal::y(0)), Some(&seq("hello")));
    }

    #[test]
    fn parse_omission_is_not_an_error() {
        let v = ReservedVocab::default();
        let out = parse_output(&v, &seq("<Y_0> <C_1> <Y_1> <sep> <Y_1> b")).unwrap();
        assert!(!out.derivations.contains(&Nonterminal::y(0)));
        assert_eq!(validate_template(&out.template, 1), Verdict::Valid);
    }

    #[test]
    fn parse_errors() {
        let v = ReservedVocab::default();
        assert_eq!(parse_output(&v, &seq("<Y_0> hello")), Err(OutputError::MissingSeparator));
        assert!(matches!(
            parse_output(&v, &seq("<Y_0> word <sep> <Y_0> a")),
            Err(OutputError::TemplateToken { position: 1, .. })
        ));
        assert!(matches!(
            parse_output(&v, &seq("<Y_0> <X_1> <sep>")),
            Err(OutputError::TemplateToken { position: 1, .. })
        ));
        assert_eq!(
            parse_output(&v, &seq("<Y_0> <C_1> <Y_1> <sep> <Y_0> a <C_1> b")),
            Err(OutputError::DerivationNonterminal(Nonterminal::c(1)))
        );
    }

    #[test]
    fn parse_duplicate_rule_keeps_first() {
        let v = ReservedVocab::default();
        let out = parse_output(&v, &seq("<Y_0> <sep> <Y_0> a <Y_0> b")).unwrap();
        assert_eq!(out.derivations.get(&Nonterminal::y(0)), Some(&seq("a")));
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn validate_examples() {
        let v = ReservedVocab::default();
        assert!(validate_template(&template(&v, "<Y_0> <C_2> <Y_1> <C_1> <Y_2>"), 2).is_valid());
        assert!(validate_template(&template(&v, "<Y_0>"), 0).is_valid());
        assert_eq!(
            validate_template(&template(&v, "<Y_0> <C_1> <Y_1>"), 2),
            Verdict::Invalid(InvalidReason::MissingConstraint { index: 2 })
        );
        assert!(matches!(
            validate_template(&template(&v, "<Y_0> <C_1> <C_2> <Y_1> <Y_2>"), 2),
            Verdict::Invalid(InvalidReason::Shape { .. })
        ));
        assert!(matches!(
            validate_template(&template(&v, "<Y_1> <C_1> <Y_0>"), 1),
            Verdict::Invalid(InvalidReason::Shape { .. })
        ));
        assert_eq!(
            validate_template(&template(&v, "<Y_0> <C_1> <Y_1> <C_1> <Y_2>"), 2),
            Verdict::Invalid(InvalidReason::DuplicateConstraint { index: 1 })
        );
    }

    #[test]
    fn reconstruct_examples() {
        let v = ReservedVocab::default();
        let f: DerivationTable = [(Nonterminal::y(0), seq("hi"))].into_iter().collect();
        assert_eq!(reconstruct(&template(&v, "<Y_0>"), &DerivationTable::new(), &f).unwrap(), seq("hi"));

        let d: DerivationTable = [(Nonterminal::c(1), seq("b"))].into_iter().collect();
        let f: DerivationTable = [(Nonterminal::y(1), seq("c"))].into_iter().collect();
        let out = reconstruct(&template(&v, "<Y_0> <C_1> <Y_1>"), &d, &f).unwrap();
        assert_eq!(out, seq("b c"));

        let err = reconstruct(&template(&v, "<Y_0> <C_2> <Y_1>"), &d, &f).unwrap_err();
        assert_eq!(err, TemplateError::MissingRule(Nonterminal::c(2)));
    }
}
