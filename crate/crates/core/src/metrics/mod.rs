//! Translation quality and constraint satisfaction metrics.
//!
//! All corpus scores are percentages in `[0, 100]` built from per-sentence
//! numerators and denominators, so they do not depend on evaluation order.

pub mod bleu;
pub mod ter;

use log::warn;
use serde::Serialize;

use crate::lexical::ConstraintPair;
use crate::matching::{assign_max, occurrences};
use crate::structural::{check_well_formed, tag_sequence};
use crate::tokens::{Span, TokenSeq};
use crate::vocab::ReservedVocab;

pub use bleu::BleuStats;
pub use ter::TerStats;

pub const DEFAULT_MAX_NGRAM: usize = 4;
pub const DEFAULT_WINDOW: usize = 2;
/// Edit weight of tokens covered by a constraint.
pub const CONSTRAINED_WEIGHT: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    pub hypothesis: TokenSeq,
    pub reference: TokenSeq,
    pub constraints: Vec<ConstraintPair>,
    pub source_tags: Option<Vec<String>>,
}

impl EvalRecord {
    pub fn new(hypothesis: TokenSeq, reference: TokenSeq) -> Self {
        Self {
            hypothesis,
            reference,
            constraints: Vec::new(),
            source_tags: None,
        }
    }

    pub fn with_constraints(mut self, constraints: Vec<ConstraintPair>) -> Self {
        self.constraints = constraints;
        self
    }

    fn targets(&self) -> Vec<&[String]> {
        self.constraints.iter().map(|c| c.tgt.tokens()).collect()
    }
}

/// Per-sentence scores. Constraint scores are `None` for sentences without
/// constraints, TER is `None` for an empty reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentenceScores {
    pub bleu: f64,
    pub exact_match: Option<f64>,
    pub window_overlap: Option<f64>,
    pub one_minus_term: Option<f64>,
    pub structure_correct: Option<bool>,
    pub structure_match: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub sentences: usize,
    pub constraints: usize,
    pub bleu: f64,
    pub exact_match: f64,
    pub window_overlap: f64,
    pub one_minus_term: f64,
    /// Records left out of 1-TERm because their reference is empty.
    pub ter_skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure_correct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure_match: Option<f64>,
}

/// Placement of each constraint's target phrase on disjoint spans of `tokens`.
fn place(tokens: &[String], targets: &[&[String]]) -> Vec<Option<Span>> {
    assign_max(tokens, targets)
}

fn percent(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        100.0
    } else {
        (100.0 * num / den).clamp(0.0, 100.0)
    }
}

/// Matched and total constraint counts for one record.
pub fn exact_match_counts(record: &EvalRecord) -> (usize, usize) {
    let targets = record.targets();
    let matched = place(&record.hypothesis, &targets).iter().flatten().count();
    (matched, targets.len())
}

pub fn exact_match(records: &[EvalRecord]) -> f64 {
    let (num, den) = records
        .iter()
        .map(exact_match_counts)
        .fold((0, 0), |(a, b), (m, t)| (a + m, b + t));
    percent(num as f64, den as f64)
}

/// Up to `window` tokens on each side of `span`.
fn context(tokens: &[String], span: Span, window: usize) -> Vec<&str> {
    let left = span.start.saturating_sub(window);
    let right = (span.end + window).min(tokens.len());
    tokens[left..span.start]
        .iter()
        .chain(&tokens[span.end..right])
        .map(String::as_str)
        .collect()
}

/// Multiset overlap of two windows divided by the larger window. Two empty
/// windows agree fully.
pub fn window_agreement(hyp: &[&str], reference: &[&str]) -> f64 {
    let larger = hyp.len().max(reference.len());
    if larger == 0 {
        return 1.0;
    }
    let mut pool: Vec<&str> = reference.to_vec();
    let mut shared = 0;
    for token in hyp {
        if let Some(i) = pool.iter().position(|t| t == token) {
            pool.swap_remove(i);
            shared += 1;
        }
    }
    shared as f64 / larger as f64
}

/// Sum of per-constraint window scores and the number of constraints.
pub fn window_overlap_sum(record: &EvalRecord, window: usize) -> (f64, usize) {
    let targets = record.targets();
    let hyp_spans = place(&record.hypothesis, &targets);
    let ref_spans = place(&record.reference, &targets);
    let sum = hyp_spans
        .iter()
        .zip(&ref_spans)
        .map(|(h, r)| match (h, r) {
            (Some(h), Some(r)) => window_agreement(
                &context(&record.hypothesis, *h, window),
                &context(&record.reference, *r, window),
            ),
            _ => 0.0,
        })
        .sum();
    (sum, targets.len())
}

pub fn window_overlap(records: &[EvalRecord], window: usize) -> f64 {
    let (num, den) = records
        .iter()
        .map(|r| window_overlap_sum(r, window))
        .fold((0.0, 0), |(a, b), (s, n)| (a + s, b + n));
    percent(num, den as f64)
}

fn mark(weights: &mut [u32], span: Span) {
    for w in &mut weights[span.start..span.end] {
        *w = CONSTRAINED_WEIGHT;
    }
}

/// Edit weights: reference tokens inside any occurrence of a constraint
/// phrase, and hypothesis tokens inside the placed occurrences, weigh 2.
pub fn term_weights(record: &EvalRecord) -> (Vec<u32>, Vec<u32>) {
    let targets = record.targets();
    let mut hyp = vec![1; record.hypothesis.len()];
    for span in place(&record.hypothesis, &targets).into_iter().flatten() {
        mark(&mut hyp, span);
    }
    let mut reference = vec![1; record.reference.len()];
    for target in &targets {
        for span in occurrences(&record.reference, target) {
            mark(&mut reference, span);
        }
    }
    (hyp, reference)
}

/// Weighted TER statistics, or `None` for an empty reference.
pub fn term_stats(record: &EvalRecord) -> Option<TerStats> {
    if record.reference.is_empty() {
        return None;
    }
    let (hyp_w, ref_w) = term_weights(record);
    let mut interner = ter::Interner::default();
    let hyp = interner.weighted(&record.hypothesis, &hyp_w);
    let reference = interner.weighted(&record.reference, &ref_w);
    Some(ter::ter(&hyp, &reference))
}

/// `100 · (1 − edits / reference weight)` summed over the corpus, clamped.
/// Returns the score and the number of skipped records.
pub fn term_score(records: &[EvalRecord]) -> (f64, usize) {
    let mut edits = 0u64;
    let mut weight = 0u64;
    let mut skipped = 0;
    for (i, r) in records.iter().enumerate() {
        match term_stats(r) {
            Some(s) => {
                edits += s.edits;
                weight += s.ref_weight;
            }
            None => {
                warn!("record {}: empty reference, left out of 1-TERm", i + 1);
                skipped += 1;
            }
        }
    }
    (one_minus(edits, weight), skipped)
}

fn one_minus(edits: u64, weight: u64) -> f64 {
    if weight == 0 {
        return 100.0;
    }
    (100.0 * (1.0 - edits as f64 / weight as f64)).clamp(0.0, 100.0)
}

pub fn bleu(records: &[EvalRecord], max_ngram: usize) -> f64 {
    let mut total = BleuStats::new(max_ngram);
    for r in records {
        total.add(&BleuStats::from_sentence(&r.hypothesis, &r.reference, max_ngram));
    }
    total.score()
}

/// Whether the hypothesis tags nest properly, and whether they equal the
/// reference tags in order.
pub fn structure_flags(vocab: &ReservedVocab, record: &EvalRecord) -> (bool, bool) {
    let hyp_tags = tag_sequence(vocab, &record.hypothesis);
    let correct = check_well_formed(vocab, &hyp_tags).is_ok();
    let matched = hyp_tags == tag_sequence(vocab, &record.reference);
    (correct, matched)
}

/// Percentages of well-formed and reference-matching tag structures.
pub fn structure_metrics(vocab: &ReservedVocab, records: &[EvalRecord]) -> (f64, f64) {
    let (correct, matched) = records
        .iter()
        .map(|r| structure_flags(vocab, r))
        .fold((0, 0), |(c, m), (a, b)| (c + a as usize, m + b as usize));
    let n = records.len() as f64;
    (percent(correct as f64, n), percent(matched as f64, n))
}

/// Scores every record. Structure flags are filled in when `vocab` is given.
pub fn sentence_scores(record: &EvalRecord, vocab: Option<&ReservedVocab>) -> SentenceScores {
    let has_constraints = !record.constraints.is_empty();
    let (matched, total) = exact_match_counts(record);
    let (window_sum, _) = window_overlap_sum(record, DEFAULT_WINDOW);
    let structure = vocab.map(|v| structure_flags(v, record));
    SentenceScores {
        bleu: BleuStats::from_sentence(&record.hypothesis, &record.reference, DEFAULT_MAX_NGRAM).score(),
        exact_match: has_constraints.then(|| percent(matched as f64, total as f64)),
        window_overlap: has_constraints.then(|| percent(window_sum, total as f64)),
        one_minus_term: term_stats(record).map(|s| one_minus(s.edits, s.ref_weight)),
        structure_correct: structure.map(|s| s.0),
        structure_match: structure.map(|s| s.1),
    }
}

/// The full corpus report. Structural metrics are included when `vocab` is given.
pub fn evaluate(records: &[EvalRecord], vocab: Option<&ReservedVocab>) -> MetricReport {
    let (one_minus_term, ter_skipped) = term_score(records);
    let structure = vocab.map(|v| structure_metrics(v, records));
    MetricReport {
        sentences: records.len(),
        constraints: records.iter().map(|r| r.constraints.len()).sum(),
        bleu: bleu(records, DEFAULT_MAX_NGRAM),
        exact_match: exact_match(records),
        window_overlap: window_overlap(records, DEFAULT_WINDOW),
        one_minus_term,
        ter_skipped,
        structure_correct: structure.map(|s| s.0),
        structure_match: structure.map(|s| s.1),
    }
}
