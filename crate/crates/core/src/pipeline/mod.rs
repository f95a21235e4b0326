//! Corpus-level operations: prepare, encode, decode, sample, round trip, bench.
//!
//! Everything here works on in-memory corpora; [`files`] maps the same
//! operations onto the on-disk layout and [`bridge`] talks to an external
//! translator process.

pub mod bridge;
pub mod files;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{AlignmentSet, CorpusError, SpanLine};
use crate::lexical::{self, ConstraintPair};
use crate::metrics::{self, EvalRecord, MetricReport};
use crate::miner::{self, ConstraintSample, SamplerConfig};
use crate::structural;
use crate::synth;
use crate::template::{
    scan_output, DerivationTable, InvalidReason, ParseWarning, SerializedExample, Template, Verdict,
};
use crate::tokens::{Span, TokenSeq};
use crate::vocab::{Nonterminal, NtKind, ReservedVocab};

/// Tokens per second of the reference decoder that the bench budget is relative to.
pub const DEFAULT_BASELINE_TPS: f64 = 3390.0;
/// Largest share of the baseline per-token time reconstruction may take.
pub const RECONSTRUCTION_BUDGET: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Lexical,
    Structural,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Lexical => "lexical",
            Mode::Structural => "structural",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexical" => Ok(Mode::Lexical),
            "structural" => Ok(Mode::Structural),
            other => Err(format!("unknown mode {other:?}, expected lexical or structural")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("line {line}: {detail}")]
    Data { line: usize, detail: String },
    #[error("translator: {0}")]
    Translator(String),
    #[error("{} invariant breach(es): {}", .0.len(), .0.join("; "))]
    Invariant(Vec<String>),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Corpus(_) | PipelineError::Data { .. } | PipelineError::Translator(_) => 2,
            PipelineError::Invariant(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub vocab: ReservedVocab,
    pub sampler: SamplerConfig,
    pub shards: usize,
    pub translator: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Lexical,
            vocab: ReservedVocab::default(),
            sampler: SamplerConfig::default(),
            shards: 1,
            translator: None,
        }
    }
}

impl PipelineConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.shards == 0 {
            return Err(PipelineError::Usage("shard count must be at least 1".into()));
        }
        self.vocab
            .validate()
            .map_err(|e| PipelineError::Usage(format!("vocabulary: {e}")))?;
        self.sampler
            .validate()
            .map_err(|e| PipelineError::Usage(format!("sampler: {e}")))
    }
}

/// Contiguous index ranges covering `0..len`, at most `shards` of them.
pub fn shard_ranges(len: usize, shards: usize) -> Vec<Range<usize>> {
    if len == 0 {
        return Vec::new();
    }
    let size = len.div_ceil(shards.max(1));
    (0..len)
        .step_by(size)
        .map(|start| start..(start + size).min(len))
        .collect()
}

/// Maps `f(index, item)` over `items` on up to `shards` threads. Results come
/// back in input order whatever the shard count.
pub fn sharded_map<T, R, F>(items: &[T], shards: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let ranges = shard_ranges(items.len(), shards);
    if ranges.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .into_iter()
            .map(|range| {
                let f = &f;
                scope.spawn(move || range.map(|i| f(i, &items[i])).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("shard worker panicked"))
            .collect()
    })
}

/// Per-line bookkeeping written next to serialized data and read back by decode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaRecord {
    /// 1-based line in the input corpus.
    pub line: usize,
    pub mode: Mode,
    /// Number of constraints actually encoded.
    pub n: usize,
    /// `assignment[j]` is the `C` index of the `j`-th input constraint.
    #[serde(default)]
    pub assignment: Vec<usize>,
    /// Target phrase of `C1 … Cn`, in index order.
    #[serde(default)]
    pub constraints: Vec<TokenSeq>,
    #[serde(default)]
    pub source_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MetaRecord {
    pub fn constraint_rules(&self) -> DerivationTable {
        self.constraints
            .iter()
            .enumerate()
            .map(|(k, v)| (Nonterminal::c(k + 1), v.clone()))
            .collect()
    }

    /// The decoder prefix `d <sep>`, empty in structural mode.
    pub fn prefix(&self, vocab: &ReservedVocab) -> TokenSeq {
        match self.mode {
            Mode::Structural => TokenSeq::new(),
            Mode::Lexical => self
                .constraint_rules()
                .render(vocab)
                .into_iter()
                .chain(std::iter::once(vocab.sep_token.clone()))
                .collect(),
        }
    }
}

/// A bitext with optional per-line constraints and spans.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub pairs: Vec<(TokenSeq, TokenSeq)>,
    /// One set per line; empty when the corpus has no constraints.
    pub constraints: Vec<Vec<ConstraintPair>>,
    /// Source and target spans of every constraint, when known.
    pub spans: Option<Vec<SpanLine>>,
}

impl Corpus {
    pub fn new(pairs: Vec<(TokenSeq, TokenSeq)>) -> Self {
        let constraints = vec![Vec::new(); pairs.len()];
        Self {
            pairs,
            constraints,
            spans: None,
        }
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        if self.constraints.len() != self.pairs.len() {
            return Err(CorpusError::LineCount(self.pairs.len(), self.constraints.len()).into());
        }
        if let Some(spans) = &self.spans {
            if spans.len() != self.pairs.len() {
                return Err(CorpusError::LineCount(self.pairs.len(), spans.len()).into());
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedLine {
    pub example: SerializedExample,
    pub meta: MetaRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Prepared {
    pub lines: Vec<SerializedLine>,
    pub skipped: Vec<Skip>,
}

fn lexical_meta(line: usize, encoding: &lexical::LexicalEncoding, note: Option<String>) -> MetaRecord {
    MetaRecord {
        line,
        mode: Mode::Lexical,
        n: encoding.n_constraints(),
        assignment: encoding.assignment.clone(),
        constraints: encoding.constraint_rules.iter().map(|(_, v)| v.clone()).collect(),
        source_tags: Vec::new(),
        note,
    }
}

fn structural_meta(line: usize, encoding: &structural::StructuralEncoding) -> MetaRecord {
    let note = (!encoding.warnings.is_empty()).then(|| {
        encoding
            .warnings
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    });
    MetaRecord {
        line,
        mode: Mode::Structural,
        n: 0,
        assignment: Vec::new(),
        constraints: Vec::new(),
        source_tags: encoding.source_tags.clone(),
        note,
    }
}

fn prepare_line(cfg: &PipelineConfig, corpus: &Corpus, i: usize) -> Result<SerializedLine, String> {
    let (x, y) = &corpus.pairs[i];
    let line = i + 1;
    match cfg.mode {
        Mode::Lexical => {
            let constraints = &corpus.constraints[i];
            let encoding = match &corpus.spans {
                Some(spans) => {
                    let spans = &spans[i].spans;
                    let src: Vec<Span> = spans.iter().map(|s| s.src).collect();
                    let tgt: Vec<Span> = spans.iter().map(|s| s.tgt).collect();
                    lexical::build_training_pair_with_spans(&cfg.vocab, x, y, constraints, &src, &tgt)
                }
                None => lexical::match_target_spans(y, constraints)
                    .and_then(|tgt| lexical::build_training_pair(&cfg.vocab, x, y, constraints, &tgt)),
            }
            .map_err(|e| e.to_string())?;
            let meta = lexical_meta(line, &encoding, None);
            Ok(SerializedLine {
                example: encoding.example,
                meta,
            })
        }
        Mode::Structural => {
            let encoding = structural::build_structural_pair(&cfg.vocab, x, y).map_err(|e| e.to_string())?;
            for w in &encoding.warnings {
                warn!("line {line}: {w}");
            }
            let meta = structural_meta(line, &encoding);
            Ok(SerializedLine {
                example: encoding.example,
                meta,
            })
        }
    }
}

/// Serializes every training pair. Lines that cannot be encoded (unmatched
/// constraints, reserved tokens, bad spans) are skipped and reported.
pub fn prepare(cfg: &PipelineConfig, corpus: &Corpus) -> Result<Prepared, PipelineError> {
    corpus.check()?;
    let results = sharded_map(&corpus.pairs, cfg.shards, |i, _| prepare_line(cfg, corpus, i));
    let mut prepared = Prepared::default();
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok(line) => prepared.lines.push(line),
            Err(reason) => {
                warn!("line {}: skipped: {reason}", i + 1);
                prepared.skipped.push(Skip { line: i + 1, reason });
            }
        }
    }
    info!("prepared {} lines, skipped {}", prepared.lines.len(), prepared.skipped.len());
    Ok(prepared)
}

fn encode_line(
    cfg: &PipelineConfig,
    line: usize,
    x: &[String],
    constraints: &[ConstraintPair],
) -> Result<SerializedLine, PipelineError> {
    let data = |e: &dyn fmt::Display| PipelineError::Data {
        line,
        detail: e.to_string(),
    };
    match cfg.mode {
        Mode::Lexical => match lexical::build_inference_input(&cfg.vocab, x, constraints) {
            Ok(encoding) => Ok(SerializedLine {
                meta: lexical_meta(line, &encoding, None),
                example: encoding.example,
            }),
            Err(e) if !constraints.is_empty() => {
                warn!("line {line}: {e}; encoding without constraints");
                let encoding = lexical::build_inference_input(&cfg.vocab, x, &[]).map_err(|e| data(&e))?;
                Ok(SerializedLine {
                    meta: lexical_meta(line, &encoding, Some(format!("constraints dropped: {e}"))),
                    example: encoding.example,
                })
            }
            Err(e) => Err(data(&e)),
        },
        Mode::Structural => {
            let encoding = structural::build_structural_input(&cfg.vocab, x).map_err(|e| data(&e))?;
            Ok(SerializedLine {
                meta: structural_meta(line, &encoding),
                example: encoding.example,
            })
        }
    }
}

/// Builds encoder inputs and decoder prefixes, one per source line. A line
/// whose constraints cannot be placed falls back to the unconstrained
/// encoding and says so in its meta note.
pub fn encode(
    cfg: &PipelineConfig,
    sources: &[TokenSeq],
    constraints: &[Vec<ConstraintPair>],
) -> Result<Vec<SerializedLine>, PipelineError> {
    if constraints.len() != sources.len() {
        return Err(CorpusError::LineCount(sources.len(), constraints.len()).into());
    }
    sharded_map(sources, cfg.shards, |i, x| encode_line(cfg, i + 1, x, &constraints[i]))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditRecord {
    pub line: usize,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<InvalidReason>,
    /// `C` indices in template order.
    pub constraint_indices: Vec<usize>,
    /// Template `Y` nonterminals without a derivation, filled with nothing.
    pub omitted_y: usize,
    /// The output did not parse cleanly and was reconstructed from what could be read.
    pub fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decoded {
    pub translations: Vec<TokenSeq>,
    pub audit: Vec<AuditRecord>,
}

impl Decoded {
    /// Percentage of outputs whose template is valid; 100 for no outputs.
    pub fn template_accuracy(&self) -> f64 {
        if self.audit.is_empty() {
            return 100.0;
        }
        let valid = self.audit.iter().filter(|a| a.valid).count();
        100.0 * valid as f64 / self.audit.len() as f64
    }
}

fn omitted(template: &Template, rules: &DerivationTable) -> usize {
    template
        .nonterminals()
        .filter(|nt| nt.kind == NtKind::Y && !rules.contains(nt))
        .count()
}

/// Decodes one model output against its meta record. Never fails.
pub fn decode_line(vocab: &ReservedVocab, output: &[String], meta: &MetaRecord) -> (TokenSeq, AuditRecord) {
    let prefix = meta.prefix(vocab);
    let tail = if !prefix.is_empty() && output.starts_with(&prefix) {
        &output[prefix.len()..]
    } else {
        output
    };
    let grammar = match meta.mode {
        Mode::Lexical => lexical::OUTPUT_GRAMMAR,
        Mode::Structural => structural::OUTPUT_GRAMMAR,
    };
    let scan = scan_output(tail, vocab, grammar);
    let parse_error = scan.errors.first().map(ToString::to_string);
    let parsed = scan.parsed;

    let (verdict, translation) = match meta.mode {
        Mode::Lexical => (
            lexical::validate_template(&parsed.template, meta.n),
            lexical::reconstruct_best_effort(&parsed.template, &meta.constraint_rules(), &parsed.derivations),
        ),
        Mode::Structural => (
            structural::validate_structural_template(vocab, &parsed.template, &meta.source_tags),
            structural::reconstruct_structural(&parsed.template, &parsed.derivations),
        ),
    };
    let audit = AuditRecord {
        line: meta.line,
        valid: verdict.is_valid(),
        reason: match verdict {
            Verdict::Valid => None,
            Verdict::Invalid(reason) => Some(reason),
        },
        constraint_indices: parsed
            .template
            .nonterminals()
            .filter(|nt| nt.kind == NtKind::C)
            .map(|nt| nt.index)
            .collect(),
        omitted_y: omitted(&parsed.template, &parsed.derivations),
        fallback: parse_error.is_some(),
        parse_error,
        warnings: parsed.warnings,
    };
    (translation, audit)
}

/// Reconstructs one sentence per model output line.
pub fn decode(cfg: &PipelineConfig, outputs: &[TokenSeq], meta: &[MetaRecord]) -> Result<Decoded, PipelineError> {
    if outputs.len() != meta.len() {
        return Err(CorpusError::LineCount(outputs.len(), meta.len()).into());
    }
    if let Some(m) = meta.iter().find(|m| m.mode != cfg.mode) {
        return Err(PipelineError::Data {
            line: m.line,
            detail: format!("meta record is {} but decoding in {} mode", m.mode, cfg.mode),
        });
    }
    let results = sharded_map(outputs, cfg.shards, |i, out| decode_line(&cfg.vocab, out, &meta[i]));
    let mut decoded = Decoded::default();
    for (translation, audit) in results {
        if audit.fallback {
            warn!("line {}: output recovered by fallback", audit.line);
        }
        decoded.translations.push(translation);
        decoded.audit.push(audit);
    }
    Ok(decoded)
}

/// Draws constraints for every sentence pair. Sentence `i` always uses the
/// same random stream, so results do not depend on sharding.
pub fn sample(
    cfg: &PipelineConfig,
    pairs: &[(TokenSeq, TokenSeq)],
    alignments: &[AlignmentSet],
) -> Result<Vec<ConstraintSample>, PipelineError> {
    if pairs.len() != alignments.len() {
        return Err(CorpusError::LineCount(pairs.len(), alignments.len()).into());
    }
    let sampler = cfg.sampler;
    Ok(sharded_map(pairs, cfg.shards, |i, (x, y)| {
        let phrases = miner::extract_phrase_pairs(x, y, &alignments[i], sampler.max_len);
        miner::sample_constraints(&phrases, &sampler, &mut sampler.sentence_rng(i))
    }))
}

/// Builds evaluation records; constraints and source tags are optional.
pub fn evaluation_records(
    hypotheses: Vec<TokenSeq>,
    references: Vec<TokenSeq>,
    constraints: Option<Vec<Vec<ConstraintPair>>>,
) -> Result<Vec<EvalRecord>, PipelineError> {
    if hypotheses.len() != references.len() {
        return Err(CorpusError::LineCount(hypotheses.len(), references.len()).into());
    }
    let mut constraints = constraints.unwrap_or_else(|| vec![Vec::new(); hypotheses.len()]);
    if constraints.is_empty() {
        constraints = vec![Vec::new(); hypotheses.len()];
    }
    if constraints.len() != hypotheses.len() {
        return Err(CorpusError::LineCount(hypotheses.len(), constraints.len()).into());
    }
    Ok(hypotheses
        .into_iter()
        .zip(references)
        .zip(constraints)
        .map(|((h, r), c)| EvalRecord::new(h, r).with_constraints(c))
        .collect())
}

/// A seeded synthetic corpus: sampled constraints with their spans in
/// lexical mode, nested markup in structural mode.
pub fn synthetic_corpus(cfg: &PipelineConfig, sentences: usize) -> Corpus {
    let seed = cfg.sampler.rng_seed;
    match cfg.mode {
        Mode::Lexical => {
            let synthetic = synth::lexical_corpus(sentences, seed);
            let pairs: Vec<(TokenSeq, TokenSeq)> = synthetic
                .iter()
                .map(|p| (p.source.clone(), p.target.clone()))
                .collect();
            let alignments: Vec<AlignmentSet> = synthetic.into_iter().map(|p| p.alignment).collect();
            let samples = sample(cfg, &pairs, &alignments).expect("one alignment per pair");
            Corpus {
                pairs,
                constraints: samples.iter().map(|s| s.constraints.clone()).collect(),
                spans: Some(samples.into_iter().map(|s| SpanLine { spans: s.spans }).collect()),
            }
        }
        Mode::Structural => Corpus::new(synth::tagged_corpus(sentences, seed)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    pub sentences: usize,
    pub prepared: usize,
    pub skipped: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped_lines: Vec<Skip>,
    pub template_accuracy: f64,
    pub metrics: MetricReport,
    pub breaches: Vec<String>,
}

impl RoundtripReport {
    pub fn passed(&self) -> bool {
        self.breaches.is_empty()
    }
}

/// Runs prepare, feeds the gold continuation of every prepared line back as
/// model output, decodes and scores. Every reconstruction must equal its
/// reference and every metric must be perfect; anything else is a breach.
pub fn roundtrip(cfg: &PipelineConfig, corpus: &Corpus) -> Result<RoundtripReport, PipelineError> {
    let prepared = prepare(cfg, corpus)?;
    let outputs: Vec<TokenSeq> = prepared
        .lines
        .iter()
        .map(|l| TokenSeq::from(l.example.target_tail()))
        .collect();
    let meta: Vec<MetaRecord> = prepared.lines.iter().map(|l| l.meta.clone()).collect();
    let decoded = decode(cfg, &outputs, &meta)?;
    let template_accuracy = decoded.template_accuracy();

    let mut breaches = Vec::new();
    let mut records = Vec::with_capacity(meta.len());
    for ((m, hyp), audit) in meta.iter().zip(decoded.translations).zip(&decoded.audit) {
        let reference = &corpus.pairs[m.line - 1].1;
        if !audit.valid {
            let reason = audit.reason.as_ref().map(ToString::to_string).unwrap_or_default();
            breaches.push(format!("line {}: invalid template ({reason})", m.line));
        }
        if &hyp != reference {
            breaches.push(format!("line {}: reconstruction differs from reference", m.line));
        }
        let mut record = EvalRecord::new(hyp, reference.clone()).with_constraints(corpus.constraints[m.line - 1].clone());
        if cfg.mode == Mode::Structural {
            record.source_tags = Some(m.source_tags.clone());
        }
        records.push(record);
    }

    let structural = (cfg.mode == Mode::Structural).then_some(&cfg.vocab);
    let report = metrics::evaluate(&records, structural);
    let mut check = |name: &str, value: f64| {
        if value != 100.0 {
            breaches.push(format!("corpus {name} = {value}"));
        }
    };
    check("template accuracy", template_accuracy);
    check("bleu", report.bleu);
    check("exact match", report.exact_match);
    check("window overlap", report.window_overlap);
    check("1-TERm", report.one_minus_term);
    if let Some(v) = report.structure_correct {
        check("structure correct", v);
    }
    if let Some(v) = report.structure_match {
        check("structure match", v);
    }

    Ok(RoundtripReport {
        sentences: corpus.len(),
        prepared: meta.len(),
        skipped: prepared.skipped.len(),
        skipped_lines: prepared.skipped,
        template_accuracy,
        metrics: report,
        breaches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub sentences: usize,
    /// Source plus target tokens serialized.
    pub serialized_tokens: usize,
    /// Tokens produced by reconstruction.
    pub reconstructed_tokens: usize,
    pub serialize_secs: f64,
    pub reconstruct_secs: f64,
    pub serialize_tokens_per_sec: f64,
    pub reconstruct_tokens_per_sec: f64,
    pub baseline_tokens_per_sec: f64,
    /// Reconstruction time per token over baseline decoding time per token.
    pub reconstruct_cost_ratio: f64,
    pub within_budget: bool,
}

fn rate(tokens: usize, secs: f64) -> f64 {
    if tokens == 0 || secs <= 0.0 {
        0.0
    } else {
        tokens as f64 / secs
    }
}

/// Times serialization (prepare) and reconstruction (decode of the gold
/// continuations) separately.
pub fn bench(cfg: &PipelineConfig, corpus: &Corpus, baseline_tps: f64) -> Result<BenchReport, PipelineError> {
    if baseline_tps <= 0.0 {
        return Err(PipelineError::Usage("baseline tokens per second must be positive".into()));
    }
    let started = Instant::now();
    let prepared = prepare(cfg, corpus)?;
    let serialize_secs = started.elapsed().as_secs_f64();

    let outputs: Vec<TokenSeq> = prepared
        .lines
        .iter()
        .map(|l| TokenSeq::from(l.example.target_tail()))
        .collect();
    let meta: Vec<MetaRecord> = prepared.lines.iter().map(|l| l.meta.clone()).collect();
    let started = Instant::now();
    let decoded = decode(cfg, &outputs, &meta)?;
    let reconstruct_secs = started.elapsed().as_secs_f64();

    let serialized_tokens = prepared
        .lines
        .iter()
        .map(|l| {
            let (x, y) = &corpus.pairs[l.meta.line - 1];
            x.len() + y.len()
        })
        .sum();
    let reconstructed_tokens: usize = decoded.translations.iter().map(|t| t.len()).sum();
    let ratio = if reconstructed_tokens == 0 {
        0.0
    } else {
        (reconstruct_secs / reconstructed_tokens as f64) * baseline_tps
    };
    Ok(BenchReport {
        sentences: corpus.len(),
        serialized_tokens,
        reconstructed_tokens,
        serialize_secs,
        reconstruct_secs,
        serialize_tokens_per_sec: rate(serialized_tokens, serialize_secs),
        reconstruct_tokens_per_sec: rate(reconstructed_tokens, reconstruct_secs),
        baseline_tokens_per_sec: baseline_tps,
        reconstruct_cost_ratio: ratio,
        within_budget: ratio < RECONSTRUCTION_BUDGET,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_line(s)
    }

    #[test]
    fn shard_ranges_cover_everything() {
        assert!(shard_ranges(0, 4).is_empty());
        assert_eq!(shard_ranges(10, 4), vec![0..3, 3..6, 6..9, 9..10]);
        assert_eq!(shard_ranges(2, 4), vec![0..1, 1..2]);
        assert_eq!(shard_ranges(5, 1), vec![0..5]);
    }

    #[test]
    fn sharded_map_keeps_order() {
        let items: Vec<usize> = (0..103).collect();
        for shards in [1, 2, 4, 7, 200] {
            assert_eq!(sharded_map(&items, shards, |i, x| i * 1000 + x), items.iter().map(|x| x * 1001).collect::<Vec<_>>());
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("structural".parse::<Mode>(), Ok(Mode::Structural));
        assert!("xml".parse::<Mode>().is_err());
        assert_eq!(serde_json::to_string(&Mode::Lexical).unwrap(), "\"lexical\"");
    }

    #[test]
    fn decode_omitted_y_and_missing_constraint() {
        let cfg = PipelineConfig::default();
        let c = ConstraintPair::new(seq("a"), seq("A"), 1).unwrap();
        let lines = encode(&cfg, &[seq("x a y")], &[vec![c]]).unwrap();
        let meta = &lines[0].meta;

        let (t, audit) = decode_line(&cfg.vocab, &seq("<Y_0> <C_1> <Y_1> <sep> <Y_1> z"), meta);
        assert_eq!(t, seq("A z"));
        assert!(audit.valid);
        assert_eq!(audit.omitted_y, 1);

        let (t, audit) = decode_line(&cfg.vocab, &seq("<Y_0> <sep> <Y_0> z"), meta);
        assert_eq!(t, seq("z"));
        assert!(!audit.valid);
        assert_eq!(audit.reason, Some(InvalidReason::MissingConstraint { index: 1 }));
    }

    #[test]
    fn decode_strips_repeated_prefix() {
        let cfg = PipelineConfig::default();
        let c = ConstraintPair::new(seq("a"), seq("A"), 1).unwrap();
        let meta = &encode(&cfg, &[seq("a")], &[vec![c]]).unwrap()[0].meta;
        let (t, audit) = decode_line(&cfg.vocab, &seq("<C_1> A <sep> <Y_0> <C_1> <Y_1> <sep> <Y_0> q"), meta);
        assert_eq!(t, seq("q A"));
        assert!(audit.valid && !audit.fallback);
    }

    #[test]
    fn encode_falls_back_without_constraints() {
        let cfg = PipelineConfig::default();
        let c = ConstraintPair::new(seq("zz"), seq("Z"), 1).unwrap();
        let lines = encode(&cfg, &[seq("a b")], &[vec![c]]).unwrap();
        assert_eq!(lines[0].example.encoder_input.to_line(), "<sep> <X_0> <sep> <X_0> a b");
        assert_eq!(lines[0].meta.n, 0);
        assert!(lines[0].meta.note.is_some());
    }

    #[test]
    fn encode_rejects_reserved_tokens() {
        let cfg = PipelineConfig::default();
        let err = encode(&cfg, &[seq("a <sep>")], &[vec![]]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn roundtrip_reports_skips() {
        let cfg = PipelineConfig::default();
        let mut corpus = Corpus::new(vec![(seq("a b"), seq("A B")), (seq("c"), seq("C"))]);
        corpus.constraints[0] = vec![ConstraintPair::new(seq("b"), seq("B"), 1).unwrap()];
        corpus.constraints[1] = vec![ConstraintPair::new(seq("c"), seq("nope"), 1).unwrap()];
        let report = roundtrip(&cfg, &corpus).unwrap();
        assert!(report.passed(), "{:?}", report.breaches);
        assert_eq!((report.prepared, report.skipped), (1, 1));
    }

    #[test]
    fn bench_empty_corpus() {
        let report = bench(&PipelineConfig::default(), &Corpus::default(), DEFAULT_BASELINE_TPS).unwrap();
        assert_eq!(report.reconstructed_tokens, 0);
        assert!(report.within_budget);
    }
}
