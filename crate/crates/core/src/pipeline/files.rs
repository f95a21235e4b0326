//! The pipeline operations over files.
//!
//! `prepare` writes `train.xprime`, `train.yprime`, `train.meta.jsonl`;
//! `encode` writes `test.xprime`, `test.prefix`, `test.meta.jsonl`;
//! `decode` reads the `test.*` files back and writes translations plus
//! `audit.jsonl`; `sample` writes `cons.jsonl` and `spans.jsonl`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use super::{
    bridge, decode, encode, evaluation_records, prepare, sample, Corpus, Decoded, MetaRecord, Mode, PipelineConfig,
    PipelineError, Prepared, SerializedLine,
};
use crate::corpus_io::{self, CorpusError, SpanLine};
use crate::metrics::{self, EvalRecord, MetricReport};
use crate::tokens::TokenSeq;

pub const TRAIN_XPRIME: &str = "train.xprime";
pub const TRAIN_YPRIME: &str = "train.yprime";
pub const TRAIN_META: &str = "train.meta.jsonl";
pub const TEST_XPRIME: &str = "test.xprime";
pub const TEST_PREFIX: &str = "test.prefix";
pub const TEST_META: &str = "test.meta.jsonl";
pub const AUDIT: &str = "audit.jsonl";
pub const CONSTRAINTS: &str = "cons.jsonl";
pub const SPANS: &str = "spans.jsonl";

fn io_error(path: &Path, source: std::io::Error) -> PipelineError {
    CorpusError::Io {
        path: path.to_owned(),
        source,
    }
    .into()
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

/// Reads constraints for `n` lines. An empty file means no constraints at all.
fn read_constraint_file(path: Option<&Path>, n: usize) -> Result<Vec<Vec<crate::lexical::ConstraintPair>>, PipelineError> {
    let Some(path) = path else {
        return Ok(vec![Vec::new(); n]);
    };
    let sets = corpus_io::read_constraints(path)?;
    if sets.is_empty() {
        return Ok(vec![Vec::new(); n]);
    }
    if sets.len() != n {
        return Err(CorpusError::LineCount(n, sets.len()).into());
    }
    Ok(sets)
}

/// Loads a bitext with optional constraint and span files.
pub fn load_corpus(
    src: &Path,
    tgt: &Path,
    constraints: Option<&Path>,
    spans: Option<&Path>,
) -> Result<Corpus, PipelineError> {
    let pairs = corpus_io::read_bitext(src, tgt)?;
    let constraints = read_constraint_file(constraints, pairs.len())?;
    let spans: Option<Vec<SpanLine>> = spans.map(corpus_io::read_spans).transpose()?;
    let corpus = Corpus {
        pairs,
        constraints,
        spans,
    };
    corpus.check()?;
    Ok(corpus)
}

fn write_meta(path: &Path, lines: &[SerializedLine]) -> Result<(), PipelineError> {
    Ok(corpus_io::write_jsonl(path, lines.iter().map(|l| &l.meta))?)
}

pub fn read_meta(path: &Path) -> Result<Vec<MetaRecord>, PipelineError> {
    Ok(corpus_io::read_jsonl(path)?)
}

pub fn write_prepared(out_dir: &Path, prepared: &Prepared) -> Result<(), PipelineError> {
    ensure_dir(out_dir)?;
    corpus_io::write_token_lines(&out_dir.join(TRAIN_XPRIME), prepared.lines.iter().map(|l| &l.example.encoder_input))?;
    corpus_io::write_token_lines(&out_dir.join(TRAIN_YPRIME), prepared.lines.iter().map(|l| &l.example.target_output))?;
    write_meta(&out_dir.join(TRAIN_META), &prepared.lines)
}

pub fn run_prepare(cfg: &PipelineConfig, corpus: &Corpus, out_dir: &Path) -> Result<Prepared, PipelineError> {
    let prepared = prepare(cfg, corpus)?;
    write_prepared(out_dir, &prepared)?;
    info!("wrote {} training lines to {}", prepared.lines.len(), out_dir.display());
    Ok(prepared)
}

pub fn run_encode(
    cfg: &PipelineConfig,
    src: &Path,
    constraints: Option<&Path>,
    out_dir: &Path,
) -> Result<Vec<SerializedLine>, PipelineError> {
    let sources = corpus_io::read_token_lines(src)?;
    let constraints = match cfg.mode {
        Mode::Lexical => read_constraint_file(constraints, sources.len())?,
        Mode::Structural => vec![Vec::new(); sources.len()],
    };
    let lines = encode(cfg, &sources, &constraints)?;
    ensure_dir(out_dir)?;
    corpus_io::write_token_lines(&out_dir.join(TEST_XPRIME), lines.iter().map(|l| &l.example.encoder_input))?;
    corpus_io::write_token_lines(&out_dir.join(TEST_PREFIX), lines.iter().map(|l| &l.example.decoder_prefix))?;
    write_meta(&out_dir.join(TEST_META), &lines)?;
    Ok(lines)
}

/// Where decode gets its model outputs from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelOutputs {
    File(PathBuf),
    /// Run the translator over the `test.xprime` / `test.prefix` files of the work directory.
    Translator(String),
}

/// Decodes the outputs for an encoded work directory, writing translations
/// to `out` and the audit next to them.
pub fn run_decode(
    cfg: &PipelineConfig,
    work_dir: &Path,
    outputs: &ModelOutputs,
    out: &Path,
    audit: &Path,
) -> Result<Decoded, PipelineError> {
    let meta = read_meta(&work_dir.join(TEST_META))?;
    let outputs = match outputs {
        ModelOutputs::File(path) => corpus_io::read_token_lines(path)?,
        ModelOutputs::Translator(cmd) => {
            let xprime = corpus_io::read_token_lines(&work_dir.join(TEST_XPRIME))?;
            let prefix = corpus_io::read_token_lines(&work_dir.join(TEST_PREFIX))?;
            if xprime.len() != meta.len() || prefix.len() != meta.len() {
                return Err(CorpusError::LineCount(xprime.len(), meta.len()).into());
            }
            let lines: Vec<SerializedLine> = xprime
                .into_iter()
                .zip(prefix)
                .zip(&meta)
                .map(|((encoder_input, decoder_prefix), m)| SerializedLine {
                    example: crate::template::SerializedExample {
                        encoder_input,
                        decoder_prefix,
                        target_output: TokenSeq::new(),
                    },
                    meta: m.clone(),
                })
                .collect();
            bridge::translate_sharded(cmd, &lines, cfg.shards)?
        }
    };
    let decoded = decode(cfg, &outputs, &meta)?;
    corpus_io::write_token_lines(out, &decoded.translations)?;
    corpus_io::write_jsonl(audit, &decoded.audit)?;
    Ok(decoded)
}

pub fn run_sample(
    cfg: &PipelineConfig,
    src: &Path,
    tgt: &Path,
    alignments: &Path,
    out_dir: &Path,
) -> Result<usize, PipelineError> {
    let pairs = corpus_io::read_bitext(src, tgt)?;
    let links = corpus_io::read_alignments(alignments, &pairs)?;
    let samples = sample(cfg, &pairs, &links)?;
    ensure_dir(out_dir)?;
    let constraints: Vec<_> = samples.iter().map(|s| s.constraints.clone()).collect();
    let spans: Vec<SpanLine> = samples.iter().map(|s| SpanLine { spans: s.spans.clone() }).collect();
    corpus_io::write_constraints(&out_dir.join(CONSTRAINTS), &constraints)?;
    corpus_io::write_spans(&out_dir.join(SPANS), &spans)?;
    Ok(constraints.iter().map(Vec::len).sum())
}

pub fn load_records(hyp: &Path, reference: &Path, constraints: Option<&Path>) -> Result<Vec<EvalRecord>, PipelineError> {
    let hyps = corpus_io::read_token_lines(hyp)?;
    let refs = corpus_io::read_token_lines(reference)?;
    let constraints = constraints.map(corpus_io::read_constraints).transpose()?;
    evaluation_records(hyps, refs, constraints)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.2}"))
}

fn flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "1",
        Some(false) => "0",
        None => "-",
    }
}

/// One row per record: line, BLEU, exact match, window overlap, 1-TERm and
/// the two structure flags. `-` marks a score that does not apply.
pub fn write_per_sentence(path: &Path, records: &[EvalRecord], cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let structural = (cfg.mode == Mode::Structural).then_some(&cfg.vocab);
    let rows = super::sharded_map(records, cfg.shards, |_, r| metrics::sentence_scores(r, structural));
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>, line: String| writeln!(w, "{line}").map_err(|e| io_error(path, e));
    write(&mut w, "line\tbleu\texact_match\twindow_overlap\tone_minus_term\tstructure_correct\tstructure_match".into())?;
    for (i, s) in rows.iter().enumerate() {
        write(
            &mut w,
            format!(
                "{}\t{:.2}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                s.bleu,
                cell(s.exact_match),
                cell(s.window_overlap),
                cell(s.one_minus_term),
                flag(s.structure_correct),
                flag(s.structure_match)
            ),
        )?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn run_evaluate(
    cfg: &PipelineConfig,
    records: &[EvalRecord],
    per_sentence: Option<&Path>,
) -> Result<MetricReport, PipelineError> {
    let structural = (cfg.mode == Mode::Structural).then_some(&cfg.vocab);
    let report = metrics::evaluate(records, structural);
    if let Some(path) = per_sentence {
        write_per_sentence(path, records, cfg)?;
    }
    Ok(report)
}
