//! Simulated constraints: alignment-consistent phrase pairs and random draws from them.

use log::debug;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{AlignmentSet, SpanPair};
use crate::lexical::ConstraintPair;
use crate::tokens::{Span, TokenSeq};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhrasePair {
    pub src_span: Span,
    pub tgt_span: Span,
    pub src_tokens: TokenSeq,
    pub tgt_tokens: TokenSeq,
}

impl PhrasePair {
    fn disjoint_from(&self, other: &PhrasePair) -> bool {
        !self.src_span.overlaps(&other.src_span) && !self.tgt_span.overlaps(&other.tgt_span)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("min_len must be at least 1")]
    ZeroMinLen,
    #[error("min_len {min} exceeds max_len {max}")]
    LenRange { min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub max_constraints: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            max_constraints: 3,
            min_len: 1,
            max_len: 3,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.min_len == 0 {
            return Err(SamplerError::ZeroMinLen);
        }
        if self.min_len > self.max_len {
            return Err(SamplerError::LenRange {
                min: self.min_len,
                max: self.max_len,
            });
        }
        Ok(())
    }

    /// Generator for sentence `line`: one independent stream per line, so the
    /// draws for a sentence do not depend on how the corpus is sharded.
    pub fn sentence_rng(&self, line: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(line as u64);
        rng
    }
}

/// Constraints drawn for one sentence pair, with the spans they came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSample {
    pub constraints: Vec<ConstraintPair>,
    pub spans: Vec<SpanPair>,
}

/// Every tight, alignment-consistent phrase pair with both sides at most
/// `max_len` tokens, ordered by source span then target span.
///
/// A pair is kept when at least one link lies inside it, no link leaves it on
/// either side, and all four boundary tokens are aligned. Unaligned tokens at
/// the edges are never attached.
pub fn extract_phrase_pairs(x: &[String], y: &[String], alignment: &AlignmentSet, max_len: usize) -> Vec<PhrasePair> {
    let mut by_src: Vec<Vec<usize>> = vec![Vec::new(); x.len()];
    let mut by_tgt: Vec<Vec<usize>> = vec![Vec::new(); y.len()];
    for (s, t) in alignment.iter() {
        by_src[s].push(t);
        by_tgt[t].push(s);
    }

    let mut pairs = Vec::new();
    for src_start in 0..x.len() {
        if by_src[src_start].is_empty() {
            continue;
        }
        let mut tgt_min = usize::MAX;
        let mut tgt_max = 0;
        for src_end in src_start..x.len().min(src_start + max_len) {
            for &t in &by_src[src_end] {
                tgt_min = tgt_min.min(t);
                tgt_max = tgt_max.max(t);
            }
            if by_src[src_end].is_empty() || tgt_max - tgt_min + 1 > max_len {
                continue;
            }
            let closed = (tgt_min..=tgt_max)
                .all(|t| by_tgt[t].iter().all(|&s| (src_start..=src_end).contains(&s)));
            if !closed {
                continue;
            }
            let src_span = Span::new(src_start, src_end + 1);
            let tgt_span = Span::new(tgt_min, tgt_max + 1);
            pairs.push(PhrasePair {
                src_span,
                tgt_span,
                src_tokens: TokenSeq::from(&x[src_span.start..src_span.end]),
                tgt_tokens: TokenSeq::from(&y[tgt_span.start..tgt_span.end]),
            });
        }
    }
    pairs
}

/// Draws `k ~ Uniform{0..max_constraints}` constraints whose source spans and
/// target spans are pairwise disjoint and whose lengths lie in
/// `[min_len, max_len]`.
///
/// Each draw is uniform over the candidates still compatible with the ones
/// already chosen, which is the distribution rejection sampling converges to.
/// If fewer than `k` compatible candidates exist, the maximum feasible number
/// is returned. Constraints come back ordered by source position with
/// indices `1..`.
pub fn sample_constraints<R: Rng>(pairs: &[PhrasePair], cfg: &SamplerConfig, rng: &mut R) -> ConstraintSample {
    let k = rng.gen_range(0..=cfg.max_constraints);
    let in_range = |s: &Span| (cfg.min_len..=cfg.max_len).contains(&s.len());
    let candidates: Vec<&PhrasePair> = pairs
        .iter()
        .filter(|p| in_range(&p.src_span) && in_range(&p.tgt_span))
        .collect();

    let mut chosen: Vec<&PhrasePair> = Vec::with_capacity(k);
    for _ in 0..k {
        let compatible: Vec<&PhrasePair> = candidates
            .iter()
            .copied()
            .filter(|c| chosen.iter().all(|p| c.disjoint_from(p)))
            .collect();
        if compatible.is_empty() {
            debug!("only {} of {k} constraints feasible", chosen.len());
            break;
        }
        chosen.push(compatible[rng.gen_range(0..compatible.len())]);
    }
    chosen.sort_by_key(|p| p.src_span.start);

    ConstraintSample {
        constraints: chosen
            .iter()
            .enumerate()
            .map(|(i, p)| ConstraintPair {
                src: p.src_tokens.clone(),
                tgt: p.tgt_tokens.clone(),
                index: i + 1,
            })
            .collect(),
        spans: chosen
            .iter()
            .map(|p| SpanPair {
                src: p.src_span,
                tgt: p.tgt_span,
            })
            .collect(),
    }
}
