//! Corpus BLEU over pre-tokenized text.

use std::collections::HashMap;

/// Sufficient statistics for BLEU; corpus scores sum these over sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn new(max_ngram: usize) -> Self {
        Self {
            matches: vec![0; max_ngram],
            totals: vec![0; max_ngram],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn from_sentence(hyp: &[String], reference: &[String], max_ngram: usize) -> Self {
        let mut stats = Self::new(max_ngram);
        stats.hyp_len = hyp.len();
        stats.ref_len = reference.len();
        for n in 1..=max_ngram {
            let ref_counts = ngram_counts(reference, n);
            let hyp_counts = ngram_counts(hyp, n);
            stats.totals[n - 1] = hyp.len().saturating_sub(n - 1);
            stats.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU in `[0, 100]`.
    ///
    /// A zero match count at order `n > 1` is replaced by `1 / (2^k · total)`
    /// where `k` counts the zero orders so far. Zero unigram matches give 0.
    /// Orders with no hypothesis n-grams at all are left out of the mean.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.first().copied().unwrap_or(0) == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut order = 0;
        let mut smooth = 1.0;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                break;
            }
            let precision = if m == 0 {
                smooth *= 2.0;
                1.0 / (smooth * t as f64)
            } else {
                m as f64 / t as f64
            };
            log_sum += precision.ln();
            order += 1;
        }
        let brevity = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        100.0 * brevity * (log_sum / order as f64).exp()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}
