//! Translation edit rate with per-token weights and greedy block shifts.
//!
//! Every token carries an integer weight. Deleting a hypothesis token costs
//! its weight, inserting a reference token costs its weight, substituting
//! costs the larger of the two, and moving a block costs its heaviest token.

use std::collections::{HashMap, HashSet};

/// Longest block considered for a single shift.
pub const MAX_SHIFT_SIZE: usize = 10;
/// Furthest a block may travel in one shift.
pub const MAX_SHIFT_DIST: usize = 50;

/// A token id paired with its weight.
pub type Weighted = (u32, u32);

/// Result of aligning one hypothesis against one reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TerStats {
    /// Weighted cost of all shifts and edits.
    pub edits: u64,
    /// Sum of reference token weights.
    pub ref_weight: u64,
    pub shifts: usize,
}

impl TerStats {
    pub fn rate(&self) -> f64 {
        if self.ref_weight == 0 {
            return 0.0;
        }
        self.edits as f64 / self.ref_weight as f64
    }
}

/// Weighted Levenshtein distance between two weighted sequences.
pub fn edit_distance(hyp: &[Weighted], reference: &[Weighted]) -> u64 {
    let mut prev: Vec<u64> = Vec::with_capacity(reference.len() + 1);
    prev.push(0);
    for &(_, w) in reference {
        let last = *prev.last().expect("non-empty");
        prev.push(last + w as u64);
    }
    let mut cur = vec![0u64; reference.len() + 1];
    for &(h, hw) in hyp {
        cur[0] = prev[0] + hw as u64;
        for (j, &(r, rw)) in reference.iter().enumerate() {
            let sub = if h == r { 0 } else { hw.max(rw) as u64 };
            cur[j + 1] = (prev[j] + sub)
                .min(prev[j + 1] + hw as u64)
                .min(cur[j] + rw as u64);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[reference.len()]
}

/// `seq` with the block `[start, start + len)` removed and reinserted so it
/// begins at `dest` of the shortened sequence.
pub fn apply_shift(seq: &[Weighted], start: usize, len: usize, dest: usize) -> Vec<Weighted> {
    let block = &seq[start..start + len];
    let mut rest: Vec<Weighted> = Vec::with_capacity(seq.len());
    rest.extend_from_slice(&seq[..start]);
    rest.extend_from_slice(&seq[start + len..]);
    let mut out = Vec::with_capacity(seq.len());
    out.extend_from_slice(&rest[..dest]);
    out.extend_from_slice(block);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// Greedy shift search followed by weighted edit distance.
///
/// Each round scans blocks by start position, then length, then
/// destination, keeping the first shift with the largest net gain (edit
/// distance saved minus shift cost). Only blocks that occur somewhere in the
/// reference are moved. The loop stops when no shift has a positive gain.
pub fn ter(hyp: &[Weighted], reference: &[Weighted]) -> TerStats {
    let ref_ids: Vec<u32> = reference.iter().map(|t| t.0).collect();
    let mut ref_blocks: HashSet<&[u32]> = HashSet::new();
    for len in 1..=MAX_SHIFT_SIZE.min(ref_ids.len()) {
        ref_blocks.extend(ref_ids.windows(len));
    }

    let mut current = hyp.to_vec();
    let mut dist = edit_distance(&current, reference);
    let mut shift_cost = 0u64;
    let mut shifts = 0;
    let mut block_ids: Vec<u32> = Vec::with_capacity(MAX_SHIFT_SIZE);

    while dist > 0 {
        let mut best: Option<(u64, Vec<Weighted>, u64, u64)> = None;
        for start in 0..current.len() {
            block_ids.clear();
            let mut cost = 0u64;
            for len in 1..=MAX_SHIFT_SIZE.min(current.len() - start) {
                let (id, w) = current[start + len - 1];
                block_ids.push(id);
                cost = cost.max(w as u64);
                if !ref_blocks.contains(block_ids.as_slice()) {
                    break;
                }
                if cost >= dist {
                    continue;
                }
                let rest_len = current.len() - len;
                let lo = start.saturating_sub(MAX_SHIFT_DIST);
                let hi = (start + MAX_SHIFT_DIST).min(rest_len);
                for dest in lo..=hi {
                    if dest == start {
                        continue;
                    }
                    let candidate = apply_shift(&current, start, len, dest);
                    let new_dist = edit_distance(&candidate, reference);
                    if new_dist + cost >= dist {
                        continue;
                    }
                    let gain = dist - new_dist - cost;
                    if best.as_ref().is_none_or(|b| gain > b.0) {
                        best = Some((gain, candidate, new_dist, cost));
                    }
                }
            }
        }
        match best {
            Some((_, candidate, new_dist, cost)) => {
                current = candidate;
                dist = new_dist;
                shift_cost += cost;
                shifts += 1;
            }
            None => break,
        }
    }

    TerStats {
        edits: shift_cost + dist,
        ref_weight: reference.iter().map(|t| t.1 as u64).sum(),
        shifts,
    }
}

/// Maps the tokens of one sentence pair to dense ids.
#[derive(Debug, Default)]
pub struct Interner<'a> {
    ids: HashMap<&'a str, u32>,
}

impl<'a> Interner<'a> {
    pub fn id(&mut self, token: &'a str) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry(token).or_insert(next)
    }

    pub fn weighted(&mut self, tokens: &'a [String], weights: &[u32]) -> Vec<Weighted> {
        tokens
            .iter()
            .zip(weights)
            .map(|(t, &w)| (self.id(t), w))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(ids: &[u32], weights: &[u32]) -> Vec<Weighted> {
        ids.iter().copied().zip(weights.iter().copied()).collect()
    }

    #[test]
    fn plain_edit_distance() {
        assert_eq!(edit_distance(&w(&[1, 2, 3], &[1, 1, 1]), &w(&[1, 3], &[1, 1])), 1);
        assert_eq!(edit_distance(&[], &w(&[1, 2], &[2, 1])), 3);
        assert_eq!(edit_distance(&w(&[1], &[2]), &w(&[2], &[1])), 2);
    }

    #[test]
    fn single_swap_takes_one_shift() {
        let got = ter(&w(&[0, 1, 2], &[1, 1, 1]), &w(&[0, 2, 1], &[1, 1, 1]));
        assert_eq!((got.edits, got.ref_weight, got.shifts), (1, 3, 1));
    }

    #[test]
    fn cheaper_block_is_moved() {
        // moving the light token past the heavy one costs 1
        let got = ter(&w(&[0, 1, 2], &[1, 2, 1]), &w(&[0, 2, 1], &[1, 1, 2]));
        assert_eq!((got.edits, got.ref_weight), (1, 4));
    }

    #[test]
    fn shift_bookkeeping() {
        let s = w(&[0, 1, 2, 3], &[1, 1, 1, 1]);
        let ids = |v: Vec<Weighted>| v.into_iter().map(|t| t.0).collect::<Vec<_>>();
        assert_eq!(ids(apply_shift(&s, 0, 2, 2)), vec![2, 3, 0, 1]);
        assert_eq!(ids(apply_shift(&s, 3, 1, 0)), vec![3, 0, 1, 2]);
    }
}
