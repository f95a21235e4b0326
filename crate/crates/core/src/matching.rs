//! Placing phrases at disjoint positions inside a sentence.
//!
//! Both assignment routines explore occurrences leftmost-first in phrase order,
//! so whenever plain leftmost-greedy placement succeeds they return exactly the
//! greedy answer. They only differ from greedy when it gets stuck on a
//! placement that a later phrase needed.

use crate::tokens::Span;

/// Upper bound on search nodes before giving up on a better assignment.
const SEARCH_BUDGET: usize = 200_000;

/// Every span of `hay` equal to `needle`, left to right. Empty needles never match.
pub fn occurrences(hay: &[String], needle: &[String]) -> Vec<Span> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    hay.windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| Span::new(i, i + needle.len()))
        .collect()
}

/// Places every needle on its own disjoint span, or reports the first needle
/// (by index) that could not be placed.
pub fn assign_all<T: AsRef<[String]>>(hay: &[String], needles: &[T]) -> Result<Vec<Span>, usize> {
    let result = assign_max(hay, needles);
    match result.iter().position(Option::is_none) {
        None => Ok(result.into_iter().flatten().collect()),
        Some(i) => Err(i),
    }
}

/// Places as many needles as possible on disjoint spans. Unplaced needles are `None`.
pub fn assign_max<T: AsRef<[String]>>(hay: &[String], needles: &[T]) -> Vec<Option<Span>> {
    let candidates: Vec<Vec<Span>> = needles
        .iter()
        .map(|n| occurrences(hay, n.as_ref()))
        .collect();

    let greedy = greedy(&candidates);
    let greedy_count = greedy.iter().flatten().count();
    let reachable = candidates.iter().filter(|c| !c.is_empty()).count();
    if greedy_count == reachable {
        return greedy;
    }

    let mut search = Search {
        candidates: &candidates,
        current: Vec::with_capacity(needles.len()),
        best: greedy,
        best_count: greedy_count,
        target: reachable,
        nodes: 0,
    };
    search.run(0, 0);
    search.best
}

fn greedy(candidates: &[Vec<Span>]) -> Vec<Option<Span>> {
    let mut taken: Vec<Span> = Vec::new();
    candidates
        .iter()
        .map(|occ| {
            let pick = occ.iter().find(|s| taken.iter().all(|t| !t.overlaps(s))).copied();
            if let Some(s) = pick {
                taken.push(s);
            }
            pick
        })
        .collect()
}

struct Search<'a> {
    candidates: &'a [Vec<Span>],
    current: Vec<Option<Span>>,
    best: Vec<Option<Span>>,
    best_count: usize,
    target: usize,
    nodes: usize,
}

impl Search<'_> {
    /// Returns true once the search can stop.
    fn run(&mut self, depth: usize, placed: usize) -> bool {
        self.nodes += 1;
        if self.nodes > SEARCH_BUDGET {
            return true;
        }
        if depth == self.candidates.len() {
            if placed > self.best_count {
                self.best_count = placed;
                self.best = self.current.clone();
            }
            return self.best_count == self.target;
        }
        let remaining = self.candidates[depth..].iter().filter(|c| !c.is_empty()).count();
        if placed + remaining <= self.best_count {
            return false;
        }
        for &span in &self.candidates[depth] {
            if self.current.iter().flatten().any(|t| t.overlaps(&span)) {
                continue;
            }
            self.current.push(Some(span));
            let done = self.run(depth + 1, placed + 1);
            self.current.pop();
            if done {
                return true;
            }
        }
        self.current.push(None);
        let done = self.run(depth + 1, placed);
        self.current.pop();
        done
    }
}
