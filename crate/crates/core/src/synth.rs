//! Seeded synthetic corpora for closed-loop tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus_io::AlignmentSet;
use crate::tokens::TokenSeq;

pub const VOCAB_SIZE: usize = 50;
pub const MAX_LEN: usize = 30;
/// Deepest nesting of open/close tag pairs in tagged corpora.
pub const MAX_DEPTH: usize = 3;
const MAX_TAGS: usize = 40;
const VOID_TAGS: [&str; 3] = ["&amp;", "&lt;", "&gt;"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPair {
    pub source: TokenSeq,
    pub target: TokenSeq,
    pub alignment: AlignmentSet,
}

fn src_word(rng: &mut ChaCha8Rng) -> String {
    format!("s{}", rng.gen_range(0..VOCAB_SIZE))
}

fn translate(word: &str) -> String {
    format!("t{}", &word[1..])
}

/// Random sentence pairs over a 50-word vocabulary with 1–30 source tokens.
///
/// Each source word yields zero, one or two target words; extra unaligned
/// target words are sprinkled in and neighbouring target chunks are swapped,
/// so the alignment has gaps, fan-out and crossings.
pub fn lexical_corpus(sentences: usize, seed: u64) -> Vec<SyntheticPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences).map(|_| lexical_pair(&mut rng)).collect()
}

fn lexical_pair(rng: &mut ChaCha8Rng) -> SyntheticPair {
    let len = rng.gen_range(1..=MAX_LEN);
    let source: Vec<String> = (0..len).map(|_| src_word(rng)).collect();

    let mut chunks: Vec<Vec<(String, Option<usize>)>> = Vec::new();
    for (i, word) in source.iter().enumerate() {
        let roll: f64 = rng.gen();
        let mut chunk = Vec::new();
        if roll < 0.85 {
            chunk.push((translate(word), Some(i)));
        } else if roll < 0.92 {
            chunk.push((translate(word), Some(i)));
            chunk.push((format!("t{}", rng.gen_range(0..VOCAB_SIZE)), Some(i)));
        }
        if rng.gen_bool(0.05) {
            chunk.push((format!("t{}", rng.gen_range(0..VOCAB_SIZE)), None));
        }
        chunks.push(chunk);
    }
    for i in 1..chunks.len() {
        if rng.gen_bool(0.15) {
            chunks.swap(i - 1, i);
        }
    }
    let mut target: Vec<(String, Option<usize>)> = chunks.into_iter().flatten().collect();
    if target.is_empty() {
        target.push((translate(&source[0]), Some(0)));
    }

    let alignment = target
        .iter()
        .enumerate()
        .filter_map(|(j, (_, i))| i.map(|i| (i, j)))
        .collect();
    SyntheticPair {
        source: TokenSeq::from(source.as_slice()),
        target: target.into_iter().map(|(w, _)| w).collect(),
        alignment,
    }
}

/// Random tagged sentence pairs: `<ph>` blocks nested at most three deep,
/// void entity tags and word runs. The target translates every word and
/// shuffles sibling items, so its tags form the same multiset in a
/// possibly different order.
pub fn tagged_corpus(sentences: usize, seed: u64) -> Vec<(TokenSeq, TokenSeq)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences)
        .map(|_| loop {
            let mut tags = 0;
            let items = tagged_items(&mut rng, 0, &mut tags);
            let source: TokenSeq = flatten(&items, false).into_iter().collect();
            if !source.is_empty() {
                let target: TokenSeq = flatten(&items, true).into_iter().collect();
                break (source, target);
            }
        })
        .collect()
}

enum Item {
    Words(Vec<String>),
    Void(&'static str),
    Block(Vec<Item>),
    /// Target-side sibling order for the enclosing sequence.
    Order(Vec<usize>),
}

fn tagged_items(rng: &mut ChaCha8Rng, depth: usize, tags: &mut usize) -> Vec<Item> {
    let count = rng.gen_range(1..=3);
    let mut items = Vec::with_capacity(count + 1);
    for _ in 0..count {
        let roll: f64 = rng.gen();
        if roll < 0.15 && *tags < MAX_TAGS {
            *tags += 1;
            items.push(Item::Void(VOID_TAGS[rng.gen_range(0..VOID_TAGS.len())]));
        } else if roll < 0.5 && depth < MAX_DEPTH && *tags + 2 <= MAX_TAGS {
            *tags += 2;
            items.push(Item::Block(tagged_items(rng, depth + 1, tags)));
        } else {
            let n = rng.gen_range(0..=4);
            items.push(Item::Words((0..n).map(|_| src_word(rng)).collect()));
        }
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    if rng.gen_bool(0.3) {
        order.shuffle(rng);
    }
    items.push(Item::Order(order));
    items
}

fn flatten(items: &[Item], target: bool) -> Vec<String> {
    let (order, body) = match items.split_last() {
        Some((Item::Order(order), body)) => (order.clone(), body),
        _ => ((0..items.len()).collect(), items),
    };
    let order: Vec<usize> = if target { order } else { (0..body.len()).collect() };
    let mut out = Vec::new();
    for i in order {
        match &body[i] {
            Item::Words(words) if target => out.extend(words.iter().map(|w| translate(w))),
            Item::Words(words) => out.extend(words.iter().cloned()),
            Item::Void(tag) => out.push((*tag).to_owned()),
            Item::Block(inner) => {
                out.push("<ph>".to_owned());
                out.extend(flatten(inner, target));
                out.push("</ph>".to_owned());
            }
            Item::Order(_) => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structural::{check_well_formed, tag_sequence};
    use crate::vocab::ReservedVocab;

    #[test]
    fn lexical_pairs_are_well_formed() {
        for pair in lexical_corpus(200, 7) {
            assert!((1..=MAX_LEN).contains(&pair.source.len()));
            assert!(!pair.target.is_empty());
            for (i, j) in pair.alignment.iter() {
                assert!(i < pair.source.len() && j < pair.target.len());
            }
        }
        assert_eq!(lexical_corpus(20, 1), lexical_corpus(20, 1));
    }

    #[test]
    fn tagged_pairs_nest_and_share_tags() {
        let v = ReservedVocab::default();
        let mut reordered = 0;
        for (src, tgt) in tagged_corpus(300, 3) {
            assert!(!src.is_empty());
            assert!(check_well_formed(&v, &src).is_ok());
            assert!(check_well_formed(&v, &tgt).is_ok());
            let (mut a, mut b) = (tag_sequence(&v, &src), tag_sequence(&v, &tgt));
            if a != b {
                reordered += 1;
            }
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
        assert!(reordered > 0);
    }
}
