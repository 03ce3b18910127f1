//! MinHash sketches: an optional accelerator for pool deduplication.
//!
//! The default dedup path compares exact n-gram sets (pools are small).
//! A sketch with `P` permutations estimates Jaccard similarity as the
//! fraction of matching signature slots, with standard error around
//! `sqrt(J(1-J)/P)` — about 0.035 at the 0.8 threshold with the default
//! 128 permutations, so borderline pairs can be misclassified.

use crate::filters::{FilterReport, NGramSet, PoolDoc, Removal, RemovalReason};
use crate::hash::hash64;

pub const DEFAULT_PERMUTATIONS: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSketch {
    signature: Vec<u64>,
    empty: bool,
}

/// Per-permutation hash: remix the gram fingerprint with a per-slot
/// constant derived from the slot index.
fn permuted(gram: u64, slot: u64) -> u64 {
    let salt = hash64(&slot.to_le_bytes());
    hash64(&(gram ^ salt).to_le_bytes())
}

impl MinHashSketch {
    /// Sketch the `n`-gram set of `text` with `permutations` slots.
    pub fn build(text: &str, n: usize, permutations: usize) -> Self {
        assert!(permutations >= 1);
        let grams = NGramSet::build(text, n).grams;
        if grams.is_empty() {
            return Self { signature: vec![u64::MAX; permutations], empty: true };
        }
        let mut signature = vec![u64::MAX; permutations];
        for &gram in &grams {
            for (slot, sig) in signature.iter_mut().enumerate() {
                let h = permuted(gram, slot as u64);
                if h < *sig {
                    *sig = h;
                }
            }
        }
        Self { signature, empty: false }
    }

    /// Estimated Jaccard similarity; 0 when either sketch is empty,
    /// matching the exact-set convention.
    pub fn estimate_jaccard(&self, other: &MinHashSketch) -> f64 {
        debug_assert_eq!(self.signature.len(), other.signature.len());
        if self.empty || other.empty {
            return 0.0;
        }
        let matching = self
            .signature
            .iter()
            .zip(&other.signature)
            .filter(|(a, b)| a == b)
            .count();
        matching as f64 / self.signature.len() as f64
    }
}

/// [`crate::filters::dedup_retrieved`] with sketched similarity in place
/// of exact n-gram Jaccard. Same short-chunk rule, same rank-order greedy
/// sweep; only the pairwise similarity is approximate.
pub fn dedup_retrieved_minhash(
    docs: Vec<PoolDoc>,
    threshold: f64,
    n: usize,
    permutations: usize,
) -> (Vec<PoolDoc>, FilterReport) {
    let mut report = FilterReport::default();
    let mut survivors: Vec<PoolDoc> = Vec::with_capacity(docs.len());
    for doc in docs {
        if doc.text.split_whitespace().count() < n {
            report.removed.push(Removal {
                pid: doc.doc.passage_id.clone(),
                reason: RemovalReason::ShortChunk,
            });
        } else {
            survivors.push(doc);
        }
    }
    use rayon::prelude::*;
    let sketches: Vec<MinHashSketch> = survivors
        .par_iter()
        .map(|d| MinHashSketch::build(&d.text, n, permutations))
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..survivors.len() {
        let duplicate = kept
            .iter()
            .any(|&i| sketches[i].estimate_jaccard(&sketches[j]) >= threshold);
        if duplicate {
            report.removed.push(Removal {
                pid: survivors[j].doc.passage_id.clone(),
                reason: RemovalReason::Duplicate,
            });
        } else {
            kept.push(j);
        }
    }
    let mut keep_flags = vec![false; survivors.len()];
    for &i in &kept {
        keep_flags[i] = true;
    }
    let out: Vec<PoolDoc> = survivors
        .into_iter()
        .zip(keep_flags)
        .filter_map(|(d, keep)| keep.then_some(d))
        .collect();
    report.kept_count = out.len();
    (out, report)
}
