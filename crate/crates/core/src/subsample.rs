//! Deterministic seeded Bernoulli subsampling and the exact binomial tail
//! bound that certifies when subsampling a retrieved pool stands in for
//! subsampling the whole corpus.
//!
//! Inclusion of a passage depends only on (passage id, seed, ratio):
//! hash the id together with the seed to a uniform 64-bit value `u` and
//! include iff `u / 2^64 < p`. The comparison runs in integer space
//! against `floor(p * 2^64)` to avoid rounding at the boundaries; since
//! that threshold is monotone in `p`, the included set at a smaller ratio
//! is always a subset of the set at a larger ratio under the same seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flat_index::ScoredDoc;
use crate::hash::hash64_parts;

/// A (ratio, seed) pair that fixes the inclusion of every passage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    /// Inclusion probability, in [0, 1].
    pub ratio: f64,
    pub seed: u64,
}

impl SubsampleSpec {
    pub fn new(ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Config {
                field: "ratio".into(),
                msg: format!("subsampling ratio must be in [0, 1], got {ratio}"),
            });
        }
        Ok(Self { ratio, seed })
    }
}

/// Deterministic Bernoulli(p) inclusion decision for one passage id.
pub fn include(passage_id: &str, spec: &SubsampleSpec) -> bool {
    if spec.ratio >= 1.0 {
        return true;
    }
    if spec.ratio <= 0.0 {
        return false;
    }
    let u = hash64_parts(&[passage_id.as_bytes(), &spec.seed.to_le_bytes()]);
    let threshold = (spec.ratio * 18_446_744_073_709_551_616.0) as u128; // p * 2^64
    u128::from(u) < threshold
}

/// Filter a scored list by [`include`], preserving order.
pub fn subsample_set(docs: &[ScoredDoc], spec: &SubsampleSpec) -> Vec<ScoredDoc> {
    docs.iter()
        .filter(|d| include(&d.passage_id, spec))
        .cloned()
        .collect()
}

/// Exact `P(Binomial(k, p) >= m)`.
///
/// Terms are evaluated in log space with an incremental log binomial
/// coefficient and combined by log-sum-exp; whichever of the lower or
/// upper summation has fewer/smaller terms is computed directly, so both
/// near-0 and near-1 results keep full precision.
pub fn tail_bound(k: u64, p: f64, m: u64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p must be in [0, 1]");
    if m == 0 {
        return 1.0;
    }
    if m > k {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0; // m >= 1 successes are impossible
    }
    if p >= 1.0 {
        return 1.0; // all k trials succeed and m <= k
    }
    let mean = k as f64 * p;
    if (m as f64) > mean {
        // small right tail: sum P(X = i) for i in [m, k]
        log_terms_sum(k, p, m, k)
    } else {
        // large tail: compute the small complement P(X <= m-1)
        1.0 - log_terms_sum(k, p, 0, m - 1)
    }
}

/// `sum_{i=lo}^{hi} C(k, i) p^i (1-p)^(k-i)` via log-space terms.
fn log_terms_sum(k: u64, p: f64, lo: u64, hi: u64) -> f64 {
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p(); // ln(1 - p), stable for small p
    // ln C(k, lo) built incrementally from ln C(k, 0) = 0.
    let mut ln_choose = 0f64;
    for j in 0..lo {
        ln_choose += ((k - j) as f64).ln() - ((j + 1) as f64).ln();
    }
    let mut log_terms = Vec::with_capacity((hi - lo + 1) as usize);
    let mut i = lo;
    loop {
        log_terms.push(ln_choose + i as f64 * ln_p + (k - i) as f64 * ln_q);
        if i == hi {
            break;
        }
        ln_choose += ((k - i) as f64).ln() - ((i + 1) as f64).ln();
        i += 1;
    }
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let sum: f64 = log_terms.iter().map(|&l| (l - max).exp()).sum();
    (max + sum.ln()).exp()
}
