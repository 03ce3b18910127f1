//! Post-hoc filtering of retrieved pools: n-gram Jaccard deduplication
//! with short-chunk removal, decontamination against evaluation data, and
//! quality filters.
//!
//! All lexical comparisons lowercase their input and tokenize on Unicode
//! whitespace; n-grams are `hash64` fingerprints of the space-joined token
//! window. Every filter except deduplication is element-level (decided per
//! document), so it commutes with subsampling and with the other
//! element-level filters.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flat_index::{rank_cmp, ScoredDoc};
use crate::hash::hash64;

/// Default n-gram order for dedup and Jaccard decontamination.
pub const DEFAULT_NGRAM: usize = 13;
/// Default Jaccard similarity at or above which a pair is a duplicate.
pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.8;
/// Contiguous-overlap length for standard perplexity decontamination.
pub const STANDARD_CONTIGUOUS_N: usize = 32;
/// Contiguous-overlap length for aggressive decontamination.
pub const AGGRESSIVE_CONTIGUOUS_N: usize = 8;

/// A retrieved document together with its text, the unit filters operate on.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolDoc {
    pub doc: ScoredDoc,
    pub text: String,
}

/// Why a document left the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Duplicate,
    ShortChunk,
    Contaminated,
    Quality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub pid: String,
    pub reason: RemovalReason,
}

/// Which documents a filter pass removed, and how many survived.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub removed: Vec<Removal>,
    pub kept_count: usize,
}

impl FilterReport {
    /// Fold a later stage's report into this one.
    pub fn absorb(&mut self, later: FilterReport) {
        self.removed.extend(later.removed);
        self.kept_count = later.kept_count;
    }
}

fn lower_tokens(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(str::to_owned).collect()
}

/// Hashed n-gram fingerprints of a text's lowercase token windows.
/// Empty when the text has fewer than `n` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramSet {
    pub n: usize,
    pub grams: HashSet<u64>,
}

impl NGramSet {
    pub fn build(text: &str, n: usize) -> Self {
        assert!(n >= 1, "n-gram order must be >= 1");
        let tokens = lower_tokens(text);
        Self::from_tokens(&tokens, n)
    }

    pub fn from_tokens(tokens: &[String], n: usize) -> Self {
        let mut grams = HashSet::new();
        if tokens.len() >= n {
            for window in tokens.windows(n) {
                grams.insert(hash64(window.join(" ").as_bytes()));
            }
        }
        Self { n, grams }
    }

    /// Jaccard similarity of the gram sets; 0 when both are empty.
    pub fn jaccard(&self, other: &NGramSet) -> f64 {
        debug_assert_eq!(self.n, other.n);
        if self.grams.is_empty() && other.grams.is_empty() {
            return 0.0;
        }
        let inter = self.grams.intersection(&other.grams).count();
        let union = self.grams.len() + other.grams.len() - inter;
        inter as f64 / union as f64
    }
}

/// n-gram Jaccard similarity of two texts.
pub fn jaccard_ngram(a: &str, b: &str, n: usize) -> f64 {
    NGramSet::build(a, n).jaccard(&NGramSet::build(b, n))
}

/// Deduplicate a retrieved pool.
///
/// First removes every document with fewer than `n` words (short chunks
/// cannot carry an n-gram and are mostly noise), then sweeps the rest in
/// rank order: a document whose n-gram Jaccard similarity with any
/// already-kept document is at least `threshold` is removed, so the
/// higher-ranked copy of each duplicate pair survives. Order is preserved.
pub fn dedup_retrieved(
    docs: Vec<PoolDoc>,
    threshold: f64,
    n: usize,
) -> (Vec<PoolDoc>, FilterReport) {
    debug_assert!(docs.windows(2).all(|w| rank_cmp(&w[0].doc, &w[1].doc).is_le()));
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

    let grams: Vec<NGramSet> = survivors
        .par_iter()
        .map(|d| NGramSet::build(&d.text, n))
        .collect();

    let mut kept: Vec<usize> = Vec::with_capacity(survivors.len());
    for j in 0..survivors.len() {
        let duplicate = kept
            .par_iter()
            .any(|&i| grams[i].jaccard(&grams[j]) >= threshold);
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

/// Length in tokens of the longest contiguous token run shared by `doc`
/// and `reference` (longest common substring over token sequences).
///
/// Found by binary search on the run length: a shared run of length `L`
/// exists iff the two texts share an `L`-gram fingerprint.
pub fn longest_contiguous_overlap(doc: &str, reference: &str) -> usize {
    let a = lower_tokens(doc);
    let b = lower_tokens(reference);
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let has_common_run = |len: usize| -> bool {
        let grams_a: HashSet<u64> = a
            .windows(len)
            .map(|w| hash64(w.join(" ").as_bytes()))
            .collect();
        b.windows(len).any(|w| grams_a.contains(&hash64(w.join(" ").as_bytes())))
    };
    let (mut lo, mut hi) = (0usize, a.len().min(b.len()));
    // invariant: a common run of length lo exists; none of length hi+1
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if has_common_run(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Decontamination severity. `none` keeps everything; `standard` uses
/// Jaccard similarity (plus a 32-token contiguous-overlap check for
/// perplexity targets); `aggressive` removes on any 8-token contiguous
/// overlap regardless of task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeconVariant {
    None,
    Standard,
    Aggressive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecontaminationMode {
    pub variant: DeconVariant,
    pub jaccard_threshold: f64,
    pub jaccard_n: usize,
    pub contiguous_n: usize,
}

impl DecontaminationMode {
    pub fn none() -> Self {
        Self {
            variant: DeconVariant::None,
            jaccard_threshold: DEFAULT_JACCARD_THRESHOLD,
            jaccard_n: DEFAULT_NGRAM,
            contiguous_n: STANDARD_CONTIGUOUS_N,
        }
    }

    pub fn standard() -> Self {
        Self { variant: DeconVariant::Standard, ..Self::none() }
    }

    pub fn aggressive() -> Self {
        Self {
            variant: DeconVariant::Aggressive,
            contiguous_n: AGGRESSIVE_CONTIGUOUS_N,
            ..Self::none()
        }
    }
}

/// What kind of evaluation a query belongs to; decides which reference
/// text decontamination compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Downstream,
    Perplexity,
}

/// The evaluation-side texts a retrieved document is checked against.
#[derive(Debug, Clone, Copy)]
pub struct EvalUnit<'a> {
    pub question: &'a str,
    pub answers: &'a [String],
    /// Perplexity target text (the scored continuation).
    pub target: Option<&'a str>,
}

/// Element-level contamination predicate.
///
/// Standard mode checks Jaccard similarity against the question
/// (downstream) or the target (perplexity, which additionally removes on
/// a 32-token contiguous overlap). Aggressive mode removes on any
/// `contiguous_n`-token overlap with the answers (downstream; falls back
/// to the question when no answers exist) or the target (perplexity).
pub fn is_contaminated(
    doc_text: &str,
    eval: &EvalUnit,
    mode: &DecontaminationMode,
    task: TaskKind,
) -> bool {
    match (mode.variant, task) {
        (DeconVariant::None, _) => false,
        (DeconVariant::Standard, TaskKind::Downstream) => {
            jaccard_ngram(doc_text, eval.question, mode.jaccard_n) >= mode.jaccard_threshold
        }
        (DeconVariant::Standard, TaskKind::Perplexity) => {
            let target = eval.target.unwrap_or("");
            jaccard_ngram(doc_text, target, mode.jaccard_n) >= mode.jaccard_threshold
                || longest_contiguous_overlap(doc_text, target) >= mode.contiguous_n
        }
        (DeconVariant::Aggressive, TaskKind::Perplexity) => {
            longest_contiguous_overlap(doc_text, eval.target.unwrap_or("")) >= mode.contiguous_n
        }
        (DeconVariant::Aggressive, TaskKind::Downstream) => {
            if eval.answers.is_empty() {
                longest_contiguous_overlap(doc_text, eval.question) >= mode.contiguous_n
            } else {
                eval.answers
                    .iter()
                    .any(|ans| longest_contiguous_overlap(doc_text, ans) >= mode.contiguous_n)
            }
        }
    }
}

/// Remove contaminated documents from a pool, preserving order.
pub fn decontaminate(
    docs: Vec<PoolDoc>,
    eval: &EvalUnit,
    mode: &DecontaminationMode,
    task: TaskKind,
) -> (Vec<PoolDoc>, FilterReport) {
    if mode.variant == DeconVariant::None {
        let report = FilterReport { removed: Vec::new(), kept_count: docs.len() };
        return (docs, report);
    }
    let contaminated: Vec<bool> = docs
        .par_iter()
        .map(|d| is_contaminated(&d.text, eval, mode, task))
        .collect();
    split_by_mask(docs, &contaminated, RemovalReason::Contaminated)
}

/// In-process language check; returns true for documents to keep.
pub type LanguagePredicate = Arc<dyn Fn(&str) -> bool + Send + Sync>;

/// Quality-filter configuration. Every check defaults to disabled, so the
/// default config is the identity filter.
#[derive(Clone, Default, Serialize, Deserialize)]
pub struct QualityConfig {
    /// Remove documents with fewer whitespace tokens than this.
    pub min_whitespace_tokens: usize,
    /// Remove documents with no alphanumeric character.
    pub require_alphanumeric: bool,
    /// Remove documents containing a run of consecutive (ASCII)
    /// punctuation characters longer than this.
    pub max_punct_span: Option<usize>,
    /// Pluggable language check; `None` accepts everything.
    #[serde(skip)]
    pub language_predicate: Option<LanguagePredicate>,
}

impl fmt::Debug for QualityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QualityConfig")
            .field("min_whitespace_tokens", &self.min_whitespace_tokens)
            .field("require_alphanumeric", &self.require_alphanumeric)
            .field("max_punct_span", &self.max_punct_span)
            .field("language_predicate", &self.language_predicate.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

fn longest_punct_run(text: &str) -> usize {
    let mut longest = 0usize;
    let mut current = 0usize;
    for c in text.chars() {
        if c.is_ascii_punctuation() {
            current += 1;
            longest = longest.max(current);
        } else {
            current = 0;
        }
    }
    longest
}

/// Element-level quality predicate.
pub fn passes_quality(text: &str, config: &QualityConfig) -> bool {
    if text.split_whitespace().count() < config.min_whitespace_tokens {
        return false;
    }
    if config.require_alphanumeric && !text.chars().any(char::is_alphanumeric) {
        return false;
    }
    if let Some(max_span) = config.max_punct_span {
        if longest_punct_run(text) > max_span {
            return false;
        }
    }
    if let Some(predicate) = &config.language_predicate {
        if !predicate(text) {
            return false;
        }
    }
    true
}

/// Remove documents failing any enabled quality check, preserving order.
pub fn quality_filter(docs: Vec<PoolDoc>, config: &QualityConfig) -> (Vec<PoolDoc>, FilterReport) {
    let failing: Vec<bool> = docs.iter().map(|d| !passes_quality(&d.text, config)).collect();
    split_by_mask(docs, &failing, RemovalReason::Quality)
}

fn split_by_mask(
    docs: Vec<PoolDoc>,
    remove: &[bool],
    reason: RemovalReason,
) -> (Vec<PoolDoc>, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::with_capacity(docs.len());
    for (doc, &rm) in docs.into_iter().zip(remove) {
        if rm {
            report.removed.push(Removal { pid: doc.doc.passage_id.clone(), reason });
        } else {
            kept.push(doc);
        }
    }
    report.kept_count = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(range: std::ops::Range<usize>) -> String {
        range.map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    fn pool(items: &[(&str, f64, &str)]) -> Vec<PoolDoc> {
        let mut docs: Vec<PoolDoc> = items
            .iter()
            .map(|(id, score, text)| PoolDoc {
                doc: ScoredDoc {
                    passage_id: (*id).to_string(),
                    score: *score,
                    domain: "web".into(),
                    shard: 0,
                },
                text: (*text).to_string(),
            })
            .collect();
        docs.sort_by(|a, b| rank_cmp(&a.doc, &b.doc));
        docs
    }

    #[test]
    fn jaccard_identity_and_disjoint() {
        let t = words(0..20);
        assert_eq!(jaccard_ngram(&t, &t, 13), 1.0);
        assert_eq!(jaccard_ngram(&words(0..20), &words(100..120), 13), 0.0);
    }

    #[test]
    fn jaccard_forced_half() {
        // 14 tokens -> 2 thirteen-grams {g1, g2}; 13 tokens -> {g1}
        let a = words(0..14);
        let b = words(0..13);
        assert_eq!(jaccard_ngram(&a, &b, 13), 0.5);
    }

    #[test]
    fn jaccard_empty_gram_sets() {
        assert_eq!(jaccard_ngram("a b", "c d", 13), 0.0);
        assert_eq!(jaccard_ngram("", "", 3), 0.0);
    }

    #[test]
    fn dedup_keeps_higher_scored_copy() {
        let text = words(0..50);
        let (kept, report) =
            dedup_retrieved(pool(&[("hi", 0.9, &text), ("lo", 0.8, &text)]), 0.8, 13);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].doc.passage_id, "hi");
        assert_eq!(
            report.removed,
            vec![Removal { pid: "lo".into(), reason: RemovalReason::Duplicate }]
        );
    }

    #[test]
    fn dedup_removes_short_chunks() {
        let twelve = words(0..12);
        let long_a = words(100..150);
        let long_b = words(200..250);
        let (kept, report) = dedup_retrieved(
            pool(&[("a", 0.9, &long_a), ("short", 0.85, &twelve), ("b", 0.8, &long_b)]),
            0.8,
            13,
        );
        let ids: Vec<&str> = kept.iter().map(|d| d.doc.passage_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(
            report.removed,
            vec![Removal { pid: "short".into(), reason: RemovalReason::ShortChunk }]
        );
        // a 13-word doc stays
        let thirteen = words(0..13);
        let (kept, _) = dedup_retrieved(pool(&[("x", 0.5, &thirteen)]), 0.8, 13);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn dedup_output_has_no_similar_pair_and_preserves_rank() {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        // 60 base docs with disjoint vocab plus near-duplicates of some
        let mut items: Vec<(String, f64, String)> = Vec::new();
        for i in 0..60 {
            let base: Vec<String> = (0..20).map(|j| format!("v{i}_{j}")).collect();
            items.push((format!("base{i:02}"), rng.gen_range(0.0..1.0), base.join(" ")));
            if i % 3 == 0 {
                // change one token: 19-of-20 shared 13-grams is > 0.8 Jaccard
                let mut near = base.clone();
                near[19] = "changed".into();
                items.push((format!("near{i:02}"), rng.gen_range(0.0..1.0), near.join(" ")));
            }
        }
        items.shuffle(&mut rng);
        let refs: Vec<(&str, f64, &str)> =
            items.iter().map(|(a, b, c)| (a.as_str(), *b, c.as_str())).collect();
        let input = pool(&refs);
        let (kept, _) = dedup_retrieved(input.clone(), 0.8, 13);

        // soundness: no kept pair is >= threshold similar
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                assert!(jaccard_ngram(&kept[i].text, &kept[j].text, 13) < 0.8);
            }
        }
        // rank order preserved
        let kept_pos: Vec<usize> = kept
            .iter()
            .map(|d| input.iter().position(|x| x.doc.passage_id == d.doc.passage_id).unwrap())
            .collect();
        assert!(kept_pos.windows(2).all(|w| w[0] < w[1]));

        // oracle: explicit O(n^2) greedy sweep in rank order with direct
        // (unhashed) string n-gram sets
        let gram_set = |text: &str| -> HashSet<String> {
            let toks: Vec<String> = text.to_lowercase().split_whitespace().map(String::from).collect();
            if toks.len() < 13 { return HashSet::new(); }
            toks.windows(13).map(|w| w.join(" ")).collect()
        };
        let mut oracle_kept: Vec<&PoolDoc> = Vec::new();
        for d in &input {
            if d.text.split_whitespace().count() < 13 {
                continue;
            }
            let g = gram_set(&d.text);
            let dup = oracle_kept.iter().any(|k| {
                let gk = gram_set(&k.text);
                if g.is_empty() && gk.is_empty() { return false; }
                let inter = g.intersection(&gk).count();
                let union = g.len() + gk.len() - inter;
                inter as f64 / union as f64 >= 0.8
            });
            if !dup {
                oracle_kept.push(d);
            }
        }
        let oracle_ids: Vec<&str> = oracle_kept.iter().map(|d| d.doc.passage_id.as_str()).collect();
        let got_ids: Vec<&str> = kept.iter().map(|d| d.doc.passage_id.as_str()).collect();
        assert_eq!(got_ids, oracle_ids);
    }

    #[test]
    fn overlap_by_inspection() {
        assert_eq!(longest_contiguous_overlap("a b c d e", "c d e f"), 3);
        let t = words(0..40);
        assert_eq!(longest_contiguous_overlap(&t, &t), 40);
        assert_eq!(longest_contiguous_overlap("a b c", "x y z"), 0);
        assert_eq!(longest_contiguous_overlap("", "a b"), 0);
    }

    // Classic DP longest-common-substring over token sequences, the
    // independent oracle for the binary-search implementation.
    fn lcs_tokens_dp(a: &str, b: &str) -> usize {
        let ta: Vec<&str> = a.split_whitespace().collect();
        let tb: Vec<&str> = b.split_whitespace().collect();
        let mut best = 0usize;
        let mut prev = vec![0usize; tb.len() + 1];
        for i in 1..=ta.len() {
            let mut cur = vec![0usize; tb.len() + 1];
            for j in 1..=tb.len() {
                if ta[i - 1].eq_ignore_ascii_case(tb[j - 1]) {
                    cur[j] = prev[j - 1] + 1;
                    best = best.max(cur[j]);
                }
            }
            prev = cur;
        }
        best
    }

    #[test]
    fn overlap_matches_dp_oracle_with_planted_run() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        // two 500-token texts over disjoint vocabularies with a planted
        // 37-token shared run
        let run: Vec<String> = (0..37).map(|i| format!("run{i}")).collect();
        let mut a: Vec<String> = (0..463).map(|i| format!("a{i}")).collect();
        let mut b: Vec<String> = (0..463).map(|i| format!("b{i}")).collect();
        let pos_a = rng.gen_range(0..=a.len());
        let pos_b = rng.gen_range(0..=b.len());
        a.splice(pos_a..pos_a, run.iter().cloned());
        b.splice(pos_b..pos_b, run.iter().cloned());
        let (a, b) = (a.join(" "), b.join(" "));
        assert_eq!(longest_contiguous_overlap(&a, &b), 37);
        assert_eq!(lcs_tokens_dp(&a, &b), 37);

        // random repetitive texts against the oracle
        for _ in 0..20 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> String {
                (0..60).map(|_| format!("t{}", rng.gen_range(0..8))).collect::<Vec<_>>().join(" ")
            };
            let (x, y) = (mk(&mut rng), mk(&mut rng));
            assert_eq!(longest_contiguous_overlap(&x, &y), lcs_tokens_dp(&x, &y));
        }
    }

    #[test]
    fn decon_none_is_identity() {
        let docs = pool(&[("a", 0.9, "any text at all")]);
        let eval =
            EvalUnit { question: "any text at all", answers: &[], target: None };
        let (kept, report) =
            decontaminate(docs.clone(), &eval, &DecontaminationMode::none(), TaskKind::Downstream);
        assert_eq!(kept, docs);
        assert!(report.removed.is_empty());
    }

    #[test]
    fn standard_perplexity_removes_32_token_span() {
        let target = words(0..60);
        let span32 = words(10..42);
        let doc_text = format!("{} {}", words(1000..1100), span32);
        let docs = pool(&[("hit", 0.9, &doc_text), ("miss", 0.8, &words(2000..2100))]);
        let eval = EvalUnit { question: "", answers: &[], target: Some(&target) };
        let (kept, report) =
            decontaminate(docs, &eval, &DecontaminationMode::standard(), TaskKind::Perplexity);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].doc.passage_id, "miss");
        assert_eq!(report.removed[0].reason, RemovalReason::Contaminated);
    }

    #[test]
    fn ten_token_span_kept_standard_removed_aggressive() {
        let target = words(0..60);
        let doc_text = format!("{} {}", words(1000..1090), words(20..30)); // 10-token span
        let docs = pool(&[("d", 0.9, &doc_text)]);
        let eval = EvalUnit { question: "", answers: &[], target: Some(&target) };
        let (kept, _) = decontaminate(
            docs.clone(),
            &eval,
            &DecontaminationMode::standard(),
            TaskKind::Perplexity,
        );
        assert_eq!(kept.len(), 1);
        let (kept, _) =
            decontaminate(docs, &eval, &DecontaminationMode::aggressive(), TaskKind::Perplexity);
        assert!(kept.is_empty());
    }

    #[test]
    fn standard_downstream_uses_question_jaccard() {
        let question = words(0..20);
        let docs = pool(&[("copy", 0.9, &question), ("other", 0.8, &words(50..80))]);
        let eval = EvalUnit { question: &question, answers: &[], target: None };
        let (kept, _) =
            decontaminate(docs, &eval, &DecontaminationMode::standard(), TaskKind::Downstream);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].doc.passage_id, "other");
    }

    #[test]
    fn aggressive_downstream_checks_answers() {
        let answers = vec![words(500..520)];
        let with_answer_span = format!("{} {}", words(0..40), words(505..513)); // 8 tokens
        let docs = pool(&[("hit", 0.9, &with_answer_span), ("clean", 0.8, &words(100..140))]);
        let eval = EvalUnit { question: "unrelated question", answers: &answers, target: None };
        let (kept, _) =
            decontaminate(docs, &eval, &DecontaminationMode::aggressive(), TaskKind::Downstream);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].doc.passage_id, "clean");
    }

    #[test]
    fn decontaminated_pool_passes_reassertion() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let target = words(0..80);
        let items: Vec<(String, f64, String)> = (0..50)
            .map(|i| {
                let text = if i % 5 == 0 {
                    let start = rng.gen_range(0..40);
                    let len = rng.gen_range(20..40);
                    format!("{} {}", words(1000 + i * 10..1000 + i * 10 + 30), words(start..start + len))
                } else {
                    words(2000 + i * 50..2000 + i * 50 + 40)
                };
                (format!("d{i:02}"), rng.gen_range(0.0..1.0), text)
            })
            .collect();
        let refs: Vec<(&str, f64, &str)> =
            items.iter().map(|(a, b, c)| (a.as_str(), *b, c.as_str())).collect();
        let eval = EvalUnit { question: "", answers: &[], target: Some(&target) };
        let mode = DecontaminationMode::standard();
        let (kept, _) = decontaminate(pool(&refs), &eval, &mode, TaskKind::Perplexity);
        for d in &kept {
            assert!(!is_contaminated(&d.text, &eval, &mode, TaskKind::Perplexity));
        }
    }

    #[test]
    fn quality_examples() {
        let punct_only = pool(&[("p", 0.9, "!!! ??? ...")]);
        let config =
            QualityConfig { require_alphanumeric: true, ..QualityConfig::default() };
        let (kept, report) = quality_filter(punct_only, &config);
        assert!(kept.is_empty());
        assert_eq!(report.removed[0].reason, RemovalReason::Quality);

        let five = pool(&[("f", 0.9, "one two three four five")]);
        let config = QualityConfig { min_whitespace_tokens: 13, ..QualityConfig::default() };
        let (kept, _) = quality_filter(five, &config);
        assert!(kept.is_empty());

        let docs = pool(&[("a", 0.9, "!!! ??? ..."), ("b", 0.8, "short")]);
        let (kept, report) = quality_filter(docs.clone(), &QualityConfig::default());
        assert_eq!(kept, docs);
        assert_eq!(report.kept_count, 2);
    }

    #[test]
    fn quality_punct_span_and_language() {
        let spanny = pool(&[("s", 0.9, "text with trailing !!!!!!!!!! run")]);
        let config = QualityConfig { max_punct_span: Some(9), ..QualityConfig::default() };
        let (kept, _) = quality_filter(spanny.clone(), &config);
        assert!(kept.is_empty());
        let config = QualityConfig { max_punct_span: Some(10), ..QualityConfig::default() };
        let (kept, _) = quality_filter(spanny, &config);
        assert_eq!(kept.len(), 1);

        let config = QualityConfig {
            language_predicate: Some(Arc::new(|t: &str| t.contains("keepme"))),
            ..QualityConfig::default()
        };
        let docs = pool(&[("k", 0.9, "keepme please"), ("d", 0.8, "drop this")]);
        let (kept, _) = quality_filter(docs, &config);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].doc.passage_id, "k");
    }
}
