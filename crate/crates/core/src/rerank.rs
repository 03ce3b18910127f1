//! Pluggable reranking of retrieved pools, plus the lexical oracle scorer.
//!
//! Scoring is element-level: a document's new score depends only on the
//! (query, document) pair, never on the rest of the pool, which is what
//! lets reranking commute with subsampling. The final ordering is the
//! stable sort by (score descending, original rank ascending).

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::PoolDoc;

/// Reranking depths: score the first `rerank_depth` (K') documents, keep
/// the top `final_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerankSpec {
    pub scorer: String,
    pub rerank_depth: usize,
    pub final_k: usize,
}

/// Default K' when reranking is enabled.
pub const DEFAULT_RERANK_DEPTH: usize = 500;

impl RerankSpec {
    pub fn new(scorer: impl Into<String>, rerank_depth: usize, final_k: usize) -> Result<Self> {
        if final_k > rerank_depth {
            return Err(Error::Config {
                field: "rerank_depth".into(),
                msg: format!("final k ({final_k}) must be <= rerank depth ({rerank_depth})"),
            });
        }
        Ok(Self { scorer: scorer.into(), rerank_depth, final_k })
    }
}

/// A second-stage scorer. Implementations must be deterministic for a
/// given (query, document) pair.
pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, query: &str, doc: &str) -> Result<f64>;

    /// Score a batch; the default loops over [`Scorer::score`].
    fn score_batch(&self, query: &str, docs: &[&str]) -> Result<Vec<f64>> {
        docs.iter().map(|d| self.score(query, d)).collect()
    }
}

fn lower_tokens(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(str::to_owned).collect()
}

fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Lexical oracle score of a document against gold answers.
///
/// 1.0 when any answer's token sequence appears contiguously in the
/// document; otherwise the best answer-unigram coverage, i.e. the fraction
/// of an answer's distinct unigrams that occur in the document. Answers
/// with no tokens are ignored; an empty answer list is an error.
pub fn oracle_score<S: AsRef<str>>(doc: &str, answers: &[S]) -> Result<f64> {
    if answers.is_empty() {
        return Err(Error::InvalidInput("oracle scorer requires at least one answer".into()));
    }
    let doc_tokens = lower_tokens(doc);
    let doc_unigrams: std::collections::HashSet<&str> =
        doc_tokens.iter().map(String::as_str).collect();
    let mut best = 0f64;
    for answer in answers {
        let answer_tokens = lower_tokens(answer.as_ref());
        if answer_tokens.is_empty() {
            continue;
        }
        if contains_subsequence(&doc_tokens, &answer_tokens) {
            return Ok(1.0);
        }
        let unigrams: std::collections::HashSet<&str> =
            answer_tokens.iter().map(String::as_str).collect();
        let hit = unigrams.iter().filter(|u| doc_unigrams.contains(*u)).count();
        best = best.max(hit as f64 / unigrams.len() as f64);
    }
    Ok(best)
}

/// Upper-bound reranker built from the gold answers (the query text is
/// ignored; the answers are fixed at construction).
pub struct OracleScorer {
    answers: Vec<String>,
}

impl OracleScorer {
    pub fn new(answers: &[String]) -> Result<Self> {
        if answers.is_empty() {
            return Err(Error::InvalidInput("oracle scorer requires at least one answer".into()));
        }
        Ok(Self { answers: answers.to_vec() })
    }
}

impl Scorer for OracleScorer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn score(&self, _query: &str, doc: &str) -> Result<f64> {
        oracle_score(doc, &self.answers)
    }
}

#[derive(Serialize)]
struct ExternRequest<'a> {
    query: &'a str,
    doc: &'a str,
}

/// Scorer backed by an external executable. The program receives one JSON
/// object `{"query", "doc"}` per stdin line and must print one float per
/// line on stdout, in input order.
pub struct ExternScorer {
    pub program: PathBuf,
}

impl Scorer for ExternScorer {
    fn name(&self) -> &str {
        "extern"
    }

    fn score(&self, query: &str, doc: &str) -> Result<f64> {
        Ok(self.score_batch(query, &[doc])?[0])
    }

    fn score_batch(&self, query: &str, docs: &[&str]) -> Result<Vec<f64>> {
        let mut child = Command::new(&self.program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        {
            let stdin = child.stdin.as_mut().expect("piped stdin");
            for doc in docs {
                let line = serde_json::to_string(&ExternRequest { query, doc })
                    .map_err(std::io::Error::other)?;
                stdin.write_all(line.as_bytes())?;
                stdin.write_all(b"\n")?;
            }
        }
        let output = child.wait_with_output()?;
        if !output.status.success() {
            return Err(Error::InvalidInput(format!(
                "external scorer {} exited with {}",
                self.program.display(),
                output.status
            )));
        }
        let text = String::from_utf8_lossy(&output.stdout);
        let scores: Vec<f64> = text
            .lines()
            .map(|l| {
                l.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("external scorer emitted non-float line `{l}`"))
                })
            })
            .collect::<Result<_>>()?;
        if scores.len() != docs.len() {
            return Err(Error::InvalidInput(format!(
                "external scorer returned {} scores for {} documents",
                scores.len(),
                docs.len()
            )));
        }
        Ok(scores)
    }
}

/// Rerank the first `spec.rerank_depth` documents and keep the top
/// `spec.final_k` under (new score descending, original rank ascending).
/// The returned documents carry the reranker's score.
pub fn rerank(
    docs: Vec<PoolDoc>,
    query: &str,
    scorer: &dyn Scorer,
    spec: &RerankSpec,
) -> Result<Vec<PoolDoc>> {
    let depth = spec.rerank_depth.min(docs.len());
    let head = &docs[..depth];
    let texts: Vec<&str> = head.iter().map(|d| d.text.as_str()).collect();
    let scores = scorer.score_batch(query, &texts)?;
    let mut order: Vec<usize> = (0..depth).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(spec.final_k);
    Ok(order
        .into_iter()
        .map(|i| {
            let mut d = head[i].clone();
            d.doc.score = scores[i];
            d
        })
        .collect())
}
