//! Training-time compute accounting: pretraining vs. datastore
//! construction, and Pareto-frontier selection over (FLOPs, metric)
//! points.
//!
//! FLOPs are exact big integers; at 1e23 scale, float rounding would make
//! reports irreproducible. Pretraining costs one forward and one backward
//! pass per token (6·N·D total); building a flat-index datastore costs one
//! retriever forward pass per token (2·N·D) and nothing else, since flat
//! indexing adds no operations over the saved embeddings.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

/// Parameter and token counts for one (model, datastore) configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsModel {
    pub lm_params: u64,
    pub pretrain_tokens: u64,
    pub retriever_params: u64,
    pub datastore_tokens: u64,
}

/// `6 * lm_params * pretrain_tokens`.
pub fn flops_pretrain(lm_params: u64, pretrain_tokens: u64) -> BigUint {
    BigUint::from(6u8) * BigUint::from(lm_params) * BigUint::from(pretrain_tokens)
}

/// `2 * retriever_params * datastore_tokens`.
pub fn flops_datastore(retriever_params: u64, datastore_tokens: u64) -> BigUint {
    BigUint::from(2u8) * BigUint::from(retriever_params) * BigUint::from(datastore_tokens)
}

impl FlopsModel {
    pub fn total(&self) -> BigUint {
        flops_pretrain(self.lm_params, self.pretrain_tokens)
            + flops_datastore(self.retriever_params, self.datastore_tokens)
    }
}

/// Whether larger metric values are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricDirection {
    HigherBetter,
    LowerBetter,
}

impl MetricDirection {
    fn strictly_better(self, a: f64, b: f64) -> bool {
        match self {
            MetricDirection::HigherBetter => a > b,
            MetricDirection::LowerBetter => a < b,
        }
    }
}

/// One candidate configuration: total FLOPs, achieved metric, free-form tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub flops: BigUint,
    pub metric: f64,
    pub tag: String,
}

/// Mark the non-dominated points. A point is dominated when some other
/// point has lower-or-equal FLOPs and a strictly better metric.
pub fn pareto_mask(points: &[ParetoPoint], direction: MetricDirection) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // cheapest first; among equal-FLOPs points, better metric first
    order.sort_by(|&a, &b| {
        points[a].flops.cmp(&points[b].flops).then_with(|| {
            if direction.strictly_better(points[a].metric, points[b].metric) {
                std::cmp::Ordering::Less
            } else if direction.strictly_better(points[b].metric, points[a].metric) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        })
    });
    let mut mask = vec![false; points.len()];
    let mut best_metric: Option<f64> = None;
    for &i in &order {
        let dominated = match best_metric {
            Some(best) => direction.strictly_better(best, points[i].metric),
            None => false,
        };
        mask[i] = !dominated;
        if best_metric.is_none_or(|best| direction.strictly_better(points[i].metric, best)) {
            best_metric = Some(points[i].metric);
        }
    }
    mask
}

/// The non-dominated subsequence of `points`, in input order.
pub fn pareto_frontier(points: &[ParetoPoint], direction: MetricDirection) -> Vec<ParetoPoint> {
    pareto_mask(points, direction)
        .into_iter()
        .zip(points)
        .filter(|(keep, _)| *keep)
        .map(|(_, p)| p.clone())
        .collect()
}
