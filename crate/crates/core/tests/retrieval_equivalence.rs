//! Sharded retrieval must be indistinguishable from unsharded retrieval:
//! same ids, same score bits, for any shard count and any domain split.

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng as _;
use std::collections::BTreeSet;

use trove_core::embedding::{embed_text, EmbedderSpec};
use trove_core::flat_index::rank_cmp;
use trove_core::retrieval::{merge_domains, merge_topk, retrieve_per_domain, search_distributed};
use trove_core::ScoredDoc;

fn assert_docs_bit_identical(a: &[ScoredDoc], b: &[ScoredDoc]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.passage_id, y.passage_id);
        assert_eq!(x.score.to_bits(), y.score.to_bits(), "score differs for {}", x.passage_id);
    }
}

#[test]
fn shard_count_invariance_randomized() {
    let spec = EmbedderSpec::new("lexical-bow-v1", 32).unwrap();
    let mut r = rng(0xA11CE);
    for trial in 0..12 {
        let n = r.gen_range(200..800);
        let passages = random_passages(&mut r, n, 12, 40, "web");
        let queries: Vec<String> = (0..10).map(|_| random_query(&mut r, 5, 40)).collect();

        let baseline = build_shard_indices(&with_shards(&passages, 1), &spec);
        for m in [2u32, 4, 8] {
            let sharded = build_shard_indices(&with_shards(&passages, m), &spec);
            for q in &queries {
                let qv = embed_text(q, &spec);
                let a = search_distributed("q", &qv, &baseline, 50).unwrap();
                let b = search_distributed("q", &qv, &sharded, 50).unwrap();
                assert_docs_bit_identical(&a.docs, &b.docs);
            }
        }
        let _ = trial;
    }
}

#[test]
fn domain_merge_equals_global_search() {
    let spec = EmbedderSpec::new("lexical-bow-v1", 32).unwrap();
    let mut r = rng(0xBEEF);
    let mut passages = Vec::new();
    for domain in ["web", "books", "code"] {
        passages.extend(random_passages(&mut r, 300, 10, 30, domain));
    }
    let sharded = with_shards(&passages, 4);
    let shards = build_shard_indices(&sharded, &spec);

    for _ in 0..10 {
        let q = random_query(&mut r, 4, 30);
        let qv = embed_text(&q, &spec);

        let per_domain = retrieve_per_domain(&qv, &shards, 40).unwrap();
        let all: BTreeSet<String> = per_domain.keys().cloned().collect();
        let merged = merge_domains(&per_domain, &all, 40).unwrap();
        let global = search_distributed("q", &qv, &shards, 40).unwrap();
        assert_docs_bit_identical(&merged, &global.docs);

        // restricting to one domain equals searching only its shards
        let web_only: Vec<_> =
            shards.iter().filter(|s| s.domain() == "web").cloned().collect();
        let web_merge =
            merge_domains(&per_domain, &BTreeSet::from(["web".to_string()]), 40).unwrap();
        let web_direct = search_distributed("q", &qv, &web_only, 40).unwrap();
        assert_docs_bit_identical(&web_merge, &web_direct.docs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_equals_concat_sort(
        lists in prop::collection::vec(
            prop::collection::vec((0u32..10_000, -100i32..100), 0..40),
            1..6,
        ),
        k in 1usize..60,
    ) {
        // build disjoint ids across lists via the list index prefix
        let lists: Vec<Vec<ScoredDoc>> = lists
            .into_iter()
            .enumerate()
            .map(|(li, items)| {
                let mut docs: Vec<ScoredDoc> = items
                    .into_iter()
                    .enumerate()
                    .map(|(i, (_, score))| ScoredDoc {
                        passage_id: format!("l{li}-{i:03}"),
                        score: f64::from(score) / 10.0,
                        domain: "d".into(),
                        shard: li as u32,
                    })
                    .collect();
                docs.sort_by(rank_cmp);
                docs
            })
            .collect();
        let merged = merge_topk(&lists, k).unwrap();
        let mut oracle: Vec<ScoredDoc> = lists.concat();
        oracle.sort_by(rank_cmp);
        oracle.truncate(k);
        prop_assert_eq!(merged, oracle);
    }

    #[test]
    fn distributed_results_are_sorted_unique(seed in 0u64..1000) {
        let spec = EmbedderSpec::new("lexical-bow-v1", 16).unwrap();
        let mut r = rng(seed);
        let passages = with_shards(&random_passages(&mut r, 120, 8, 20, "web"), 3);
        let shards = build_shard_indices(&passages, &spec);
        let qv = embed_text(&random_query(&mut r, 4, 20), &spec);
        let result = search_distributed("q", &qv, &shards, 25).unwrap();
        prop_assert!(result.docs.windows(2).all(|w| rank_cmp(&w[0], &w[1]).is_le()));
        let ids: BTreeSet<&str> = result.docs.iter().map(|d| d.passage_id.as_str()).collect();
        prop_assert_eq!(ids.len(), result.docs.len());
        prop_assert!(result.docs.len() <= 25);
    }
}
