//! Shared corpus and query generators for the property suites.
#![allow(dead_code)] // each test target uses a different subset

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use trove_core::corpus::Passage;
use trove_core::embedding::{embed_shard, EmbedderSpec};
use trove_core::flat_index::{build_index, ShardIndex};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` passages in one domain, each `words` tokens drawn from a shared
/// vocabulary of `vocab` types (so texts overlap lexically and retrieval
/// scores are non-trivial).
pub fn random_passages(
    rng: &mut ChaCha8Rng,
    n: usize,
    words: usize,
    vocab: usize,
    domain: &str,
) -> Vec<Passage> {
    (0..n)
        .map(|i| {
            let text: String = (0..words)
                .map(|_| format!("tok{}", rng.gen_range(0..vocab)))
                .collect::<Vec<_>>()
                .join(" ");
            Passage {
                passage_id: format!("{domain}-d{i:05}#00000"),
                domain: domain.to_string(),
                shard: 0,
                text,
                word_count: words as u32,
            }
        })
        .collect()
}

/// Reassign shards round-robin within each domain.
pub fn with_shards(passages: &[Passage], m: u32) -> Vec<Passage> {
    let mut counters = std::collections::HashMap::new();
    passages
        .iter()
        .map(|p| {
            let c = counters.entry(p.domain.clone()).or_insert(0u32);
            let mut q = p.clone();
            q.shard = *c % m;
            *c += 1;
            q
        })
        .collect()
}

/// Group passages by (domain, shard), embed each group, build indices.
pub fn build_shard_indices(passages: &[Passage], spec: &EmbedderSpec) -> Vec<ShardIndex> {
    let mut groups: std::collections::BTreeMap<(String, u32), Vec<Passage>> =
        std::collections::BTreeMap::new();
    for p in passages {
        groups.entry((p.domain.clone(), p.shard)).or_default().push(p.clone());
    }
    groups
        .into_values()
        .map(|group| build_index(embed_shard(&group, spec)).unwrap())
        .collect()
}

pub fn random_query(rng: &mut ChaCha8Rng, words: usize, vocab: usize) -> String {
    (0..words)
        .map(|_| format!("tok{}", rng.gen_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}
