//! Vertex traversal order shared by label propagation clustering and
//! refinement.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::LocalGraph;
use crate::types::LocalId;

/// Owned vertices per chunk.
pub const CHUNK_SIZE: usize = 1024;

/// Number of batches per label propagation iteration:
/// `max(alpha, ceil(beta / p))`.
pub fn batch_count(p: usize, alpha: usize, beta: usize) -> usize {
    assert!(p >= 1);
    alpha.max(beta.div_ceil(p))
}

/// Degree bucket of a vertex: bucket `i` holds degrees in `[2^i, 2^(i+1))`,
/// and bucket 0 also holds isolated vertices.
pub fn degree_bucket(degree: usize) -> usize {
    if degree <= 1 {
        0
    } else {
        degree.ilog2() as usize
    }
}

/// One PE's randomized traversal: degree buckets in increasing order, each
/// bucket cut into chunks, chunks shuffled within their bucket and vertices
/// shuffled within their chunk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkSchedule {
    order: Vec<LocalId>,
    // (bucket, start, end) into `order`, one per chunk, in traversal order
    chunks: Vec<(usize, usize, usize)>,
}

impl ChunkSchedule {
    pub fn new<R: Rng>(g: &LocalGraph, chunk_size: usize, rng: &mut R) -> Self {
        let degrees: Vec<usize> = (0..g.n_owned() as LocalId).map(|u| g.degree(u)).collect();
        Self::from_degrees(&degrees, chunk_size, rng)
    }

    pub fn from_degrees<R: Rng>(degrees: &[usize], chunk_size: usize, rng: &mut R) -> Self {
        assert!(chunk_size >= 1);
        let mut buckets: Vec<Vec<LocalId>> = Vec::new();
        for (u, &d) in degrees.iter().enumerate() {
            let b = degree_bucket(d);
            if buckets.len() <= b {
                buckets.resize_with(b + 1, Vec::new);
            }
            buckets[b].push(u as LocalId);
        }
        let mut order = Vec::with_capacity(degrees.len());
        let mut chunks = Vec::new();
        for (b, members) in buckets.iter().enumerate() {
            let mut pieces: Vec<&[LocalId]> = members.chunks(chunk_size).collect();
            pieces.shuffle(rng);
            for piece in pieces {
                let start = order.len();
                order.extend_from_slice(piece);
                order[start..].shuffle(rng);
                chunks.push((b, start, order.len()));
            }
        }
        ChunkSchedule { order, chunks }
    }

    /// All owned vertices in traversal order.
    pub fn order(&self) -> &[LocalId] {
        &self.order
    }

    /// Chunks in traversal order as `(bucket, vertices)`.
    pub fn chunks(&self) -> impl Iterator<Item = (usize, &[LocalId])> {
        self.chunks.iter().map(|&(b, s, e)| (b, &self.order[s..e]))
    }

    /// Vertices of batch `i` out of `batches` near-equal consecutive slices
    /// of the traversal order.
    pub fn batch(&self, i: usize, batches: usize) -> &[LocalId] {
        let n = self.order.len();
        let lo = n * i / batches;
        let hi = n * (i + 1) / batches;
        &self.order[lo..hi]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_count_examples() {
        assert_eq!(batch_count(64, 8, 128), 8);
        assert_eq!(batch_count(1, 8, 128), 128);
        assert_eq!(batch_count(16, 8, 128), 8);
        assert_eq!(batch_count(3, 8, 128), 43);
    }

    #[test]
    fn buckets() {
        assert_eq!(degree_bucket(0), 0);
        assert_eq!(degree_bucket(1), 0);
        assert_eq!(degree_bucket(2), 1);
        assert_eq!(degree_bucket(3), 1);
        assert_eq!(degree_bucket(4), 2);
        assert_eq!(degree_bucket(1023), 9);
    }

    proptest! {
        #[test]
        fn schedule_invariants(
            degrees in proptest::collection::vec(0usize..300, 0..3000),
            chunk in 1usize..200,
            seed in any::<u64>(),
            batches in 1usize..20,
        ) {
            let s = ChunkSchedule::from_degrees(&degrees, chunk, &mut ChaCha8Rng::seed_from_u64(seed));
            let mut seen = s.order().to_vec();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..degrees.len() as LocalId).collect::<Vec<_>>());
            let mut last_bucket = 0;
            for (b, vs) in s.chunks() {
                prop_assert!(b >= last_bucket);
                last_bucket = b;
                prop_assert!(!vs.is_empty() && vs.len() <= chunk);
                for &v in vs {
                    let d = degrees[v as usize];
                    prop_assert_eq!(degree_bucket(d), b);
                    if b > 0 {
                        prop_assert!((1 << b) <= d && d < (1 << (b + 1)));
                    } else {
                        prop_assert!(d <= 1);
                    }
                }
            }
            let joined: Vec<LocalId> = (0..batches).flat_map(|i| s.batch(i, batches).to_vec()).collect();
            prop_assert_eq!(joined, s.order().to_vec());
            let again = ChunkSchedule::from_degrees(&degrees, chunk, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(again, s);
        }
    }
}
