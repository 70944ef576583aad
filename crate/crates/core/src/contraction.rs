//! Cluster contraction and partition projection.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap as HashMap;

use crate::comm::{Comm, Outbox};
use crate::graph::{exchange_interface, DistGraph, OwnedAdjacency, VertexDistribution, EPS_SCALE};
use crate::partition::DistPartition;
use crate::types::{BlockId, GlobalId, LocalId, Weight};

/// Clusters a PE may own before the surplus is handed to other PEs.
pub const DEFAULT_DELTA: f64 = 1.1;

/// A fine graph's coarse successor and the vertex map between them.
#[derive(Clone, Debug)]
pub struct CoarseningLevel {
    pub coarse: DistGraph,
    /// Coarse global ID of every owned and ghost fine vertex, per PE.
    pub mapping: Vec<Vec<GlobalId>>,
}

/// Quota `ceil(delta * n_c / p)`.
pub fn cluster_quota(n_c: u64, p: usize, delta: f64) -> u64 {
    assert!(delta >= 1.0);
    let num = (delta * EPS_SCALE as f64).round() as i128 * n_c as i128;
    let den = EPS_SCALE * p as i128;
    ((num + den - 1) / den) as u64
}

/// Where the clusters announced at each PE end up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPlacement {
    pub quota: u64,
    pub kept: Vec<u64>,
    /// `(donor, receiver, count)` runs in assignment order.
    pub transfers: Vec<(usize, usize, u64)>,
    pub dist: VertexDistribution,
}

/// Keeps up to the quota at every PE and hands each surplus cluster, donors
/// in rank order, to the PE with the fewest clusters so far (ties to the
/// lower rank).
pub fn place_clusters(counts: &[u64], delta: f64) -> ClusterPlacement {
    let p = counts.len();
    let n_c: u64 = counts.iter().sum();
    let quota = cluster_quota(n_c, p, delta).max(n_c.div_ceil(p as u64));
    let kept: Vec<u64> = counts.iter().map(|&c| c.min(quota)).collect();
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = kept.iter().enumerate().map(|(r, &k)| Reverse((k, r))).collect();
    let mut transfers: Vec<(usize, usize, u64)> = Vec::new();
    let mut total = kept.clone();
    for donor in 0..p {
        for _ in 0..counts[donor] - kept[donor] {
            let Reverse((n, r)) = heap.pop().expect("non-empty heap");
            match transfers.last_mut() {
                Some(t) if t.0 == donor && t.1 == r => t.2 += 1,
                _ => transfers.push((donor, r, 1)),
            }
            total[r] = n + 1;
            heap.push(Reverse((n + 1, r)));
        }
    }
    ClusterPlacement {
        quota,
        kept,
        transfers,
        dist: VertexDistribution::from_counts(&total),
    }
}

impl ClusterPlacement {
    /// Coarse IDs of the clusters announced at `rank`, in their sorted order:
    /// kept clusters first, then the surplus in transfer order.
    pub fn coarse_ids(&self, rank: usize, count: u64) -> Vec<GlobalId> {
        let mut ids: Vec<GlobalId> = (0..self.kept[rank]).map(|i| self.dist.first(rank) + i).collect();
        let mut filled: Vec<u64> = self.kept.clone();
        for &(donor, recv, n) in &self.transfers {
            if donor == rank {
                ids.extend((0..n).map(|i| self.dist.first(recv) + filled[recv] + i));
            }
            filled[recv] += n;
        }
        debug_assert_eq!(ids.len() as u64, count);
        ids
    }
}

/// Contracts every cluster into one coarse vertex. `clustering` names the
/// cluster of each owned and ghost vertex.
pub fn contract(comm: &Comm, g: &DistGraph, clustering: &[Vec<GlobalId>], delta: f64) -> CoarseningLevel {
    let p = comm.size();
    let dist = g.dist();

    // announce the clusters used by owned vertices to their owners
    let announce: Vec<Outbox<GlobalId>> = comm.run_ref(g.locals(), |r, lg| {
        let mut used: Vec<GlobalId> = clustering[r][..lg.n_owned()].to_vec();
        used.sort_unstable();
        used.dedup();
        let mut ob = Outbox::new(p);
        for c in used {
            ob.push(dist.owner(c), c);
        }
        ob
    });
    let announced = comm.alltoall(announce);
    let owned_clusters: Vec<Vec<GlobalId>> = comm.run_ref(&announced, |_, inbox| {
        let mut cs: Vec<GlobalId> = inbox.iter().map(|(_, &c)| c).collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    });

    let counts = comm.allgather(owned_clusters.iter().map(|c| vec![c.len() as u64]).collect());
    let counts: Vec<u64> = counts.into_iter().map(|c| c[0]).collect();
    let placement = place_clusters(&counts, delta);

    // owners tell every announcer the coarse ID of its clusters
    let replies: Vec<Outbox<(GlobalId, GlobalId)>> = comm.run_ref(&announced, |r, inbox| {
        let ids = placement.coarse_ids(r, counts[r]);
        let index: HashMap<GlobalId, GlobalId> =
            owned_clusters[r].iter().copied().zip(ids.iter().copied()).collect();
        let mut ob = Outbox::new(p);
        for (src, &c) in inbox.iter() {
            ob.push(src, (c, index[&c]));
        }
        ob
    });
    let replies = comm.alltoall(replies);
    let mut mapping: Vec<Vec<GlobalId>> = comm.exec().map_owned(replies, |r, inbox| {
        let lg = g.local(r);
        let index: HashMap<GlobalId, GlobalId> = inbox.records().collect();
        let mut m: Vec<GlobalId> = clustering[r][..lg.n_owned()].iter().map(|c| index[c]).collect();
        m.resize(lg.n_total(), GlobalId::MAX);
        m
    });
    let iface: Vec<Vec<(LocalId, GlobalId)>> = comm.run_ref(g.locals(), |r, lg| {
        (0..lg.n_owned() as LocalId)
            .filter(|&u| lg.is_interface(u))
            .map(|u| (u, mapping[r][u as usize]))
            .collect()
    });
    let ghost_ids = exchange_interface(comm, g.locals(), iface);
    comm.run(&mut mapping, |r, m| {
        for &(ghost, c) in &ghost_ids[r] {
            m[ghost as usize] = c;
        }
    });

    // local pre-contraction, then ship to the coarse owners; a record
    // (a, a, w) carries vertex weight
    let cdist = &placement.dist;
    let shipped: Vec<Outbox<(GlobalId, GlobalId, Weight)>> = comm.run_ref(g.locals(), |r, lg| {
        let m = &mapping[r];
        let mut recs: Vec<(GlobalId, GlobalId, Weight)> = Vec::with_capacity(lg.n_owned() + lg.n_edges());
        for u in 0..lg.n_owned() as LocalId {
            let cu = m[u as usize];
            recs.push((cu, cu, lg.vertex_weight(u)));
            for (v, w) in lg.neighbors(u) {
                let cv = m[v as usize];
                if cu != cv {
                    recs.push((cu, cv, w));
                }
            }
        }
        let recs = merge_records(recs);
        let mut ob = Outbox::new(p);
        for rec in recs {
            ob.push(cdist.owner(rec.0), rec);
        }
        ob
    });
    let received = comm.alltoall(shipped);
    let parts: Vec<OwnedAdjacency> = comm.exec().map_owned(received, |r, inbox| {
        let recs = merge_records(inbox.records().collect());
        let first = cdist.first(r);
        let n = cdist.count(r);
        let mut adj = OwnedAdjacency {
            vwgt: vec![0; n],
            xadj: Vec::with_capacity(n + 1),
            targets: Vec::new(),
            weights: Vec::new(),
        };
        adj.xadj.push(0);
        let mut at = 0;
        for i in 0..n {
            let a = first + i as GlobalId;
            while at < recs.len() && recs[at].0 == a {
                let (_, b, w) = recs[at];
                if a == b {
                    adj.vwgt[i] = w;
                } else {
                    adj.targets.push(b);
                    adj.weights.push(w);
                }
                at += 1;
            }
            adj.xadj.push(adj.targets.len());
        }
        debug_assert_eq!(at, recs.len());
        adj
    });
    let coarse = DistGraph::assemble(comm, placement.dist.clone(), parts);
    CoarseningLevel { coarse, mapping }
}

/// Sorts by endpoints and sums the weights of equal pairs.
fn merge_records(mut recs: Vec<(GlobalId, GlobalId, Weight)>) -> Vec<(GlobalId, GlobalId, Weight)> {
    recs.sort_unstable_by_key(|r| (r.0, r.1));
    let mut out: Vec<(GlobalId, GlobalId, Weight)> = Vec::with_capacity(recs.len());
    for r in recs {
        match out.last_mut() {
            Some(last) if last.0 == r.0 && last.1 == r.1 => last.2 += r.2,
            _ => out.push(r),
        }
    }
    out
}

/// Fine partition with `part(v) = coarse_part(mapping(v))`.
pub fn project_partition(
    comm: &Comm,
    fine: &DistGraph,
    level: &CoarseningLevel,
    coarse_part: &DistPartition,
) -> DistPartition {
    let p = comm.size();
    let cdist = level.coarse.dist();
    let wanted: Vec<Vec<GlobalId>> = comm.run_ref(&level.mapping, |_, m| {
        let mut w = m.clone();
        w.sort_unstable();
        w.dedup();
        w
    });
    let requests: Vec<Outbox<GlobalId>> = comm.run_ref(&wanted, |_, w| {
        let mut ob = Outbox::new(p);
        for &c in w {
            ob.push(cdist.owner(c), c);
        }
        ob
    });
    let requests = comm.alltoall(requests);
    let replies: Vec<Outbox<(GlobalId, BlockId)>> = comm.run_ref(&requests, |r, inbox| {
        let first = cdist.first(r);
        let mut ob = Outbox::new(p);
        for (src, &c) in inbox.iter() {
            ob.push(src, (c, coarse_part.labels[r][(c - first) as usize]));
        }
        ob
    });
    let replies = comm.alltoall(replies);
    let labels: Vec<Vec<BlockId>> = comm.exec().map_owned(replies, |r, inbox| {
        let index: HashMap<GlobalId, BlockId> = inbox.records().collect();
        let l: Vec<BlockId> = level.mapping[r].iter().map(|c| index[c]).collect();
        debug_assert_eq!(l.len(), fine.local(r).n_total());
        l
    });
    DistPartition {
        labels,
        weights: coarse_part.weights.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Clustering;
    use crate::graph::SeqGraph;
    use crate::partition::{edge_cut, ghosts_synchronized};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn quota_example() {
        let pl = place_clusters(&[10, 0], 1.1);
        assert_eq!(pl.quota, 6);
        assert_eq!(pl.kept, vec![6, 0]);
        assert_eq!(pl.transfers, vec![(0, 1, 4)]);
        assert_eq!((pl.dist.count(0), pl.dist.count(1)), (6, 4));
        assert_eq!(pl.coarse_ids(0, 10), vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn surplus_goes_to_least_loaded_lowest_rank() {
        // n_c = 12, p = 3, quota ceil(4.4) = 5
        let pl = place_clusters(&[9, 3, 0], 1.1);
        assert_eq!(pl.quota, 5);
        assert_eq!(pl.kept, vec![5, 3, 0]);
        // PE2 takes three (0 -> 3, ties with PE1 at 3 go to PE1), then alternate
        assert_eq!(pl.transfers, vec![(0, 2, 3), (0, 1, 1)]);
        assert_eq!((0..3).map(|r| pl.dist.count(r)).collect::<Vec<_>>(), vec![5, 4, 3]);
        assert_eq!(pl.coarse_ids(0, 9), vec![0, 1, 2, 3, 4, 9, 10, 11, 8]);
    }

    fn gather_mapping(g: &DistGraph, level: &CoarseningLevel) -> Vec<GlobalId> {
        (0..g.num_pes())
            .flat_map(|r| level.mapping[r][..g.local(r).n_owned()].to_vec())
            .collect()
    }

    /// Sort-merge oracle: coarse adjacency from the gathered fine graph.
    fn oracle(g: &SeqGraph, map: &[GlobalId], n_c: usize) -> (Vec<Weight>, BTreeMap<(u64, u64), Weight>) {
        let mut vw = vec![0; n_c];
        let mut edges = BTreeMap::new();
        for u in 0..g.n() {
            vw[map[u] as usize] += g.vertex_weight(u as LocalId);
            for (v, w) in g.neighbors(u as LocalId) {
                let (a, b) = (map[u], map[v as usize]);
                if a != b {
                    *edges.entry((a, b)).or_insert(0) += w;
                }
            }
        }
        (vw, edges)
    }

    fn adjacency(g: &SeqGraph) -> BTreeMap<(u64, u64), Weight> {
        let mut m = BTreeMap::new();
        for u in 0..g.n() as LocalId {
            for (v, w) in g.neighbors(u) {
                assert!(m.insert((u as u64, v as u64), w).is_none(), "duplicate coarse edge");
            }
        }
        m
    }

    #[test]
    fn identity_clustering_is_an_isomorphism() {
        let g = SeqGraph::from_edges(5, Some(vec![1, 2, 3, 4, 5]), &[(0, 1, 2), (1, 2, 3), (3, 4, 1), (0, 4, 7)])
            .unwrap();
        for p in [1, 2, 3] {
            let comm = Comm::new(p);
            let dg = DistGraph::distribute(&g, p);
            let level = contract(&comm, &dg, &Clustering::singletons(&dg).labels, DEFAULT_DELTA);
            assert_eq!(level.coarse.n(), 5);
            assert_eq!(level.coarse.m(), 4);
            assert_eq!(level.coarse.total_weight(), 15);
            let map = gather_mapping(&dg, &level);
            let (vw, edges) = oracle(&g, &map, 5);
            let cg = level.coarse.gather();
            assert_eq!(cg.vertex_weights(), vw.as_slice());
            assert_eq!(adjacency(&cg), edges);
        }
    }

    #[test]
    fn triangle_collapses_to_one_vertex() {
        let g = SeqGraph::from_edges(3, None, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]).unwrap();
        for p in [1, 2, 3] {
            let comm = Comm::new(p);
            let dg = DistGraph::distribute(&g, p);
            let labels: Vec<Vec<GlobalId>> = dg.locals().iter().map(|lg| vec![0; lg.n_total()]).collect();
            let level = contract(&comm, &dg, &labels, DEFAULT_DELTA);
            assert_eq!(level.coarse.n(), 1);
            assert_eq!(level.coarse.m(), 0);
            assert_eq!(level.coarse.total_weight(), 3);
        }
    }

    fn arb_case() -> impl Strategy<Value = (SeqGraph, Vec<u64>, Vec<BlockId>, usize)> {
        (2usize..40, 1usize..8).prop_flat_map(|(n, p)| {
            (
                proptest::collection::vec((0..n as u32, 0..n as u32, 1i64..6), 0..150),
                proptest::collection::vec(1i64..5, n),
                proptest::collection::vec(0..n as u64, n),
                proptest::collection::vec(0..4 as BlockId, n),
            )
                .prop_map(move |(raw, vw, clus, blocks)| {
                    let mut e: Vec<_> = raw
                        .into_iter()
                        .filter(|e| e.0 != e.1)
                        .map(|(u, v, w)| (u.min(v), u.max(v), w))
                        .collect();
                    e.sort_unstable_by_key(|x| (x.0, x.1));
                    e.dedup_by_key(|x| (x.0, x.1));
                    (SeqGraph::from_edges(n, Some(vw), &e).unwrap(), clus, blocks, p)
                })
        })
    }

    proptest! {
        #[test]
        fn contraction_matches_oracle_and_projection_preserves_cut((g, clus, blocks, p) in arb_case()) {
            let comm = Comm::new(p);
            let dg = DistGraph::distribute(&g, p);
            let labels: Vec<Vec<GlobalId>> = dg.locals().iter().map(|lg| {
                (0..lg.n_total() as LocalId).map(|l| clus[lg.global_id(l) as usize]).collect()
            }).collect();
            let level = contract(&comm, &dg, &labels, DEFAULT_DELTA);
            let n_c = level.coarse.n() as usize;
            let mut distinct = clus.clone();
            distinct.sort_unstable();
            distinct.dedup();
            prop_assert_eq!(n_c, distinct.len());
            let quota = cluster_quota(n_c as u64, p, DEFAULT_DELTA);
            for lg in level.coarse.locals() {
                prop_assert!(lg.n_owned() as u64 <= quota);
            }
            // every ghost mapping agrees with its owner
            prop_assert!(ghosts_synchronized(&comm, &dg, &level.mapping));
            let map = gather_mapping(&dg, &level);
            for u in 0..g.n() {
                for v in 0..g.n() {
                    prop_assert_eq!(clus[u] == clus[v], map[u] == map[v]);
                }
            }
            let (vw, edges) = oracle(&g, &map, n_c);
            let cg = level.coarse.gather();
            prop_assert!(cg.validate().is_ok());
            prop_assert_eq!(cg.vertex_weights(), vw.as_slice());
            prop_assert_eq!(adjacency(&cg), edges);

            // random coarse partition, projected
            let coarse_blocks: Vec<BlockId> = (0..n_c).map(|c| blocks[c % blocks.len()]).collect();
            let cp = DistPartition::from_owned(&comm, &level.coarse, (0..p).map(|r| {
                let d = level.coarse.dist();
                coarse_blocks[d.first(r) as usize..d.end(r) as usize].to_vec()
            }).collect(), 4);
            let fine = project_partition(&comm, &dg, &level, &cp);
            prop_assert!(ghosts_synchronized(&comm, &dg, &fine.labels));
            let coarse_cut = edge_cut(&comm, &level.coarse, &cp.labels).unwrap();
            prop_assert_eq!(edge_cut(&comm, &dg, &fine.labels).unwrap(), coarse_cut);
            let flat = fine.gather(&dg);
            prop_assert_eq!(g.block_weights(&flat, 4), cp.weights.clone());
            prop_assert_eq!(g.edge_cut(&flat), coarse_cut);
        }
    }
}
