//! Block assignments over a [`DistGraph`] and the collectives that keep them
//! consistent.

use crate::comm::{Comm, Outbox, Wire};
use crate::error::{Error, Result};
use crate::graph::{exchange_interface, DistGraph};
use crate::types::{BlockId, GlobalId, LocalId, Weight};

/// A k-way partition of a distributed graph.
///
/// `labels[r]` covers the owned and ghost vertices of PE `r`. `weights` is
/// the global block-weight vector; it is the result of a collective and
/// therefore identical on every PE.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistPartition {
    pub labels: Vec<Vec<BlockId>>,
    pub weights: Vec<Weight>,
}

impl DistPartition {
    /// Builds a partition from owned labels only: ghost labels are fetched
    /// from their owners and block weights are summed globally.
    pub fn from_owned(comm: &Comm, g: &DistGraph, owned: Vec<Vec<BlockId>>, k: usize) -> DistPartition {
        let mut labels: Vec<Vec<BlockId>> = comm.exec().map_owned(owned, |r, mut l| {
            let lg = g.local(r);
            assert_eq!(l.len(), lg.n_owned(), "labels do not cover the owned vertices");
            l.resize(lg.n_total(), BlockId::MAX);
            l
        });
        let all: Vec<Vec<LocalId>> = comm.run_ref(g.locals(), |_, lg| {
            (0..lg.n_owned() as LocalId).filter(|&u| lg.is_interface(u)).collect()
        });
        sync_ghosts(comm, g, &mut labels, all);
        let weights = block_weights(comm, g, &labels, k);
        DistPartition { labels, weights }
    }

    /// Every vertex in block 0.
    pub fn trivial(g: &DistGraph) -> DistPartition {
        DistPartition {
            labels: g.locals().iter().map(|lg| vec![0; lg.n_total()]).collect(),
            weights: vec![g.total_weight()],
        }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn owned<'a>(&'a self, g: &DistGraph, rank: usize) -> &'a [BlockId] {
        &self.labels[rank][..g.local(rank).n_owned()]
    }

    /// Labels in global vertex order. Inspection and tests only.
    pub fn gather(&self, g: &DistGraph) -> Vec<BlockId> {
        (0..g.num_pes()).flat_map(|r| self.owned(g, r).iter().copied()).collect()
    }

    /// Labels in global vertex order, collected at rank 0 by a tree
    /// reduction.
    pub fn gather_via(&self, comm: &Comm, g: &DistGraph) -> Vec<BlockId> {
        let parts: Vec<Vec<BlockId>> = comm.run_ranks(|r| self.owned(g, r).to_vec());
        comm.tree_reduce(parts, |mut a, b| {
            a.extend(b);
            a
        })
    }

    /// Weight of the heaviest block above its cap, or 0.
    pub fn max_overload(&self, caps: &[Weight]) -> Weight {
        self.weights.iter().zip(caps).map(|(w, c)| (w - c).max(0)).max().unwrap_or(0)
    }

    pub fn total_overload(&self, caps: &[Weight]) -> Weight {
        self.weights.iter().zip(caps).map(|(w, c)| (w - c).max(0)).sum()
    }

    pub fn is_feasible(&self, caps: &[Weight]) -> bool {
        self.weights.iter().zip(caps).all(|(w, c)| w <= c)
    }
}

/// Global block weights, summed from the owned labels of every PE.
pub fn block_weights(comm: &Comm, g: &DistGraph, labels: &[Vec<BlockId>], k: usize) -> Vec<Weight> {
    let local: Vec<Vec<Weight>> = comm.run_ref(g.locals(), |r, lg| {
        let mut w = vec![0; k];
        for u in 0..lg.n_owned() {
            w[labels[r][u] as usize] += lg.vertex_weight(u as LocalId);
        }
        w
    });
    comm.allreduce_sum(local)
}

/// Sends the current label of each listed owned vertex to the PEs that hold
/// it as a ghost and stores it there.
pub fn sync_ghosts<T>(comm: &Comm, g: &DistGraph, labels: &mut [Vec<T>], changed: Vec<Vec<LocalId>>)
where
    T: Wire + Copy + Send + Sync,
{
    let updates: Vec<Vec<(LocalId, T)>> = comm.exec().map_owned(changed, |r, list| {
        list.into_iter().map(|u| (u, labels[r][u as usize])).collect()
    });
    let recv = exchange_interface(comm, g.locals(), updates);
    comm.run(labels, |r, l| {
        for &(ghost, val) in &recv[r] {
            l[ghost as usize] = val;
        }
    });
}

/// Whether every ghost label equals the label at the owner.
pub fn ghosts_synchronized<T>(comm: &Comm, g: &DistGraph, labels: &[Vec<T>]) -> bool
where
    T: Wire + Copy + Send + Sync + PartialEq,
{
    let all: Vec<Vec<(LocalId, T)>> = comm.run_ref(g.locals(), |r, lg| {
        (0..lg.n_owned() as LocalId)
            .filter(|&u| lg.is_interface(u))
            .map(|u| (u, labels[r][u as usize]))
            .collect()
    });
    let recv = exchange_interface(comm, g.locals(), all);
    let ok: Vec<bool> = comm.run_ref(&recv, |r, list| list.iter().all(|&(ghost, v)| labels[r][ghost as usize] == v));
    !comm.allreduce_or(ok.into_iter().map(|b| !b).collect())
}

/// Total weight of edges between different blocks. Each undirected edge is
/// counted once, at the owner of its endpoint with the smaller global ID.
pub fn edge_cut(comm: &Comm, g: &DistGraph, labels: &[Vec<BlockId>]) -> Result<Weight> {
    if labels.len() != g.num_pes()
        || labels.iter().zip(g.locals()).any(|(l, lg)| l.len() != lg.n_total())
    {
        return Err(Error::Contract("partition does not cover every vertex".into()));
    }
    if cfg!(debug_assertions) && !ghosts_synchronized(comm, g, labels) {
        return Err(Error::Contract("ghost labels are out of date".into()));
    }
    let local: Vec<Weight> = comm.run_ref(g.locals(), |r, lg| {
        let l = &labels[r];
        let mut cut = 0;
        for u in 0..lg.n_owned() as LocalId {
            let gu = lg.global_id(u);
            for (v, w) in lg.neighbors(u) {
                if gu < lg.global_id(v) && l[u as usize] != l[v as usize] {
                    cut += w;
                }
            }
        }
        cut
    });
    Ok(comm.allreduce_sum(local.into_iter().map(|c| vec![c]).collect())[0])
}

/// Routes `(global id, value)` records to the owners of the vertices.
pub(crate) fn route_to_owners<T>(
    comm: &Comm,
    g: &DistGraph,
    records: Vec<Vec<(GlobalId, T)>>,
) -> Vec<Vec<(LocalId, T)>>
where
    T: Wire + Copy + Send + Sync,
{
    let p = comm.size();
    let dist = g.dist();
    let outboxes: Vec<Outbox<(GlobalId, T)>> = comm.exec().map_owned(records, |_, list| {
        let mut ob = Outbox::new(p);
        for (gid, v) in list {
            ob.push(dist.owner(gid), (gid, v));
        }
        ob
    });
    let inboxes = comm.alltoall(outboxes);
    comm.exec().map_owned(inboxes, |r, inbox| {
        let first = dist.first(r);
        inbox.records().map(|(gid, v)| ((gid - first) as LocalId, v)).collect()
    })
}

/// Gives every empty block one vertex taken from a block that keeps
/// positive weight without it. Cheapest first: a vertex costs the weight of
/// its edges into its own block, ties go to the smaller global ID. Label
/// propagation may shrink a block to a single vertex, and splitting such a
/// block leaves empty sub-blocks behind. Returns the number of moves.
pub fn fill_empty_blocks(comm: &Comm, g: &DistGraph, part: &mut DistPartition) -> usize {
    let mut moved = 0;
    loop {
        let empty: Vec<BlockId> = (0..part.k() as BlockId).filter(|&b| part.weights[b as usize] == 0).collect();
        if empty.is_empty() {
            return moved;
        }
        let want = empty.len();
        // (cost, gid, weight, block) of the cheapest owned donors on each PE
        let local: Vec<Vec<(Weight, GlobalId, Weight, BlockId)>> = comm.run_ref(g.locals(), |r, lg| {
            let l = &part.labels[r];
            let mut c: Vec<_> = (0..lg.n_owned() as LocalId)
                .filter(|&u| part.weights[l[u as usize] as usize] > lg.vertex_weight(u))
                .map(|u| {
                    let own: Weight = lg.neighbors(u).filter(|&(v, _)| l[v as usize] == l[u as usize]).map(|(_, w)| w).sum();
                    (own, lg.global_id(u), lg.vertex_weight(u), l[u as usize])
                })
                .collect();
            c.sort_unstable();
            c.truncate(want);
            c
        });
        let merged = comm.tree_reduce(local, |mut a, b| {
            a.extend(b);
            a.sort_unstable();
            a
        });
        let candidates = comm.broadcast(0, merged);

        // the same choice on every PE: donors must keep positive weight
        let mut weights = part.weights.clone();
        let mut picks: Vec<(GlobalId, BlockId)> = Vec::new();
        for (&(_, gid, w, b), &target) in candidates.iter().zip(&empty) {
            if weights[b as usize] <= w {
                continue;
            }
            weights[b as usize] -= w;
            weights[target as usize] += w;
            picks.push((gid, target));
        }
        if picks.is_empty() {
            return moved;
        }
        moved += picks.len();
        let dist = g.dist();
        let changed: Vec<Vec<LocalId>> = comm.run(&mut part.labels, |r, l| {
            let mut ch = Vec::new();
            for &(gid, b) in &picks {
                if dist.owner(gid) == r {
                    let u = (gid - dist.first(r)) as LocalId;
                    l[u as usize] = b;
                    ch.push(u);
                }
            }
            ch
        });
        sync_ghosts(comm, g, &mut part.labels, changed);
        part.weights = weights;
    }
}
