use rustc_hash::FxHashMap as HashMap;

use super::SeqGraph;
use crate::comm::{Comm, Outbox, Wire};
use crate::types::{GlobalId, LocalId, Weight};

/// Consecutive global vertex ranges, one per PE.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexDistribution {
    offsets: Vec<GlobalId>,
}

impl VertexDistribution {
    /// Ranges of size `ceil(n/p)` for the first `n mod p` PEs and `floor(n/p)`
    /// for the rest.
    pub fn balanced(n: u64, p: usize) -> Self {
        assert!(p >= 1);
        let base = n / p as u64;
        let extra = (n % p as u64) as usize;
        let mut offsets = Vec::with_capacity(p + 1);
        offsets.push(0);
        for r in 0..p {
            let c = base + u64::from(r < extra);
            offsets.push(offsets[r] + c);
        }
        VertexDistribution { offsets }
    }

    pub fn from_counts(counts: &[u64]) -> Self {
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        offsets.push(0);
        for (r, c) in counts.iter().enumerate() {
            offsets.push(offsets[r] + c);
        }
        VertexDistribution { offsets }
    }

    pub fn num_pes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n(&self) -> u64 {
        *self.offsets.last().unwrap()
    }

    pub fn first(&self, rank: usize) -> GlobalId {
        self.offsets[rank]
    }

    pub fn end(&self, rank: usize) -> GlobalId {
        self.offsets[rank + 1]
    }

    pub fn count(&self, rank: usize) -> usize {
        (self.offsets[rank + 1] - self.offsets[rank]) as usize
    }

    #[inline]
    pub fn owner(&self, g: GlobalId) -> usize {
        debug_assert!(g < self.n(), "global id {g} out of range");
        self.offsets.partition_point(|&o| o <= g) - 1
    }
}

/// One PE's share of a [`DistGraph`]: owned vertices `0..n_owned` followed by
/// ghost vertices, which carry no outgoing edges.
#[derive(Clone, Debug)]
pub struct LocalGraph {
    rank: usize,
    first: GlobalId,
    n_owned: usize,
    xadj: Vec<usize>,
    adjncy: Vec<LocalId>,
    adjwgt: Vec<Weight>,
    vwgt: Vec<Weight>,
    ghost_global: Vec<GlobalId>,
    ghost_owner: Vec<u32>,
    ghost_index: HashMap<GlobalId, LocalId>,
    // PEs holding each owned vertex as a ghost
    iface_xadj: Vec<usize>,
    iface_pes: Vec<u32>,
}

impl LocalGraph {
    /// Builds the local CSR from adjacency lists over global IDs. Ghost
    /// weights are left at zero until filled in by the caller.
    pub(crate) fn from_global(
        rank: usize,
        dist: &VertexDistribution,
        vwgt: Vec<Weight>,
        xadj: Vec<usize>,
        targets: &[GlobalId],
        weights: Vec<Weight>,
    ) -> LocalGraph {
        let first = dist.first(rank);
        let n_owned = dist.count(rank);
        assert_eq!(vwgt.len(), n_owned);
        assert_eq!(xadj.len(), n_owned + 1);
        let end = first + n_owned as GlobalId;
        let mut ghost_global = Vec::new();
        let mut ghost_owner = Vec::new();
        let mut ghost_index: HashMap<GlobalId, LocalId> = HashMap::default();
        let mut adjncy = Vec::with_capacity(targets.len());
        for &t in targets {
            let l = if t >= first && t < end {
                (t - first) as LocalId
            } else {
                *ghost_index.entry(t).or_insert_with(|| {
                    ghost_global.push(t);
                    ghost_owner.push(dist.owner(t) as u32);
                    (n_owned + ghost_global.len() - 1) as LocalId
                })
            };
            adjncy.push(l);
        }
        let mut all_w = vwgt;
        all_w.resize(n_owned + ghost_global.len(), 0);
        let mut g = LocalGraph {
            rank,
            first,
            n_owned,
            xadj,
            adjncy,
            adjwgt: weights,
            vwgt: all_w,
            ghost_global,
            ghost_owner,
            ghost_index,
            iface_xadj: Vec::new(),
            iface_pes: Vec::new(),
        };
        g.build_interface();
        g
    }

    fn build_interface(&mut self) {
        let mut xadj = Vec::with_capacity(self.n_owned + 1);
        xadj.push(0);
        let mut pes = Vec::new();
        for u in 0..self.n_owned {
            let start = pes.len();
            for i in self.xadj[u]..self.xadj[u + 1] {
                let v = self.adjncy[i] as usize;
                if v >= self.n_owned {
                    let q = self.ghost_owner[v - self.n_owned];
                    if !pes[start..].contains(&q) {
                        pes.push(q);
                    }
                }
            }
            xadj.push(pes.len());
        }
        self.iface_xadj = xadj;
        self.iface_pes = pes;
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn first(&self) -> GlobalId {
        self.first
    }

    pub fn n_owned(&self) -> usize {
        self.n_owned
    }

    pub fn n_ghost(&self) -> usize {
        self.ghost_global.len()
    }

    pub fn n_total(&self) -> usize {
        self.n_owned + self.ghost_global.len()
    }

    /// Directed edges stored on this PE.
    pub fn n_edges(&self) -> usize {
        self.adjncy.len()
    }

    #[inline]
    pub fn is_owned(&self, l: LocalId) -> bool {
        (l as usize) < self.n_owned
    }

    #[inline]
    pub fn global_id(&self, l: LocalId) -> GlobalId {
        let l = l as usize;
        if l < self.n_owned {
            self.first + l as GlobalId
        } else {
            self.ghost_global[l - self.n_owned]
        }
    }

    #[inline]
    pub fn local_id(&self, g: GlobalId) -> Option<LocalId> {
        if g >= self.first && g < self.first + self.n_owned as GlobalId {
            Some((g - self.first) as LocalId)
        } else {
            self.ghost_index.get(&g).copied()
        }
    }

    /// Rank of the PE owning local vertex `l`.
    #[inline]
    pub fn owner(&self, l: LocalId) -> usize {
        let l = l as usize;
        if l < self.n_owned {
            self.rank
        } else {
            self.ghost_owner[l - self.n_owned] as usize
        }
    }

    #[inline]
    pub fn degree(&self, u: LocalId) -> usize {
        self.xadj[u as usize + 1] - self.xadj[u as usize]
    }

    #[inline]
    pub fn neighbors(&self, u: LocalId) -> impl Iterator<Item = (LocalId, Weight)> + '_ {
        let r = self.xadj[u as usize]..self.xadj[u as usize + 1];
        self.adjncy[r.clone()].iter().copied().zip(self.adjwgt[r].iter().copied())
    }

    #[inline]
    pub fn vertex_weight(&self, l: LocalId) -> Weight {
        self.vwgt[l as usize]
    }

    pub fn owned_weights(&self) -> &[Weight] {
        &self.vwgt[..self.n_owned]
    }

    /// PEs that hold owned vertex `u` as a ghost.
    #[inline]
    pub fn adjacent_pes(&self, u: LocalId) -> &[u32] {
        &self.iface_pes[self.iface_xadj[u as usize]..self.iface_xadj[u as usize + 1]]
    }

    pub fn is_interface(&self, u: LocalId) -> bool {
        !self.adjacent_pes(u).is_empty()
    }
}

/// Graph distributed over the members of a PE group by consecutive vertex
/// ranges. `locals[r]` is the share of group rank `r`.
#[derive(Clone, Debug)]
pub struct DistGraph {
    dist: VertexDistribution,
    locals: Vec<LocalGraph>,
    m: u64,
    total_weight: Weight,
    max_vertex_weight: Weight,
    min_vertex_weight: Weight,
}

/// Owned vertices of one PE with adjacency over global IDs; the input to
/// [`DistGraph::assemble`].
#[derive(Clone, Debug, Default)]
pub struct OwnedAdjacency {
    pub vwgt: Vec<Weight>,
    pub xadj: Vec<usize>,
    pub targets: Vec<GlobalId>,
    pub weights: Vec<Weight>,
}

impl DistGraph {
    /// Splits `g` into `p` balanced consecutive ranges and materializes the
    /// ghost vertices of every PE.
    pub fn distribute(g: &SeqGraph, p: usize) -> DistGraph {
        let dist = VertexDistribution::balanced(g.n() as u64, p);
        let locals: Vec<LocalGraph> = (0..p)
            .map(|r| {
                let (a, b) = (dist.first(r) as usize, dist.end(r) as usize);
                let off = g.xadj()[a];
                let xadj: Vec<usize> = g.xadj()[a..=b].iter().map(|x| x - off).collect();
                let range = off..g.xadj()[b];
                let targets: Vec<GlobalId> = g.adjncy()[range.clone()].iter().map(|&v| v as GlobalId).collect();
                let mut lg = LocalGraph::from_global(
                    r,
                    &dist,
                    g.vertex_weights()[a..b].to_vec(),
                    xadj,
                    &targets,
                    g.adjwgt()[range].to_vec(),
                );
                for i in 0..lg.n_ghost() {
                    lg.vwgt[lg.n_owned + i] = g.vertex_weight(lg.ghost_global[i] as LocalId);
                }
                lg
            })
            .collect();
        DistGraph {
            dist,
            locals,
            m: g.m() as u64,
            total_weight: g.total_weight(),
            max_vertex_weight: g.max_vertex_weight(),
            min_vertex_weight: g.vertex_weights().iter().copied().min().unwrap_or(1),
        }
    }

    /// Builds a distributed graph from per-PE owned adjacency. Ghost weights
    /// and global totals are obtained through `comm`.
    pub fn assemble(comm: &Comm, dist: VertexDistribution, parts: Vec<OwnedAdjacency>) -> DistGraph {
        assert_eq!(parts.len(), comm.size());
        assert_eq!(dist.num_pes(), comm.size());
        let mut locals: Vec<LocalGraph> = comm.exec().map_owned(parts, |r, a| {
            LocalGraph::from_global(r, &dist, a.vwgt, a.xadj, &a.targets, a.weights)
        });
        let announce: Vec<Vec<(LocalId, Weight)>> = comm.run_ref(&locals, |_, lg| {
            (0..lg.n_owned as LocalId)
                .filter(|&u| lg.is_interface(u))
                .map(|u| (u, lg.vertex_weight(u)))
                .collect()
        });
        let ghosts = exchange_interface(comm, &locals, announce);
        comm.run(&mut locals, |r, lg| {
            for &(g, w) in &ghosts[r] {
                lg.vwgt[g as usize] = w;
            }
            debug_assert!(lg.vwgt.iter().all(|&w| w >= 1), "ghost weight missing");
        });
        let summary: Vec<(i64, i64, i64, i64)> = comm.run_ref(&locals, |_, lg| {
            let w = lg.owned_weights();
            (
                lg.n_edges() as i64,
                w.iter().sum(),
                w.iter().copied().max().unwrap_or(Weight::MIN),
                w.iter().copied().min().unwrap_or(Weight::MAX),
            )
        });
        let (edges, total, max, min) = comm.allreduce(summary, |a, b| {
            (a.0 + b.0, a.1 + b.1, a.2.max(b.2), a.3.min(b.3))
        });
        DistGraph {
            dist,
            locals,
            m: (edges / 2) as u64,
            total_weight: total,
            max_vertex_weight: max.max(0),
            min_vertex_weight: if min == Weight::MAX { 1 } else { min },
        }
    }

    /// Reassembles the whole graph in a single address space. Inspection and
    /// tests only; algorithms use [`DistGraph::gather_via`].
    pub fn gather(&self) -> SeqGraph {
        let lists: Vec<Vec<(u64, u64, i64)>> = self.locals.iter().map(owned_records).collect();
        build_seq(self.n() as usize, lists.into_iter().flatten())
    }

    /// All-gathers the graph over `comm`; every member obtains the same copy.
    pub fn gather_via(&self, comm: &Comm) -> SeqGraph {
        let lists: Vec<Vec<(u64, u64, i64)>> = comm.run_ref(&self.locals, |_, lg| owned_records(lg));
        let all = comm.allgather(lists);
        build_seq(self.n() as usize, all.into_iter().flatten())
    }

    pub fn num_pes(&self) -> usize {
        self.locals.len()
    }

    pub fn dist(&self) -> &VertexDistribution {
        &self.dist
    }

    pub fn locals(&self) -> &[LocalGraph] {
        &self.locals
    }

    pub fn local(&self, rank: usize) -> &LocalGraph {
        &self.locals[rank]
    }

    pub fn n(&self) -> u64 {
        self.dist.n()
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn total_weight(&self) -> Weight {
        self.total_weight
    }

    pub fn max_vertex_weight(&self) -> Weight {
        self.max_vertex_weight
    }

    pub fn min_vertex_weight(&self) -> Weight {
        self.min_vertex_weight
    }
}

// Records encoding one PE's owned vertices: (u, u, c(u)) for the vertex
// itself followed by (u, v, w) for each out-edge, marked by v = u.
fn owned_records(lg: &LocalGraph) -> Vec<(u64, u64, i64)> {
    let mut out = Vec::with_capacity(lg.n_owned() + lg.n_edges());
    for u in 0..lg.n_owned() as LocalId {
        let gu = lg.global_id(u);
        out.push((gu, gu, lg.vertex_weight(u)));
        for (v, w) in lg.neighbors(u) {
            out.push((gu, lg.global_id(v), w));
        }
    }
    out
}

fn build_seq(n: usize, records: impl Iterator<Item = (u64, u64, i64)>) -> SeqGraph {
    let mut vwgt = vec![0; n];
    let mut adj: Vec<Vec<(LocalId, Weight)>> = vec![Vec::new(); n];
    for (u, v, w) in records {
        if u == v {
            vwgt[u as usize] = w;
        } else {
            adj[u as usize].push((v as LocalId, w));
        }
    }
    let mut xadj = Vec::with_capacity(n + 1);
    xadj.push(0);
    let mut adjncy = Vec::new();
    let mut adjwgt = Vec::new();
    for a in adj {
        for (v, w) in a {
            adjncy.push(v);
            adjwgt.push(w);
        }
        xadj.push(adjncy.len());
    }
    SeqGraph::from_csr_unchecked(xadj, adjncy, adjwgt, vwgt)
}

/// Sends `(u, value)` for every listed owned vertex `u` to each PE holding
/// `u` as a ghost. Returns, per PE, `(ghost local id, value)` pairs in
/// arrival order.
pub fn exchange_interface<T>(
    comm: &Comm,
    locals: &[LocalGraph],
    changed: Vec<Vec<(LocalId, T)>>,
) -> Vec<Vec<(LocalId, T)>>
where
    T: Wire + Copy + Send + Sync,
{
    let p = comm.size();
    let outboxes: Vec<Outbox<(GlobalId, T)>> = comm.exec().map_owned(changed, |r, list| {
        let lg = &locals[r];
        let mut ob = Outbox::new(p);
        for (u, val) in list {
            debug_assert!(lg.is_owned(u));
            let g = lg.global_id(u);
            for &q in lg.adjacent_pes(u) {
                ob.push(q as usize, (g, val));
            }
        }
        ob
    });
    let inboxes = comm.alltoall(outboxes);
    comm.exec().map_owned(inboxes, |r, inbox| {
        let lg = &locals[r];
        inbox
            .records()
            .map(|(g, val)| (lg.local_id(g).expect("update for unknown ghost"), val))
            .collect()
    })
}
