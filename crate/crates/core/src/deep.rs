//! Deep multilevel driver: coarsening past `C * k` with graph replication
//! across PE sub-groups, a trivial base case, and partition extension by
//! block-induced subgraphs on the way back up.
//!
//! During extension every block stands for a consecutive range of final
//! block IDs. A block covering `f` final blocks is split into at most `K`
//! sub-blocks whose ranges divide its own as evenly as possible, so `k` need
//! not be a power of two.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rustc_hash::FxHashMap;

use crate::balancer::{rebalance, DEFAULT_L};
use crate::clustering::{cluster, ClusterParams};
use crate::comm::{AllToAllMode, Comm, Exec, Outbox, TrafficSnapshot};
use crate::contraction::{contract, project_partition, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::graph::{l_max, DistGraph, SeqGraph};
use crate::initial::{partition_parts, replicate_and_select, PartSpec};
use crate::partition::{edge_cut, fill_empty_blocks, route_to_owners, DistPartition};
use crate::refinement::{refine, RefineParams};
use crate::rng::derive;
use crate::schedule::CHUNK_SIZE;
use crate::types::{ceil2, ceil2_ratio, BlockId, GlobalId, LocalId, Weight};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Preset {
    #[default]
    Fast,
    Strong,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fast => "fast",
            Preset::Strong => "strong",
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fast" => Ok(Preset::Fast),
            "strong" => Ok(Preset::Strong),
            other => Err(Error::InvalidConfig(format!("unknown preset `{other}` (expected fast or strong)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepConfig {
    pub k: usize,
    pub eps: f64,
    /// Contraction limit `C`.
    pub contraction_limit: u64,
    /// Fan-out `K` of one extension step.
    pub subdivision: usize,
    pub lp_iterations: usize,
    pub refine_iterations: usize,
    /// Candidates per block and balancing round.
    pub balance_l: usize,
    pub alpha: usize,
    pub beta: usize,
    pub chunk_size: usize,
    /// Slack of the cluster-to-PE mapping during contraction.
    pub delta: f64,
    pub seed: u64,
    pub preset: Preset,
    pub mode: AllToAllMode,
    pub exec: Exec,
}

impl DeepConfig {
    pub fn new(k: usize, preset: Preset) -> Self {
        let (c, iters) = match preset {
            Preset::Fast => (2000, 3),
            Preset::Strong => (5000, 5),
        };
        DeepConfig {
            k,
            eps: 0.03,
            contraction_limit: c,
            subdivision: 2,
            lp_iterations: iters,
            refine_iterations: iters,
            balance_l: DEFAULT_L,
            alpha: 8,
            beta: 128,
            chunk_size: CHUNK_SIZE,
            delta: DEFAULT_DELTA,
            seed: 0,
            preset,
            mode: AllToAllMode::default(),
            exec: Exec::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return bad(format!("imbalance {} is not a non-negative number", self.eps));
        }
        if self.contraction_limit < 2 {
            return bad("contraction limit must be at least 2".into());
        }
        if self.subdivision < 2 || !self.subdivision.is_power_of_two() {
            return bad(format!("K = {} must be a power of two >= 2", self.subdivision));
        }
        if self.lp_iterations == 0 || self.refine_iterations == 0 {
            return bad("iteration counts must be positive".into());
        }
        if self.balance_l == 0 || self.alpha == 0 || self.beta == 0 || self.chunk_size == 0 {
            return bad("balancer and batch parameters must be positive".into());
        }
        if !(self.delta >= 1.0) {
            return bad(format!("delta = {} must be at least 1", self.delta));
        }
        Ok(())
    }
}

/// Structural record of what the driver did, in execution order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    Replicate { n: u64, pes: usize, copies: usize },
    Coarsen { n: u64, coarse_n: u64, pes: usize },
    /// The last level did not shrink enough; coarsening stops here.
    Converged { n: u64, pes: usize },
    BaseCase { n: u64, pes: usize },
    Extend { n: u64, pes: usize, from: usize, to: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseTimes {
    pub coarsening: Duration,
    pub initial: Duration,
    pub refinement: Duration,
}

/// Output of [`deep_partition`].
#[derive(Clone, Debug)]
pub struct DeepOutput {
    /// Final partition with block IDs `0..k`.
    pub part: DistPartition,
    pub l_max: Weight,
    pub feasible: bool,
    /// Balancer calls that ended without reaching their caps.
    pub balance_failures: usize,
    pub trace: Vec<TraceEvent>,
    pub times: PhaseTimes,
}

struct Ctx<'a> {
    cfg: &'a DeepConfig,
    total: Weight,
    times: Mutex<PhaseTimes>,
    failures: AtomicUsize,
}

impl Ctx<'_> {
    /// Weight bound of a block that will end up as `f` final blocks on a
    /// level whose heaviest vertex weighs `maxw`. The imbalance allowance
    /// is spread geometrically over the `log k` halvings, so that a block
    /// meeting its bound leaves room for its descendants.
    fn cap(&self, f: usize, maxw: Weight) -> Weight {
        let k = self.cfg.k;
        if f == 1 {
            return l_max(self.total, k, self.cfg.eps, maxw);
        }
        let share = f as f64 * self.total as f64 / k as f64;
        let used = ((k as f64) / f as f64).ln() / (k as f64).ln();
        let adapted = (share * (1.0 + self.cfg.eps).powf(used)).floor() as Weight;
        let floor = (f as i128 * self.total as i128).div_euclid(k as i128) as Weight + maxw;
        adapted.max(floor).min(self.total.max(1))
    }

    fn caps(&self, layout: &[(u32, u32)], maxw: Weight) -> Vec<Weight> {
        layout.iter().map(|&(_, f)| self.cap(f as usize, maxw)).collect()
    }

    fn add_time(&self, which: fn(&mut PhaseTimes) -> &mut Duration, d: Duration) {
        *which(&mut self.times.lock().expect("timer lock")) += d;
    }
}

// a partition of one level together with the final-block range
// (first id, count) of every block
struct Solved {
    part: DistPartition,
    layout: Vec<(u32, u32)>,
    trace: Vec<TraceEvent>,
}

/// Partitions `g` into `cfg.k` blocks on the PEs of `comm`.
///
/// Infeasibility is reported in the output rather than as an error; errors
/// are reserved for invalid configurations.
pub fn deep_partition(comm: &Comm, g: &DistGraph, cfg: &DeepConfig) -> Result<DeepOutput> {
    cfg.validate()?;
    let p = comm.size();
    if !p.is_power_of_two() {
        return Err(Error::InvalidConfig(format!("the number of PEs ({p}) must be a power of two")));
    }
    let ctx = Ctx {
        cfg,
        total: g.total_weight(),
        times: Mutex::new(PhaseTimes::default()),
        failures: AtomicUsize::new(0),
    };
    let solved = deep_rec(&ctx, comm, g, cfg.seed, true)?;
    assert_eq!(solved.layout.len(), cfg.k, "extension must reach k blocks");
    debug_assert!(solved.layout.iter().enumerate().all(|(i, &(lo, f))| lo as usize == i && f == 1));
    let l = l_max(g.total_weight(), cfg.k, cfg.eps, g.max_vertex_weight());
    let feasible = solved.part.weights.iter().all(|&w| w <= l);
    let times = ctx.times.into_inner().expect("timer lock");
    Ok(DeepOutput {
        part: solved.part,
        l_max: l,
        feasible,
        balance_failures: ctx.failures.load(Ordering::Relaxed),
        trace: solved.trace,
        times,
    })
}

/// Number of graph copies for `n` vertices on `p` PEs: `P / ceil2(n / C)`
/// below `C * P` vertices, else one. `n / C` is rounded down, so it is
/// always below `P` and the count divides `P`.
fn replica_count(n: u64, c: u64, p: usize) -> usize {
    if p > 1 && n < c * p as u64 {
        p / ceil2((n / c).max(1)) as usize
    } else {
        1
    }
}

fn deep_rec(ctx: &Ctx, comm: &Comm, g: &DistGraph, seed: u64, top: bool) -> Result<Solved> {
    let cfg = ctx.cfg;
    let n = g.n();
    let p = comm.size();
    let c = cfg.contraction_limit;
    let mut trace = Vec::new();
    let mut solved = None;

    if n > c * cfg.k.min(cfg.subdivision) as u64 {
        let copies = replica_count(n, c, p);
        if copies > 1 {
            return replicate(ctx, comm, g, seed, top, copies);
        }
        let t = Instant::now();
        let params = ClusterParams {
            k: cfg.k,
            contraction_limit: c,
            eps: cfg.eps,
            iterations: cfg.lp_iterations,
            alpha: cfg.alpha,
            beta: cfg.beta,
            chunk_size: cfg.chunk_size,
        };
        let clustering = cluster(comm, g, &params, derive(seed, &[1]));
        let level = contract(comm, g, &clustering.labels, cfg.delta);
        ctx.add_time(|t| &mut t.coarsening, t.elapsed());
        let coarse_n = level.coarse.n();
        if coarse_n as f64 * 1.05 <= n as f64 {
            trace.push(TraceEvent::Coarsen { n, coarse_n, pes: p });
            let coarse = deep_rec(ctx, comm, &level.coarse, derive(seed, &[2]), false)?;
            trace.extend(coarse.trace);
            let t = Instant::now();
            let mut part = project_partition(comm, g, &level, &coarse.part);
            ctx.add_time(|t| &mut t.coarsening, t.elapsed());
            balance_and_refine(ctx, comm, g, &mut part, &coarse.layout, derive(seed, &[3]));
            solved = Some((part, coarse.layout));
        } else {
            trace.push(TraceEvent::Converged { n, pes: p });
        }
    }

    let (mut part, mut layout) = solved.unwrap_or_else(|| {
        trace.push(TraceEvent::BaseCase { n, pes: p });
        (DistPartition::trivial(g), vec![(0, cfg.k as u32)])
    });

    let target = if top { cfg.k } else { cfg.k.min(ceil2_ratio(n, c) as usize) };
    let mut round = 0u64;
    while layout.len() < target {
        let per = target.div_ceil(layout.len());
        let splits: Vec<usize> = layout.iter().map(|&(_, f)| (f as usize).min(cfg.subdivision).min(per)).collect();
        if splits.iter().all(|&s| s == 1) {
            break;
        }
        let ext_seed = if round == 0 { seed } else { derive(seed, &[4, round]) };
        let from = layout.len();
        let t = Instant::now();
        (part, layout) = extend(ctx, comm, g, &part, &layout, &splits, ext_seed);
        ctx.add_time(|t| &mut t.initial, t.elapsed());
        trace.push(TraceEvent::Extend {
            n,
            pes: p,
            from,
            to: layout.len(),
        });
        balance_and_refine(ctx, comm, g, &mut part, &layout, derive(seed, &[5, round]));
        round += 1;
    }
    Ok(Solved { part, layout, trace })
}

/// Gathers `g`, hands a full copy to each of `copies` PE sub-groups and
/// keeps the best of their partitions.
fn replicate(ctx: &Ctx, comm: &Comm, g: &DistGraph, seed: u64, top: bool, copies: usize) -> Result<Solved> {
    let p = comm.size();
    let sub_p = p / copies;
    let seq = g.gather_via(comm);
    let groups = comm.split(copies)?;
    let copy = DistGraph::distribute(&seq, sub_p);
    let results: Vec<Result<Solved>> =
        comm.exec().map_range(copies, |i| deep_rec(ctx, &groups[i], &copy, derive(seed, &[6, i as u64]), top));
    let results: Vec<Solved> = results.into_iter().collect::<Result<_>>()?;

    // each group scores its own copy; the parent group agrees on the best
    let maxw = g.max_vertex_weight();
    let mut keys = Vec::with_capacity(p);
    for (i, res) in results.iter().enumerate() {
        let caps = ctx.caps(&res.layout, maxw);
        let overload = res.part.max_overload(&caps);
        let cut = edge_cut(&groups[i], &copy, &res.part.labels)?;
        keys.extend(std::iter::repeat_n((u8::from(overload > 0), overload, cut, i as u32), sub_p));
    }
    let winner = comm.allreduce(keys, std::cmp::min).3 as usize;
    let won = &results[winner];
    let layout = comm.broadcast(winner * sub_p, won.layout.clone());

    let records: Vec<Vec<(GlobalId, BlockId)>> = comm.run_ranks(|r| {
        if r / sub_p != winner {
            return Vec::new();
        }
        let lg = copy.local(r % sub_p);
        let labels = &won.part.labels[r % sub_p];
        (0..lg.n_owned() as LocalId).map(|u| (lg.global_id(u), labels[u as usize])).collect()
    });
    let routed = route_to_owners(comm, g, records);
    let owned: Vec<Vec<BlockId>> = comm.exec().map_owned(routed, |r, list| {
        let mut out = vec![BlockId::MAX; g.local(r).n_owned()];
        for (u, b) in list {
            out[u as usize] = b;
        }
        debug_assert!(out.iter().all(|&b| b != BlockId::MAX));
        out
    });
    let part = DistPartition::from_owned(comm, g, owned, layout.len());
    let mut trace = vec![TraceEvent::Replicate {
        n: g.n(),
        pes: p,
        copies,
    }];
    trace.extend(results.into_iter().nth(winner).expect("winner").trace);
    Ok(Solved { part, layout, trace })
}

/// Splits `f` final blocks starting at `lo` into `s` consecutive ranges.
fn split_range(lo: u32, f: u32, s: usize) -> Vec<(u32, u32)> {
    let s = s as u32;
    let (base, rem) = (f / s, f % s);
    let mut at = lo;
    (0..s)
        .map(|j| {
            let size = base + u32::from(j < rem);
            let r = (at, size);
            at += size;
            r
        })
        .collect()
}

/// One extension step: block `b` is split into `splits[b]` sub-blocks.
fn extend(
    ctx: &Ctx,
    comm: &Comm,
    g: &DistGraph,
    part: &DistPartition,
    layout: &[(u32, u32)],
    splits: &[usize],
    seed: u64,
) -> (DistPartition, Vec<(u32, u32)>) {
    let maxw = g.max_vertex_weight();
    let ranges: Vec<Vec<(u32, u32)>> = layout.iter().zip(splits).map(|(&(lo, f), &s)| split_range(lo, f, s)).collect();
    let specs: Vec<Vec<PartSpec>> = ranges
        .iter()
        .map(|rs| {
            rs.iter()
                .map(|&(_, f)| PartSpec {
                    blocks: f as usize,
                    cap: ctx.cap(f as usize, maxw),
                })
                .collect()
        })
        .collect();
    let mut offsets = vec![0u32; layout.len() + 1];
    for (b, &s) in splits.iter().enumerate() {
        offsets[b + 1] = offsets[b] + s as u32;
    }
    let new_layout: Vec<(u32, u32)> = ranges.into_iter().flatten().collect();

    // a lone block on a small graph is split on every replica; on a large
    // one a single PE takes it like any other block
    if layout.len() == 1 && replica_count(g.n(), ctx.cfg.contraction_limit, comm.size()) > 1 {
        let best = replicate_and_select(comm, g, &specs[0], seed);
        let labels: Vec<Vec<BlockId>> = comm.run_ref(g.locals(), |_, lg| {
            (0..lg.n_total() as LocalId).map(|l| best.part[lg.global_id(l) as usize]).collect()
        });
        let part = DistPartition {
            labels,
            weights: best.block_weights,
        };
        return (part, new_layout);
    }

    let blocks = distribute_blocks(comm, g, part);
    let results: Vec<Vec<(GlobalId, BlockId)>> = comm.exec().map_owned(blocks, |_, list| {
        let mut out = Vec::new();
        for bg in list {
            let b = bg.block as usize;
            if splits[b] == 1 || bg.graph.n() == 0 {
                continue;
            }
            let sub = partition_parts(&bg.graph, &specs[b], derive(seed, &[b as u64]));
            out.extend(bg.gids.iter().zip(&sub.part).map(|(&gid, &j)| (gid, offsets[b] + j)));
        }
        out
    });
    let routed = route_to_owners(comm, g, results);
    let owned: Vec<Vec<BlockId>> = comm.exec().map_owned(routed, |r, list| {
        let mut out: Vec<BlockId> = part.owned(g, r).iter().map(|&b| offsets[b as usize]).collect();
        for (u, b) in list {
            out[u as usize] = b;
        }
        out
    });
    (DistPartition::from_owned(comm, g, owned, new_layout.len()), new_layout)
}

/// Empty blocks get a vertex each, then balancer, then refinement, then the
/// balancer again if refinement broke a cap. A balancer that cannot reach
/// the caps is not fatal here: later levels get another chance and the
/// final result reports feasibility.
fn balance_and_refine(ctx: &Ctx, comm: &Comm, g: &DistGraph, part: &mut DistPartition, layout: &[(u32, u32)], seed: u64) {
    let t = Instant::now();
    let cfg = ctx.cfg;
    let caps = ctx.caps(layout, g.max_vertex_weight());
    let balance = |part: &mut DistPartition| {
        if let Err(e) = rebalance(comm, g, part, &caps, cfg.balance_l, None) {
            log::debug!("balancing on {} vertices: {e}", g.n());
            ctx.failures.fetch_add(1, Ordering::Relaxed);
        }
    };
    let filled = fill_empty_blocks(comm, g, part);
    if filled > 0 {
        log::debug!("filled {filled} empty block(s) on {} vertices", g.n());
    }
    balance(part);
    let params = RefineParams {
        iterations: cfg.refine_iterations,
        alpha: cfg.alpha,
        beta: cfg.beta,
        chunk_size: cfg.chunk_size,
    };
    refine(comm, g, part, &caps, &params, seed);
    if !part.is_feasible(&caps) {
        balance(part);
    }
    ctx.add_time(|t| &mut t.refinement, t.elapsed());
}

/// Induced subgraph of one block, held whole by one PE.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockGraph {
    pub block: BlockId,
    pub graph: SeqGraph,
    /// Global ID of every vertex of `graph`, ascending.
    pub gids: Vec<GlobalId>,
}

/// Ships the subgraph induced by block `b` to PE `b mod P`. Edges between
/// blocks are dropped. Every block appears exactly once, empty blocks as
/// empty graphs.
pub fn distribute_blocks(comm: &Comm, g: &DistGraph, part: &DistPartition) -> Vec<Vec<BlockGraph>> {
    let p = comm.size();
    let k = part.k();
    let outboxes: Vec<Outbox<(u32, u64, u64, i64)>> = comm.run_ref(g.locals(), |r, lg| {
        let labels = &part.labels[r];
        let mut ob = Outbox::new(p);
        for u in 0..lg.n_owned() as LocalId {
            let b = labels[u as usize];
            let gu = lg.global_id(u);
            let dest = ob.to(b as usize % p);
            dest.push((b, gu, gu, lg.vertex_weight(u)));
            for (v, w) in lg.neighbors(u) {
                if labels[v as usize] == b {
                    dest.push((b, gu, lg.global_id(v), w));
                }
            }
        }
        ob
    });
    let inboxes = comm.alltoall(outboxes);
    comm.exec().map_owned(inboxes, |r, inbox| {
        let mut per_block: Vec<Vec<(u64, u64, i64)>> = (r..k).step_by(p).map(|_| Vec::new()).collect();
        for (b, u, v, w) in inbox.records() {
            per_block[(b as usize - r) / p].push((u, v, w));
        }
        per_block
            .into_iter()
            .enumerate()
            .map(|(i, recs)| {
                let block = (r + i * p) as BlockId;
                // each vertex record is followed by its arcs, and owners send
                // in ascending global order, so the lists arrive in CSR order
                let gids: Vec<GlobalId> = recs.iter().filter(|e| e.0 == e.1).map(|e| e.0).collect();
                debug_assert!(gids.windows(2).all(|w| w[0] < w[1]));
                let index: FxHashMap<GlobalId, LocalId> = gids.iter().enumerate().map(|(i, &x)| (x, i as LocalId)).collect();
                let mut xadj = Vec::with_capacity(gids.len() + 1);
                let mut vwgt = Vec::with_capacity(gids.len());
                let mut adjncy = Vec::with_capacity(recs.len() - gids.len());
                let mut adjwgt = Vec::with_capacity(recs.len() - gids.len());
                xadj.push(0);
                for &(u, v, w) in &recs {
                    if u == v {
                        if !vwgt.is_empty() {
                            xadj.push(adjncy.len());
                        }
                        vwgt.push(w);
                    } else {
                        adjncy.push(index[&v]);
                        adjwgt.push(w);
                    }
                }
                if !vwgt.is_empty() {
                    xadj.push(adjncy.len());
                }
                // sorted neighborhoods make the result independent of the
                // ghost numbering on the sending PEs
                let mut arcs: Vec<(LocalId, Weight)> = Vec::new();
                for u in 0..vwgt.len() {
                    let (a, b) = (xadj[u], xadj[u + 1]);
                    arcs.clear();
                    arcs.extend(adjncy[a..b].iter().copied().zip(adjwgt[a..b].iter().copied()));
                    arcs.sort_unstable();
                    for (j, (v, w)) in arcs.iter().enumerate() {
                        adjncy[a + j] = *v;
                        adjwgt[a + j] = *w;
                    }
                }
                let graph = SeqGraph::from_csr_unchecked(xadj, adjncy, adjwgt, vwgt);
                BlockGraph { block, graph, gids }
            })
            .collect()
    })
}

/// Result of [`partition_graph`].
#[derive(Clone, Debug)]
pub struct PartitionResult {
    pub labels: Vec<BlockId>,
    pub cut: Weight,
    pub block_weights: Vec<Weight>,
    pub l_max: Weight,
    pub feasible: bool,
    pub balance_failures: usize,
    pub trace: Vec<TraceEvent>,
    pub times: PhaseTimes,
    pub traffic: TrafficSnapshot,
}

/// Distributes `g` over `p` logical PEs and partitions it.
pub fn partition_graph(g: &SeqGraph, cfg: &DeepConfig, p: usize) -> Result<PartitionResult> {
    if p == 0 || !p.is_power_of_two() {
        return Err(Error::InvalidConfig(format!("the number of PEs ({p}) must be a power of two")));
    }
    cfg.validate()?;
    let comm = Comm::new(p).with_mode(cfg.mode).with_exec(cfg.exec);
    let dg = DistGraph::distribute(g, p);
    let out = deep_partition(&comm, &dg, cfg)?;
    let cut = edge_cut(&comm, &dg, &out.part.labels)?;
    let labels = out.part.gather_via(&comm, &dg);
    Ok(PartitionResult {
        labels,
        cut,
        block_weights: out.part.weights,
        l_max: out.l_max,
        feasible: out.feasible,
        balance_failures: out.balance_failures,
        trace: out.trace,
        times: out.times,
        traffic: comm.stats().snapshot(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::partition_seq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_connected(n: usize, extra: usize, seed: u64) -> SeqGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges: Vec<(u32, u32)> = (1..n as u32).map(|v| (rng.gen_range(0..v), v)).collect();
        for _ in 0..extra {
            edges.push((rng.gen_range(0..n as u32), rng.gen_range(0..n as u32)));
        }
        SeqGraph::from_edges_simplified(n, edges)
    }

    fn small(k: usize, c: u64) -> DeepConfig {
        DeepConfig {
            contraction_limit: c,
            ..DeepConfig::new(k, Preset::Fast)
        }
    }

    #[test]
    fn presets_and_validation() {
        let f = DeepConfig::new(4, Preset::Fast);
        assert_eq!((f.contraction_limit, f.lp_iterations, f.subdivision), (2000, 3, 2));
        let s = DeepConfig::new(4, Preset::Strong);
        assert_eq!((s.contraction_limit, s.lp_iterations), (5000, 5));
        assert_eq!(f.eps, 0.03);
        assert!(DeepConfig { k: 0, ..f.clone() }.validate().is_err());
        assert!(DeepConfig { subdivision: 3, ..f.clone() }.validate().is_err());
        assert!(DeepConfig { contraction_limit: 1, ..f.clone() }.validate().is_err());
        assert_eq!("Strong".parse::<Preset>().unwrap(), Preset::Strong);
        assert!("medium".parse::<Preset>().is_err());
        let g = random_connected(20, 10, 1);
        assert!(matches!(partition_graph(&g, &f, 3), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn single_pe_small_graph_matches_sequential() {
        for seed in 0..5 {
            let g = random_connected(300, 600, seed);
            let cfg = DeepConfig::new(2, Preset::Fast).with_seed(seed);
            let out = partition_graph(&g, &cfg, 1).unwrap();
            assert_eq!(out.trace.len(), 2, "{:?}", out.trace);
            // same path by hand: one sequential bisection, then one refinement
            let seq = partition_seq(&g, 2, 0.03, derive(seed, &[0]));
            let comm = Comm::new(1);
            let dg = DistGraph::distribute(&g, 1);
            let mut part = DistPartition::from_owned(&comm, &dg, vec![seq.part.clone()], 2);
            let caps = vec![out.l_max; 2];
            assert!(part.is_feasible(&caps));
            let params = RefineParams {
                iterations: cfg.refine_iterations,
                alpha: cfg.alpha,
                beta: cfg.beta,
                chunk_size: cfg.chunk_size,
            };
            refine(&comm, &dg, &mut part, &caps, &params, derive(seed, &[5, 0]));
            assert_eq!(out.labels, part.gather(&dg));
            assert!(out.cut <= seq.cut);
            assert!(out.feasible);
        }
    }

    #[test]
    fn one_block() {
        let g = random_connected(500, 500, 3);
        for p in [1, 4] {
            let out = partition_graph(&g, &small(1, 20), p).unwrap();
            assert!(out.labels.iter().all(|&b| b == 0));
            assert_eq!(out.cut, 0);
            assert!(!out.trace.iter().any(|e| matches!(e, TraceEvent::Extend { .. })));
        }
    }

    #[test]
    fn four_pes_replicate_then_extend_to_four_blocks() {
        // 150 vertices with C = 60: above the limit 2C but below 4C, so the
        // four PEs split into two groups of two
        let g = random_connected(150, 300, 9);
        let cfg = small(4, 60);
        let out = partition_graph(&g, &cfg, 4).unwrap();
        assert!(out.feasible);
        let tr = &out.trace;
        assert!(matches!(tr[0], TraceEvent::Replicate { n: 150, pes: 4, copies: 2 }));
        assert!(tr[1..].iter().all(|e| !matches!(e, TraceEvent::Replicate { .. })));
        let base = tr.iter().position(|e| matches!(e, TraceEvent::BaseCase { .. })).unwrap();
        assert!(matches!(tr[base], TraceEvent::BaseCase { pes: 2, .. }));
        let ext: Vec<(usize, usize)> = tr[base..]
            .iter()
            .filter_map(|e| match *e {
                TraceEvent::Extend { from, to, .. } => Some((from, to)),
                _ => None,
            })
            .collect();
        assert_eq!(ext.first(), Some(&(1, 2)));
        assert_eq!(ext.last().map(|e| e.1), Some(4));
        assert!(ext.windows(2).all(|w| w[0].1 == w[1].0));
        let mut nonempty = out.block_weights.clone();
        nonempty.retain(|&w| w > 0);
        assert_eq!(nonempty.len(), 4);
    }

    #[test]
    fn split_ranges() {
        assert_eq!(split_range(0, 4, 2), vec![(0, 2), (2, 2)]);
        assert_eq!(split_range(3, 5, 2), vec![(3, 3), (6, 2)]);
        assert_eq!(split_range(0, 1, 1), vec![(0, 1)]);
    }

    #[test]
    fn distribute_blocks_round_robin() {
        let g = random_connected(40, 60, 4);
        let p = 2;
        let comm = Comm::new(p);
        let dg = DistGraph::distribute(&g, p);
        let labels: Vec<BlockId> = (0..40).map(|v| (v % 3) as BlockId).collect();
        let owned = (0..p).map(|r| labels[dg.dist().first(r) as usize..dg.dist().end(r) as usize].to_vec()).collect();
        // block 3 stays empty
        let part = DistPartition::from_owned(&comm, &dg, owned, 4);
        let out = distribute_blocks(&comm, &dg, &part);
        let ids: Vec<Vec<BlockId>> = out.iter().map(|l| l.iter().map(|b| b.block).collect()).collect();
        assert_eq!(ids, vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(out[1][1].graph.n(), 0);
        for list in &out {
            for bg in list {
                let members: Vec<LocalId> = (0..40).filter(|&v| labels[v as usize] == bg.block).collect();
                assert_eq!(bg.gids, members.iter().map(|&v| v as u64).collect::<Vec<_>>());
                assert_eq!(bg.graph, g.induced(&members));
            }
        }
    }

    #[test]
    fn uneven_k_and_many_blocks() {
        let g = random_connected(2000, 5000, 12);
        for (k, p) in [(3, 1), (6, 2), (12, 4), (40, 8)] {
            let out = partition_graph(&g, &small(k, 40).with_seed(2), p).unwrap();
            assert!(out.feasible, "k={k} p={p} {:?} > {}", out.block_weights, out.l_max);
            assert_eq!(out.block_weights.len(), k);
            assert!(out.block_weights.iter().all(|&w| w > 0));
            assert_eq!(g.edge_cut(&out.labels), out.cut);
            assert_eq!(g.block_weights(&out.labels, k), out.block_weights);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn deterministic_across_runs_and_exec_modes(
            n in 50usize..600,
            k in 1usize..9,
            logp in 0u32..4,
            seed in any::<u64>(),
        ) {
            let g = random_connected(n, 2 * n, seed);
            let cfg = small(k, 25).with_seed(seed);
            let p = 1 << logp;
            let a = partition_graph(&g, &cfg, p).unwrap();
            let b = partition_graph(&g, &cfg, p).unwrap();
            let seq_cfg = DeepConfig { exec: Exec::Sequential, mode: AllToAllMode::Direct, ..cfg.clone() };
            let c = partition_graph(&g, &seq_cfg, p).unwrap();
            prop_assert_eq!(&a.labels, &b.labels);
            prop_assert_eq!(&a.labels, &c.labels);
            prop_assert!(a.feasible);
        }
    }
}
