//! Bulk-synchronous message-passing kernel.
//!
//! A [`Comm`] drives all logical PEs of one [`PeGroup`]. Work is expressed as
//! supersteps: [`Comm::run`] executes one closure per PE (on the rayon pool
//! when available), and everything that crosses a PE boundary goes through
//! one of the collectives below. Collectives take the contributions of every
//! member at once, so each member reaches each collective exactly once and
//! in the same order.
//!
//! Records are encoded with their fixed [`Wire`] layout and moved through a
//! pluggable [`Transport`]; traffic is accounted in [`TrafficStats`].

mod exec;
mod wire;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

pub use exec::Exec;
pub use wire::{decode_all, encode_all, Wire};

use crate::error::{Error, Result};
use crate::types::Weight;

/// Routing strategy of [`Comm::alltoall`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AllToAllMode {
    /// Every PE exchanges one message with every other PE.
    Direct,
    /// Two hops over a PE grid: within the source column to the destination
    /// row, then within that row to the destination.
    #[default]
    Grid,
}

/// A contiguous range of global PE ranks acting as one collective scope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PeGroup {
    base: usize,
    size: usize,
}

impl PeGroup {
    pub fn world(size: usize) -> Self {
        assert!(size >= 1, "a PE group needs at least one member");
        PeGroup { base: 0, size }
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Global rank of the member with group rank `rank`.
    pub fn global_rank(&self, rank: usize) -> usize {
        assert!(rank < self.size);
        self.base + rank
    }

    /// Splits the group into `parts` contiguous, equal-sized sub-groups.
    pub fn split(&self, parts: usize) -> Result<Vec<PeGroup>> {
        if parts == 0 || self.size % parts != 0 {
            return Err(Error::Contract(format!(
                "cannot split a group of {} PEs into {} parts",
                self.size, parts
            )));
        }
        let sub = self.size / parts;
        Ok((0..parts)
            .map(|i| PeGroup {
                base: self.base + i * sub,
                size: sub,
            })
            .collect())
    }

    /// The sub-group containing group rank `rank` after `split(parts)`,
    /// together with the rank of that member inside it.
    pub fn split_for(&self, rank: usize, parts: usize) -> Result<(PeGroup, usize)> {
        let groups = self.split(parts)?;
        let sub = self.size / parts;
        Ok((groups[rank / sub], rank % sub))
    }
}

/// Moves byte buffers between the members of a group for one
/// communication step.
pub trait Transport: Send + Sync {
    /// `outgoing[src][dst]` becomes `incoming[dst][src]`.
    fn exchange(&self, outgoing: Vec<Vec<Vec<u8>>>) -> Vec<Vec<Vec<u8>>>;
}

/// All PEs live in this process; an exchange is a matrix transpose.
#[derive(Debug, Default)]
pub struct InProcess;

impl Transport for InProcess {
    fn exchange(&self, outgoing: Vec<Vec<Vec<u8>>>) -> Vec<Vec<Vec<u8>>> {
        let p = outgoing.len();
        let mut incoming: Vec<Vec<Vec<u8>>> = (0..p).map(|_| vec![Vec::new(); p]).collect();
        for (src, row) in outgoing.into_iter().enumerate() {
            debug_assert_eq!(row.len(), p);
            for (dst, buf) in row.into_iter().enumerate() {
                incoming[dst][src] = buf;
            }
        }
        incoming
    }
}

/// Traffic of one collective invocation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CollectiveTraffic {
    /// Communication steps (an all-to-all in grid mode takes two).
    pub phases: u64,
    /// Point-to-point messages, counting the zero-length messages that an
    /// all-to-all exchange over a communicator implies.
    pub messages: u64,
    /// Messages that carried at least one byte.
    pub payload_messages: u64,
    pub bytes: u64,
}

impl std::ops::AddAssign for CollectiveTraffic {
    fn add_assign(&mut self, o: Self) {
        self.phases += o.phases;
        self.messages += o.messages;
        self.payload_messages += o.payload_messages;
        self.bytes += o.bytes;
    }
}

/// Cumulative traffic counters shared by a communicator and all groups split
/// from it.
#[derive(Debug, Default)]
pub struct TrafficStats {
    calls: AtomicU64,
    per_kind: Mutex<BTreeMap<&'static str, (u64, CollectiveTraffic)>>,
}

/// Point-in-time copy of [`TrafficStats`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrafficSnapshot {
    pub calls: u64,
    pub per_kind: BTreeMap<&'static str, (u64, CollectiveTraffic)>,
}

impl TrafficSnapshot {
    pub fn total(&self) -> CollectiveTraffic {
        let mut t = CollectiveTraffic::default();
        for (_, c) in self.per_kind.values() {
            t += *c;
        }
        t
    }

    pub fn kind(&self, kind: &str) -> (u64, CollectiveTraffic) {
        self.per_kind.get(kind).copied().unwrap_or_default()
    }
}

impl TrafficStats {
    fn record(&self, kind: &'static str, t: CollectiveTraffic) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut map = self.per_kind.lock().expect("traffic stats poisoned");
        let e = map.entry(kind).or_default();
        e.0 += 1;
        e.1 += t;
    }

    pub fn snapshot(&self) -> TrafficSnapshot {
        TrafficSnapshot {
            calls: self.calls.load(Ordering::Relaxed),
            per_kind: self.per_kind.lock().expect("traffic stats poisoned").clone(),
        }
    }
}

/// Records addressed by one PE to the members of its group.
#[derive(Clone, Debug)]
pub struct Outbox<T> {
    bins: Vec<Vec<T>>,
}

impl<T> Outbox<T> {
    pub fn new(p: usize) -> Self {
        Outbox {
            bins: (0..p).map(|_| Vec::new()).collect(),
        }
    }

    #[inline]
    pub fn push(&mut self, dest: usize, record: T) {
        self.bins[dest].push(record);
    }

    pub fn to(&mut self, dest: usize) -> &mut Vec<T> {
        &mut self.bins[dest]
    }

    pub fn len(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.iter().all(Vec::is_empty)
    }
}

/// Records received by one PE, grouped by source rank in rank order; the
/// per-source order is the order in which the source pushed them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inbox<T> {
    bins: Vec<Vec<T>>,
}

impl<T> Inbox<T> {
    pub fn from_source(&self, src: usize) -> &[T] {
        &self.bins[src]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &T)> {
        self.bins
            .iter()
            .enumerate()
            .flat_map(|(s, b)| b.iter().map(move |r| (s, r)))
    }

    pub fn records(self) -> impl Iterator<Item = T> {
        self.bins.into_iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Grid geometry: `cols = ceil(sqrt(p))` columns, rank = row * cols + col,
/// possibly with a short last row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    p: usize,
    cols: usize,
}

impl Grid {
    pub fn new(p: usize) -> Self {
        let mut cols = (p as f64).sqrt() as usize;
        while cols * cols < p {
            cols += 1;
        }
        while cols > 1 && (cols - 1) * (cols - 1) >= p {
            cols -= 1;
        }
        Grid { p, cols: cols.max(1) }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.p.div_ceil(self.cols)
    }

    pub fn row(&self, rank: usize) -> usize {
        rank / self.cols
    }

    pub fn col(&self, rank: usize) -> usize {
        rank % self.cols
    }

    /// Intermediate hop for a record from `src` to `dst`: the member in the
    /// source's column and the destination's row. When that position falls
    /// into the missing part of a short last row, the record is sent
    /// straight to `dst`.
    pub fn via(&self, src: usize, dst: usize) -> usize {
        let hop = self.row(dst) * self.cols + self.col(src);
        if hop < self.p {
            hop
        } else {
            dst
        }
    }

    fn column_size(&self, col: usize) -> usize {
        (0..self.rows()).filter(|r| r * self.cols + col < self.p).count()
    }

    fn row_size(&self, row: usize) -> usize {
        (self.p - row * self.cols).min(self.cols)
    }
}

/// Communicator over one PE group.
#[derive(Clone)]
pub struct Comm {
    group: PeGroup,
    mode: AllToAllMode,
    exec: Exec,
    transport: Arc<dyn Transport>,
    stats: Arc<TrafficStats>,
}

impl std::fmt::Debug for Comm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Comm")
            .field("group", &self.group)
            .field("mode", &self.mode)
            .field("exec", &self.exec)
            .finish()
    }
}

impl Comm {
    pub fn new(p: usize) -> Self {
        Comm {
            group: PeGroup::world(p),
            mode: AllToAllMode::default(),
            exec: Exec::default(),
            transport: Arc::new(InProcess),
            stats: Arc::new(TrafficStats::default()),
        }
    }

    pub fn with_mode(mut self, mode: AllToAllMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn size(&self) -> usize {
        self.group.size
    }

    pub fn group(&self) -> PeGroup {
        self.group
    }

    pub fn mode(&self) -> AllToAllMode {
        self.mode
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn stats(&self) -> &TrafficStats {
        &self.stats
    }

    /// Communicators for `parts` equal contiguous sub-groups. They share
    /// transport and traffic counters with `self`.
    pub fn split(&self, parts: usize) -> Result<Vec<Comm>> {
        Ok(self
            .group
            .split(parts)?
            .into_iter()
            .map(|group| Comm {
                group,
                ..self.clone()
            })
            .collect())
    }

    /// One local superstep: `f(rank, state)` for every member.
    pub fn run<S, R, F>(&self, states: &mut [S], f: F) -> Vec<R>
    where
        S: Send,
        R: Send,
        F: Fn(usize, &mut S) -> R + Sync + Send,
    {
        self.check_members(states.len());
        self.exec.map_mut(states, f)
    }

    pub fn run_ref<S, R, F>(&self, states: &[S], f: F) -> Vec<R>
    where
        S: Sync,
        R: Send,
        F: Fn(usize, &S) -> R + Sync + Send,
    {
        self.check_members(states.len());
        self.exec.map_ref(states, f)
    }

    pub fn run_ranks<R, F>(&self, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        self.exec.map_range(self.size(), f)
    }

    fn check_members(&self, got: usize) {
        assert_eq!(
            got,
            self.size(),
            "collective schedule mismatch: {} contributions for a group of {}",
            got,
            self.size()
        );
    }

    fn empty_matrix(p: usize) -> Vec<Vec<Vec<u8>>> {
        (0..p).map(|_| vec![Vec::new(); p]).collect()
    }

    /// Sparse all-to-all exchange: every member receives exactly the records
    /// addressed to it. The result does not depend on the routing mode.
    pub fn alltoall<T: Wire + Send>(&self, outboxes: Vec<Outbox<T>>) -> Vec<Inbox<T>> {
        let p = self.size();
        self.check_members(outboxes.len());
        for ob in &outboxes {
            assert_eq!(ob.bins.len(), p, "outbox sized for a different group");
        }
        let frames: Vec<Vec<Vec<u8>>> = self.exec.map_owned(outboxes, |_, ob| {
            ob.bins.iter().map(|b| encode_all(b)).collect::<Vec<_>>()
        });

        let mut traffic = CollectiveTraffic::default();
        let received: Vec<Vec<Vec<u8>>> = match self.mode {
            AllToAllMode::Direct => {
                traffic.phases = 1;
                traffic.messages = (p * (p - 1)) as u64;
                for (src, row) in frames.iter().enumerate() {
                    for (dst, buf) in row.iter().enumerate() {
                        if src != dst && !buf.is_empty() {
                            traffic.payload_messages += 1;
                            traffic.bytes += buf.len() as u64;
                        }
                    }
                }
                self.transport.exchange(frames)
            }
            AllToAllMode::Grid => self.grid_exchange(frames, &mut traffic),
        };

        self.stats.record("alltoall", traffic);
        self.exec
            .map_owned(received, |_, row| Inbox {
                bins: row.iter().map(|b| decode_all::<T>(b)).collect(),
            })
    }

    fn grid_exchange(
        &self,
        frames: Vec<Vec<Vec<u8>>>,
        traffic: &mut CollectiveTraffic,
    ) -> Vec<Vec<Vec<u8>>> {
        let p = self.size();
        if p == 1 {
            traffic.phases = 2;
            return frames;
        }
        let grid = Grid::new(p);
        traffic.phases = 2;

        // Hop 1: bundles of [dst u32][len u32][payload] to the intermediate.
        let mut hop1 = Self::empty_matrix(p);
        let mut fallback_pairs = 0u64;
        for (src, row) in frames.into_iter().enumerate() {
            for (dst, payload) in row.into_iter().enumerate() {
                if payload.is_empty() {
                    continue;
                }
                let via = grid.via(src, dst);
                if via == dst && grid.col(src) != grid.col(dst) && src != dst {
                    fallback_pairs += 1;
                }
                let buf = &mut hop1[src][via];
                (dst as u32).put(buf);
                (payload.len() as u32).put(buf);
                buf.extend_from_slice(&payload);
            }
        }
        for col in 0..grid.cols() {
            let s = grid.column_size(col) as u64;
            traffic.messages += s * s.saturating_sub(1);
        }
        traffic.messages += fallback_pairs;
        Self::count_payload(&hop1, traffic);
        let at_via = self.transport.exchange(hop1);

        // Hop 2: re-bundle as [src u32][len u32][payload] for the destination.
        let mut hop2 = Self::empty_matrix(p);
        for (via, row) in at_via.into_iter().enumerate() {
            for (src, bundle) in row.into_iter().enumerate() {
                let mut at = 0;
                while at < bundle.len() {
                    let dst = u32::get(&bundle[at..]) as usize;
                    let len = u32::get(&bundle[at + 4..]) as usize;
                    let payload = &bundle[at + 8..at + 8 + len];
                    at += 8 + len;
                    let buf = &mut hop2[via][dst];
                    (src as u32).put(buf);
                    (len as u32).put(buf);
                    buf.extend_from_slice(payload);
                }
            }
        }
        for row in 0..grid.rows() {
            let s = grid.row_size(row) as u64;
            traffic.messages += s * s.saturating_sub(1);
        }
        Self::count_payload(&hop2, traffic);
        let at_dst = self.transport.exchange(hop2);

        let mut out = Self::empty_matrix(p);
        for (dst, row) in at_dst.into_iter().enumerate() {
            for bundle in row {
                let mut at = 0;
                while at < bundle.len() {
                    let src = u32::get(&bundle[at..]) as usize;
                    let len = u32::get(&bundle[at + 4..]) as usize;
                    debug_assert!(out[dst][src].is_empty(), "record routed twice");
                    out[dst][src] = bundle[at + 8..at + 8 + len].to_vec();
                    at += 8 + len;
                }
            }
        }
        out
    }

    fn count_payload(matrix: &[Vec<Vec<u8>>], traffic: &mut CollectiveTraffic) {
        for (src, row) in matrix.iter().enumerate() {
            for (dst, buf) in row.iter().enumerate() {
                if src != dst && !buf.is_empty() {
                    traffic.payload_messages += 1;
                    traffic.bytes += buf.len() as u64;
                }
            }
        }
    }

    /// Binary-tree reduction to rank 0. Level `s` merges rank `r` with rank
    /// `r + s` for `r` a multiple of `2s`, so the merge order is fixed:
    /// (0,1),(2,3),... then (0,2),(4,6),... and so on.
    pub fn tree_reduce<T, F>(&self, locals: Vec<Vec<T>>, mut merge: F) -> Vec<T>
    where
        T: Wire,
        F: FnMut(Vec<T>, Vec<T>) -> Vec<T>,
    {
        let p = self.size();
        self.check_members(locals.len());
        let mut vals: Vec<Option<Vec<T>>> = locals.into_iter().map(Some).collect();
        let mut traffic = CollectiveTraffic::default();
        let mut step = 1;
        while step < p {
            let mut send = Self::empty_matrix(p);
            let mut senders = Vec::new();
            for r in (0..p).step_by(2 * step) {
                if r + step < p {
                    let v = vals[r + step].take().expect("reduced twice");
                    send[r + step][r] = encode_all(&v);
                    senders.push(r + step);
                    traffic.messages += 1;
                }
            }
            traffic.phases += 1;
            Self::count_payload(&send, &mut traffic);
            let recv = self.transport.exchange(send);
            for s in senders {
                let r = s - step;
                let theirs = decode_all::<T>(&recv[r][s]);
                let mine = vals[r].take().expect("missing left operand");
                vals[r] = Some(merge(mine, theirs));
            }
            step *= 2;
        }
        self.stats.record("tree_reduce", traffic);
        vals[0].take().expect("root value")
    }

    /// Binomial-tree broadcast of `value` from `root`; returns the value every
    /// member now holds. In step `s` each member with relative rank `< s`
    /// forwards to relative rank `+ s`.
    pub fn broadcast<T: Wire + Clone>(&self, root: usize, value: Vec<T>) -> Vec<T> {
        let p = self.size();
        assert!(root < p);
        let bytes = encode_all(&value);
        let mut traffic = CollectiveTraffic::default();
        let mut step = 1;
        while step < p {
            let mut send = Self::empty_matrix(p);
            for rel in 0..step {
                if rel + step < p {
                    send[(root + rel) % p][(root + rel + step) % p] = bytes.clone();
                    traffic.messages += 1;
                }
            }
            traffic.phases += 1;
            Self::count_payload(&send, &mut traffic);
            let recv = self.transport.exchange(send);
            debug_assert!((0..step)
                .filter(|rel| rel + step < p)
                .all(|rel| recv[(root + rel + step) % p][(root + rel) % p] == bytes));
            step *= 2;
        }
        self.stats.record("broadcast", traffic);
        decode_all(&bytes)
    }

    /// Element-wise sum of equal-length vectors, replicated on all members.
    pub fn allreduce_sum(&self, values: Vec<Vec<Weight>>) -> Vec<Weight> {
        let len = values.first().map_or(0, Vec::len);
        for v in &values {
            assert_eq!(v.len(), len, "allreduce_sum: vector length mismatch");
        }
        let sum = self.tree_reduce(values, |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        });
        self.broadcast(0, sum)
    }

    /// Reduction of one value per member under an associative `op`,
    /// replicated on all members.
    pub fn allreduce<T, F>(&self, values: Vec<T>, op: F) -> T
    where
        T: Wire + Clone,
        F: Fn(T, T) -> T,
    {
        let lists: Vec<Vec<T>> = values.into_iter().map(|v| vec![v]).collect();
        let r = self.tree_reduce(lists, |mut a, b| {
            let x = a.pop().expect("one value");
            let y = b.into_iter().next().expect("one value");
            vec![op(x, y)]
        });
        self.broadcast(0, r).pop().expect("one value")
    }

    pub fn allreduce_or(&self, flags: Vec<bool>) -> bool {
        self.allreduce(flags, |a, b| a || b)
    }

    pub fn allreduce_max(&self, values: Vec<Weight>) -> Weight {
        self.allreduce(values, Weight::max)
    }

    /// Gathers every member's list on every member, in rank order.
    pub fn allgather<T: Wire + Clone>(&self, parts: Vec<Vec<T>>) -> Vec<Vec<T>> {
        self.check_members(parts.len());
        let tagged: Vec<Vec<(u32, T)>> = parts
            .into_iter()
            .enumerate()
            .map(|(r, v)| v.into_iter().map(|x| (r as u32, x)).collect())
            .collect();
        let all = self.tree_reduce(tagged, |mut a, b| {
            a.extend(b);
            a
        });
        let all = self.broadcast(0, all);
        let mut out: Vec<Vec<T>> = (0..self.size()).map(|_| Vec::new()).collect();
        for (r, x) in all {
            out[r as usize].push(x);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_outboxes(rng: &mut ChaCha8Rng, p: usize) -> Vec<Outbox<(u64, u32)>> {
        (0..p)
            .map(|src| {
                let mut ob = Outbox::new(p);
                for i in 0..rng.gen_range(0..20) {
                    ob.push(rng.gen_range(0..p), (src as u64 * 1000 + i, rng.gen()));
                }
                ob
            })
            .collect()
    }

    #[test]
    fn grid_route_for_sixteen_pes() {
        let g = Grid::new(16);
        assert_eq!((g.cols(), g.rows()), (4, 4));
        assert_eq!(g.via(1, 14), 13);
        assert_eq!((g.row(13), g.col(13)), (3, 1));
    }

    #[test]
    fn grid_shape_for_non_square_counts() {
        let g = Grid::new(10);
        assert_eq!((g.cols(), g.rows()), (4, 3));
        // row 2 holds ranks 8 and 9 only; column 3 has no member there
        assert_eq!(g.via(3, 9), 9);
        assert_eq!(g.via(1, 9), 9);
        assert_eq!(g.via(0, 9), 8);
        assert_eq!(Grid::new(1).cols(), 1);
        assert_eq!(Grid::new(2).cols(), 2);
        assert_eq!(Grid::new(9).cols(), 3);
    }

    #[test]
    fn single_pe_alltoall_is_identity() {
        for mode in [AllToAllMode::Direct, AllToAllMode::Grid] {
            let comm = Comm::new(1).with_mode(mode);
            let mut ob = Outbox::new(1);
            ob.push(0, (7u64, 1u32));
            ob.push(0, (8u64, 2u32));
            let inbox = comm.alltoall(vec![ob]).pop().unwrap();
            assert_eq!(inbox.from_source(0), &[(7, 1), (8, 2)]);
        }
    }

    #[test]
    fn grid_and_direct_deliver_identical_inboxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [2, 3, 5, 9, 10, 16] {
            for _ in 0..20 {
                let obs = random_outboxes(&mut rng, p);
                let direct = Comm::new(p).with_mode(AllToAllMode::Direct).alltoall(obs.clone());
                let grid = Comm::new(p).with_mode(AllToAllMode::Grid).alltoall(obs.clone());
                assert_eq!(direct, grid);
                // every record arrives at its destination from its source
                for (src, ob) in obs.iter().enumerate() {
                    for (dst, bin) in ob.bins.iter().enumerate() {
                        assert_eq!(direct[dst].from_source(src), bin.as_slice());
                    }
                }
            }
        }
    }

    #[test]
    fn grid_sends_fewer_messages_than_direct() {
        let p = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs = random_outboxes(&mut rng, p);
        let d = Comm::new(p).with_mode(AllToAllMode::Direct);
        let g = Comm::new(p).with_mode(AllToAllMode::Grid);
        d.alltoall(obs.clone());
        g.alltoall(obs);
        let dm = d.stats().snapshot().kind("alltoall").1.messages;
        let gm = g.stats().snapshot().kind("alltoall").1.messages;
        assert_eq!(dm, 64 * 63);
        assert_eq!(gm, 2 * 64 * 7);
    }

    #[test]
    fn allreduce_sum_examples() {
        let comm = Comm::new(2);
        assert_eq!(comm.allreduce_sum(vec![vec![1, 2], vec![3, 4]]), vec![4, 6]);
        let comm = Comm::new(1);
        assert_eq!(comm.allreduce_sum(vec![vec![5, -2]]), vec![5, -2]);
    }

    #[test]
    fn allreduce_sum_matches_sequential_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [3, 4, 7] {
            let vals: Vec<Vec<Weight>> = (0..p)
                .map(|_| (0..5).map(|_| rng.gen_range(-100..100)).collect())
                .collect();
            let expect: Vec<Weight> = (0..5).map(|i| vals.iter().map(|v| v[i]).sum()).collect();
            assert_eq!(Comm::new(p).allreduce_sum(vals), expect);
        }
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn allreduce_sum_rejects_ragged_input() {
        Comm::new(2).allreduce_sum(vec![vec![1], vec![1, 2]]);
    }

    fn top_n(n: usize) -> impl FnMut(Vec<u64>, Vec<u64>) -> Vec<u64> {
        move |mut a, b| {
            a.extend(b);
            a.sort_unstable_by(|x, y| y.cmp(x));
            a.truncate(n);
            a
        }
    }

    #[test]
    fn tree_reduce_examples() {
        assert_eq!(Comm::new(2).tree_reduce(vec![vec![5], vec![7]], top_n(1)), vec![7]);
        assert_eq!(Comm::new(1).tree_reduce(vec![vec![3, 1]], top_n(1)), vec![3, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [3, 4, 6] {
            let lists: Vec<Vec<u64>> = (0..p)
                .map(|_| {
                    let mut v: Vec<u64> = (0..4).map(|_| rng.gen_range(0..50)).collect();
                    v.sort_unstable_by(|x, y| y.cmp(x));
                    v
                })
                .collect();
            let mut flat: Vec<u64> = lists.concat();
            flat.sort_unstable_by(|x, y| y.cmp(x));
            flat.truncate(2);
            assert_eq!(Comm::new(p).tree_reduce(lists, top_n(2)), flat);
        }
    }

    #[test]
    fn tree_reduce_merge_order_is_fixed() {
        let order = Comm::new(5).tree_reduce(
            (0..5u64).map(|r| vec![r]).collect(),
            |mut a, b| {
                a.extend(b);
                a
            },
        );
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn broadcast_and_allgather() {
        for p in [1, 2, 5, 8] {
            let comm = Comm::new(p);
            assert_eq!(comm.broadcast(p - 1, vec![1u64, 2, 3]), vec![1, 2, 3]);
            let parts: Vec<Vec<u64>> = (0..p as u64).map(|r| (0..r).collect()).collect();
            assert_eq!(comm.allgather(parts.clone()), parts);
            let snap = comm.stats().snapshot();
            assert_eq!(snap.kind("broadcast").1.messages, 2 * (p as u64 - 1));
        }
    }

    #[test]
    fn split_examples() {
        let g = PeGroup::world(8);
        let halves = g.split(2).unwrap();
        assert_eq!(halves[0], PeGroup { base: 0, size: 4 });
        assert_eq!(halves[1], PeGroup { base: 4, size: 4 });
        assert_eq!(g.split(1).unwrap(), vec![g]);
        let (sub, rank) = g.split_for(5, 4).unwrap();
        assert_eq!((sub.base(), sub.size(), rank), (4, 2, 1));
        assert!(g.split(3).is_err());
        let comms = Comm::new(8).split(4).unwrap();
        assert_eq!(comms.len(), 4);
        assert_eq!(comms[3].group().global_rank(1), 7);
    }

    #[test]
    #[should_panic(expected = "schedule mismatch")]
    fn missing_member_is_detected() {
        Comm::new(3).alltoall::<u64>(vec![Outbox::new(3), Outbox::new(3)]);
    }
}
