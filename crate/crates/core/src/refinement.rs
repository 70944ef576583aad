//! Size-constrained label propagation refinement of a k-way partition.
//!
//! Vertices are visited in the same chunked, degree-ordered batches as in
//! clustering. Moves on a PE are visible to that PE at once; other PEs see
//! them when ghost labels are exchanged at the end of the batch, together
//! with an allreduce of the block-weight deltas.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::comm::Comm;
use crate::graph::DistGraph;
use crate::partition::{sync_ghosts, DistPartition};
use crate::rng;
use crate::schedule::{batch_count, ChunkSchedule, CHUNK_SIZE};
use crate::types::{BlockId, LocalId, Weight};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineParams {
    pub iterations: usize,
    pub alpha: usize,
    pub beta: usize,
    pub chunk_size: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            iterations: 3,
            alpha: 8,
            beta: 128,
            chunk_size: CHUNK_SIZE,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RefineStats {
    pub iterations: usize,
    pub moves: u64,
}

struct PeState {
    delta: Vec<Weight>,
    rating: Vec<Weight>,
    touched: Vec<BlockId>,
    moved: Vec<bool>,
    batch_moves: Vec<LocalId>,
    schedule: ChunkSchedule,
    rng: ChaCha8Rng,
}

/// Whether a vertex with connection `r_cur` to its own block `cur` should
/// move to a block it is connected to with `r_best`, given projected block
/// weights before the move.
#[inline]
pub fn should_move(r_best: Weight, r_cur: Weight, w_target: Weight, c: Weight, w_cur: Weight) -> bool {
    r_best > r_cur || (r_best == r_cur && w_target + c < w_cur)
}

/// Refines `part` in place; block `b` may not grow beyond `caps[b]` as seen
/// by the moving PE. With more than one PE concurrent moves can still
/// overload a block, so callers rebalance afterwards.
pub fn refine(
    comm: &Comm,
    g: &DistGraph,
    part: &mut DistPartition,
    caps: &[Weight],
    params: &RefineParams,
    seed: u64,
) -> RefineStats {
    let k = part.k();
    assert_eq!(caps.len(), k);
    let batches = batch_count(comm.size(), params.alpha, params.beta);
    let mut states: Vec<PeState> = comm.run_ranks(|r| PeState {
        delta: vec![0; k],
        rating: vec![0; k],
        touched: Vec::new(),
        moved: vec![false; g.local(r).n_owned()],
        batch_moves: Vec::new(),
        schedule: ChunkSchedule::from_degrees(&[], 1, &mut rng::stream(0, &[])),
        rng: rng::stream(seed, &[r as u64]),
    });
    let mut stats = RefineStats::default();
    if k < 2 {
        return stats;
    }

    for iter in 0..params.iterations {
        stats.iterations += 1;
        comm.run(&mut states, |r, st| {
            let mut rng = rng::stream(seed, &[iter as u64, r as u64, 1]);
            st.schedule = ChunkSchedule::new(g.local(r), params.chunk_size, &mut rng);
            st.moved.iter_mut().for_each(|m| *m = false);
        });
        let mut iter_moves = 0;
        for batch in 0..batches {
            let weights = part.weights.clone();
            let mut zipped: Vec<(&mut Vec<BlockId>, &mut PeState)> =
                part.labels.iter_mut().zip(states.iter_mut()).collect();
            let reports: Vec<Vec<Weight>> = comm.run(&mut zipped, |r, (labels, st)| {
                move_batch(g, r, labels, st, &weights, caps, batch, batches);
                let mut report = std::mem::replace(&mut st.delta, vec![0; k]);
                report.push(st.batch_moves.len() as Weight);
                report
            });
            let mut sum = comm.allreduce_sum(reports);
            let moves = sum.pop().expect("move count") as u64;
            for (w, d) in part.weights.iter_mut().zip(&sum) {
                *w += d;
            }
            if moves > 0 {
                let changed: Vec<Vec<LocalId>> = states.iter_mut().map(|st| std::mem::take(&mut st.batch_moves)).collect();
                sync_ghosts(comm, g, &mut part.labels, changed);
            }
            iter_moves += moves;
        }
        stats.moves += iter_moves;
        if iter_moves == 0 {
            break;
        }
    }
    stats
}

#[allow(clippy::too_many_arguments)]
fn move_batch(
    g: &DistGraph,
    r: usize,
    labels: &mut [BlockId],
    st: &mut PeState,
    weights: &[Weight],
    caps: &[Weight],
    batch: usize,
    batches: usize,
) {
    let lg = g.local(r);
    let PeState {
        delta,
        rating,
        touched,
        moved,
        batch_moves,
        schedule,
        rng,
    } = st;
    batch_moves.clear();
    for &v in schedule.batch(batch, batches) {
        if moved[v as usize] {
            continue;
        }
        let cur = labels[v as usize];
        let c = lg.vertex_weight(v);
        for (u, w) in lg.neighbors(v) {
            let b = labels[u as usize];
            if rating[b as usize] == 0 {
                touched.push(b);
            }
            rating[b as usize] += w;
        }
        let r_cur = rating[cur as usize];
        let proj = |b: BlockId| weights[b as usize] + delta[b as usize];
        // (rating, projected weight) of the best target; ties among equally
        // rated, equally heavy blocks are settled by a reservoir coin flip
        let mut best: Option<(Weight, Weight, BlockId)> = None;
        let mut ties = 0u32;
        for &t in touched.iter() {
            if t == cur || proj(t) + c > caps[t as usize] {
                continue;
            }
            let cand = (rating[t as usize], proj(t));
            match best {
                Some((br, bw, _)) if (cand.0, -cand.1) < (br, -bw) => {}
                Some((br, bw, _)) if (cand.0, cand.1) == (br, bw) => {
                    ties += 1;
                    if rng.gen_range(0..ties) == 0 {
                        best = Some((cand.0, cand.1, t));
                    }
                }
                _ => {
                    best = Some((cand.0, cand.1, t));
                    ties = 1;
                }
            }
        }
        for &t in touched.iter() {
            rating[t as usize] = 0;
        }
        touched.clear();
        let Some((r_best, w_best, t)) = best else { continue };
        // never empty the source block
        if proj(cur) - c < 1 || !should_move(r_best, r_cur, w_best, c, proj(cur)) {
            continue;
        }
        labels[v as usize] = t;
        delta[cur as usize] -= c;
        delta[t as usize] += c;
        moved[v as usize] = true;
        batch_moves.push(v);
    }
}
