
use crate::error::{Error, Result};
use crate::types::{BlockId, LocalId, Weight};

/// Single-address-space CSR graph with vertex and edge weights.
///
/// Every undirected edge `{u, v}` is stored twice, as `u -> v` and `v -> u`
/// with the same weight.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeqGraph {
    xadj: Vec<usize>,
    adjncy: Vec<LocalId>,
    adjwgt: Vec<Weight>,
    vwgt: Vec<Weight>,
}

impl SeqGraph {
    /// Builds a graph from CSR arrays and checks all invariants: positive
    /// weights, no self-loops, no duplicate neighbors, symmetric adjacency.
    pub fn from_csr(
        xadj: Vec<usize>,
        adjncy: Vec<LocalId>,
        adjwgt: Vec<Weight>,
        vwgt: Vec<Weight>,
    ) -> Result<Self> {
        let g = Self::from_csr_unchecked(xadj, adjncy, adjwgt, vwgt);
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn from_csr_unchecked(
        xadj: Vec<usize>,
        adjncy: Vec<LocalId>,
        adjwgt: Vec<Weight>,
        vwgt: Vec<Weight>,
    ) -> Self {
        debug_assert_eq!(xadj.len(), vwgt.len() + 1);
        debug_assert_eq!(adjncy.len(), adjwgt.len());
        SeqGraph {
            xadj,
            adjncy,
            adjwgt,
            vwgt,
        }
    }

    /// Builds a graph from directed arcs (both directions present). Arcs are
    /// sorted and parallel arcs merged by summing their weights.
    pub(crate) fn from_arcs(vwgt: Vec<Weight>, mut arcs: Vec<(LocalId, LocalId, Weight)>) -> Self {
        let n = vwgt.len();
        arcs.sort_unstable_by_key(|a| (a.0, a.1));
        let mut xadj = vec![0usize; n + 1];
        let mut adjncy = Vec::with_capacity(arcs.len());
        let mut adjwgt: Vec<Weight> = Vec::with_capacity(arcs.len());
        let mut last = None;
        for (u, v, w) in arcs {
            if last == Some((u, v)) {
                *adjwgt.last_mut().expect("previous arc") += w;
            } else {
                adjncy.push(v);
                adjwgt.push(w);
                xadj[u as usize + 1] += 1;
                last = Some((u, v));
            }
        }
        for i in 0..n {
            xadj[i + 1] += xadj[i];
        }
        Self::from_csr_unchecked(xadj, adjncy, adjwgt, vwgt)
    }

    /// Builds a graph from a list of undirected edges, each given once.
    pub fn from_edges(n: usize, vwgt: Option<Vec<Weight>>, edges: &[(u32, u32, Weight)]) -> Result<Self> {
        let vwgt = vwgt.unwrap_or_else(|| vec![1; n]);
        if vwgt.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} vertex weights for {} vertices",
                vwgt.len(),
                n
            )));
        }
        let mut deg = vec![0usize; n];
        for &(u, v, _) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range")));
            }
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        let mut xadj = Vec::with_capacity(n + 1);
        xadj.push(0);
        for d in &deg {
            xadj.push(xadj.last().unwrap() + d);
        }
        let mut fill = xadj[..n].to_vec();
        let mut adjncy = vec![0; xadj[n]];
        let mut adjwgt = vec![0; xadj[n]];
        for &(u, v, w) in edges {
            adjncy[fill[u as usize]] = v;
            adjwgt[fill[u as usize]] = w;
            fill[u as usize] += 1;
            adjncy[fill[v as usize]] = u;
            adjwgt[fill[v as usize]] = w;
            fill[v as usize] += 1;
        }
        Self::from_csr(xadj, adjncy, adjwgt, vwgt)
    }

    /// Like [`SeqGraph::from_edges`] but drops self-loops and merges
    /// duplicate edges by keeping the first weight. Intended for generators.
    pub fn from_edges_simplified(n: usize, mut edges: Vec<(u32, u32)>) -> Self {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.retain(|e| e.0 != e.1);
        edges.sort_unstable();
        edges.dedup();
        let weighted: Vec<(u32, u32, Weight)> = edges.into_iter().map(|(u, v)| (u, v, 1)).collect();
        Self::from_edges(n, None, &weighted).expect("simplified edge list is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.xadj.first() != Some(&0) || self.xadj.last() != Some(&self.adjncy.len()) {
            return Err(Error::InvalidGraph("malformed CSR offsets".into()));
        }
        if let Some(u) = self.vwgt.iter().position(|&w| w < 1) {
            return Err(Error::InvalidGraph(format!("vertex {u} has non-positive weight")));
        }
        let mut sorted: Vec<Vec<(LocalId, Weight)>> = Vec::with_capacity(n);
        for u in 0..n {
            if self.xadj[u] > self.xadj[u + 1] {
                return Err(Error::InvalidGraph("malformed CSR offsets".into()));
            }
            let mut adj: Vec<(LocalId, Weight)> = self.neighbors(u as LocalId).collect();
            adj.sort_unstable();
            for w in adj.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {})", w[0].0)));
                }
            }
            for &(v, w) in &adj {
                if v as usize >= n {
                    return Err(Error::InvalidGraph(format!("vertex {u} has out-of-range neighbor {v}")));
                }
                if v as usize == u {
                    return Err(Error::InvalidGraph(format!("self-loop at vertex {u}")));
                }
                if w < 1 {
                    return Err(Error::InvalidGraph(format!("edge ({u}, {v}) has non-positive weight")));
                }
            }
            sorted.push(adj);
        }
        for (u, adj) in sorted.iter().enumerate() {
            for &(v, w) in adj {
                let back = &sorted[v as usize];
                match back.binary_search_by_key(&(u as LocalId), |e| e.0) {
                    Ok(i) if back[i].1 == w => {}
                    Ok(_) => {
                        return Err(Error::InvalidGraph(format!(
                            "edge ({u}, {v}) has different weights in both directions"
                        )))
                    }
                    Err(_) => {
                        return Err(Error::InvalidGraph(format!("edge ({u}, {v}) has no reverse edge")))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.vwgt.len()
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.adjncy.len() / 2
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
    pub fn vertex_weight(&self, u: LocalId) -> Weight {
        self.vwgt[u as usize]
    }

    pub fn vertex_weights(&self) -> &[Weight] {
        &self.vwgt
    }

    pub fn xadj(&self) -> &[usize] {
        &self.xadj
    }

    pub fn adjncy(&self) -> &[LocalId] {
        &self.adjncy
    }

    pub fn adjwgt(&self) -> &[Weight] {
        &self.adjwgt
    }

    pub fn total_weight(&self) -> Weight {
        self.vwgt.iter().sum()
    }

    pub fn max_vertex_weight(&self) -> Weight {
        self.vwgt.iter().copied().max().unwrap_or(0)
    }

    pub fn has_unit_edge_weights(&self) -> bool {
        self.adjwgt.iter().all(|&w| w == 1)
    }

    pub fn has_unit_vertex_weights(&self) -> bool {
        self.vwgt.iter().all(|&w| w == 1)
    }

    /// Weight of all edges whose endpoints lie in different blocks.
    pub fn edge_cut(&self, part: &[BlockId]) -> Weight {
        assert_eq!(part.len(), self.n(), "partition does not cover every vertex");
        let mut cut = 0;
        for u in 0..self.n() {
            for (v, w) in self.neighbors(u as LocalId) {
                if (v as usize) > u && part[u] != part[v as usize] {
                    cut += w;
                }
            }
        }
        cut
    }

    /// Per-block weight sums for a partition into `k` blocks.
    pub fn block_weights(&self, part: &[BlockId], k: usize) -> Vec<Weight> {
        let mut bw = vec![0; k];
        for (u, &b) in part.iter().enumerate() {
            bw[b as usize] += self.vwgt[u];
        }
        bw
    }

    /// Subgraph induced by `vertices` (in that order). Vertex `i` of the result
    /// is `vertices[i]`.
    pub fn induced(&self, vertices: &[LocalId]) -> SeqGraph {
        let mut index = vec![LocalId::MAX; self.n()];
        for (i, &v) in vertices.iter().enumerate() {
            index[v as usize] = i as LocalId;
        }
        let mut xadj = Vec::with_capacity(vertices.len() + 1);
        xadj.push(0);
        let mut adjncy = Vec::new();
        let mut adjwgt = Vec::new();
        let mut vwgt = Vec::with_capacity(vertices.len());
        for &v in vertices {
            vwgt.push(self.vertex_weight(v));
            for (u, w) in self.neighbors(v) {
                let iu = index[u as usize];
                if iu != LocalId::MAX {
                    adjncy.push(iu);
                    adjwgt.push(w);
                }
            }
            xadj.push(adjncy.len());
        }
        SeqGraph::from_csr_unchecked(xadj, adjncy, adjwgt, vwgt)
    }
}
