//! Quality metrics, independent partition verification, performance
//! profiles and geometric-mean aggregation.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graph::{l_max, SeqGraph};
use crate::types::{BlockId, Weight};

/// `max_i c(V_i) * k / c(V) - 1` as an exact fraction `(num, den)`.
pub fn imbalance_ratio(block_weights: &[Weight], total: Weight) -> (i128, i128) {
    let k = block_weights.len() as i128;
    let max = block_weights.iter().copied().max().unwrap_or(0) as i128;
    if total == 0 {
        return (0, 1);
    }
    (max * k - total as i128, total as i128)
}

pub fn imbalance(block_weights: &[Weight], total: Weight) -> f64 {
    let (num, den) = imbalance_ratio(block_weights, total);
    num as f64 / den as f64
}

/// Metrics recomputed from a graph and a block assignment alone.
#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub cut: Weight,
    pub block_weights: Vec<Weight>,
    pub l_max: Weight,
    pub imbalance: f64,
    pub nonempty: usize,
    pub feasible: bool,
}

pub fn verify(g: &SeqGraph, part: &[BlockId], k: usize, eps: f64) -> Result<Verification> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if part.len() != g.n() {
        return Err(Error::Contract(format!("{} labels for {} vertices", part.len(), g.n())));
    }
    if let Some((v, &b)) = part.iter().enumerate().find(|(_, &b)| b as usize >= k) {
        return Err(Error::Contract(format!("vertex {v} is in block {b}, but k = {k}")));
    }
    let block_weights = g.block_weights(part, k);
    let l = l_max(g.total_weight(), k, eps, g.max_vertex_weight());
    Ok(Verification {
        cut: g.edge_cut(part),
        imbalance: imbalance(&block_weights, g.total_weight()),
        nonempty: block_weights.iter().filter(|&&w| w > 0).count(),
        feasible: block_weights.iter().all(|&w| w <= l),
        block_weights,
        l_max: l,
    })
}

/// Geometric mean; zero values count as 1 so that a single zero cut does
/// not collapse the aggregate.
pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let log_sum: f64 = values.iter().map(|&v| if v == 0.0 { 0.0 } else { v.ln() }).sum();
    (log_sum / values.len() as f64).exp()
}

/// One measurement: `quality` of `algorithm` on `instance` (lower is better).
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub instance: String,
    pub algorithm: String,
    pub quality: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub algorithms: Vec<String>,
    pub taus: Vec<f64>,
    /// `fractions[a][t]`: share of instances on which algorithm `a` is
    /// within `taus[t]` times the best quality.
    pub fractions: Vec<Vec<f64>>,
    /// Instances left out because some algorithm has no result on them.
    pub dropped: Vec<String>,
}

pub fn default_taus() -> Vec<f64> {
    let mut t: Vec<f64> = (0..=20).map(|i| 1.0 + i as f64 * 0.01).collect();
    t.extend((3..=10).map(|i| 1.0 + i as f64 * 0.1));
    t.extend([2.5, 3.0, 5.0, 10.0]);
    t
}

const RELATIVE_TOLERANCE: f64 = 1e-9;

/// Performance profile. Repeated observations of one (instance, algorithm)
/// pair are averaged first.
pub fn performance_profile(observations: &[Observation], taus: &[f64]) -> Profile {
    let mut cells: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
    let mut algorithms = BTreeSet::new();
    let mut instances = BTreeSet::new();
    for o in observations {
        let e = cells.entry((&o.instance, &o.algorithm)).or_insert((0.0, 0));
        e.0 += o.quality;
        e.1 += 1;
        algorithms.insert(o.algorithm.as_str());
        instances.insert(o.instance.as_str());
    }
    let algorithms: Vec<&str> = algorithms.into_iter().collect();
    let mut dropped = Vec::new();
    let mut table: Vec<Vec<f64>> = Vec::new();
    for inst in instances {
        let row: Option<Vec<f64>> = algorithms
            .iter()
            .map(|a| cells.get(&(inst, *a)).map(|&(s, c)| s / c as f64))
            .collect();
        match row {
            Some(r) => table.push(r),
            None => {
                log::warn!("instance {inst} lacks results for some algorithm; dropped from the profile");
                dropped.push(inst.to_string());
            }
        }
    }
    let fractions = (0..algorithms.len())
        .map(|a| {
            taus.iter()
                .map(|&tau| {
                    if table.is_empty() {
                        return 0.0;
                    }
                    let hits = table
                        .iter()
                        .filter(|row| {
                            let best = row.iter().copied().fold(f64::INFINITY, f64::min);
                            row[a] <= tau * best * (1.0 + RELATIVE_TOLERANCE)
                        })
                        .count();
                    hits as f64 / table.len() as f64
                })
                .collect()
        })
        .collect();
    Profile {
        algorithms: algorithms.into_iter().map(String::from).collect(),
        taus: taus.to_vec(),
        fractions,
        dropped,
    }
}
