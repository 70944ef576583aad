//! Graph containers: the single-address-space [`SeqGraph`], its METIS
//! reader/writer and the range-distributed [`DistGraph`].

mod dist;
mod metis;
mod seq;

pub use dist::{exchange_interface, DistGraph, LocalGraph, OwnedAdjacency, VertexDistribution};
pub use metis::{
    load_metis, parse_metis, parse_partition, read_partition, to_metis_string, write_metis, write_partition,
};
pub use seq::SeqGraph;

use crate::types::Weight;

/// Denominator used to turn an imbalance fraction into an exact ratio.
pub(crate) const EPS_SCALE: i128 = 1_000_000_000;

/// `eps` as a numerator over [`EPS_SCALE`].
pub(crate) fn eps_numerator(eps: f64) -> i128 {
    assert!(eps >= 0.0 && eps.is_finite(), "imbalance must be a non-negative number");
    (eps * EPS_SCALE as f64).round() as i128
}

/// Maximum admissible block weight
/// `max{(1 + eps) * total / k, total / k + max_vertex_weight}`, rounded up.
pub fn l_max(total: Weight, k: usize, eps: f64, max_vertex_weight: Weight) -> Weight {
    assert!(k >= 1);
    let k = k as i128;
    let total = total as i128;
    let scaled = (EPS_SCALE + eps_numerator(eps)) * total;
    let a = div_ceil(scaled, EPS_SCALE * k);
    let b = div_ceil(total, k) + max_vertex_weight as i128;
    a.max(b) as Weight
}

pub(crate) fn div_ceil(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    -((-a).div_euclid(b))
}
