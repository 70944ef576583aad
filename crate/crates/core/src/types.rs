/// Vertex identifier that is unique across all PEs.
pub type GlobalId = u64;
/// Index into one PE's owned-then-ghost vertex range.
pub type LocalId = u32;
/// Vertex or edge weight. Signed so that gains and deltas share the type.
pub type Weight = i64;
pub type BlockId = u32;

/// Smallest power of two that is at least `x` (`x >= 1`).
pub fn ceil2(x: u64) -> u64 {
    assert!(x >= 1, "ceil2 is undefined for 0");
    x.next_power_of_two()
}

/// `ceil2(ceil(n / c))`, i.e. the smallest power of two `>= n / c`.
pub fn ceil2_ratio(n: u64, c: u64) -> u64 {
    ceil2(n.div_ceil(c).max(1))
}
