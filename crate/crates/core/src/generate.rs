//! Synthetic instances: random geometric graphs on a uniform cell grid and
//! Chung–Lu graphs with a power-law expected degree sequence.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::SeqGraph;
use crate::rng;

/// Random geometric graph in the unit square with the radius chosen for an
/// expected average degree of `avg_deg`.
pub fn gen_rgg2d(n: usize, avg_deg: f64, seed: u64) -> SeqGraph {
    assert!(n >= 2, "a geometric graph needs at least two points");
    let r = (avg_deg / (PI * (n as f64 - 1.0))).sqrt();
    rgg::<2>(n, r, seed)
}

/// Random geometric graph in the unit cube; the radius gives an expected
/// average degree of `avg_deg` (ignoring boundary effects).
pub fn gen_rgg3d(n: usize, avg_deg: f64, seed: u64) -> SeqGraph {
    assert!(n >= 2, "a geometric graph needs at least two points");
    let r = (3.0 * avg_deg / (4.0 * PI * (n as f64 - 1.0))).cbrt();
    rgg::<3>(n, r, seed)
}

/// Random geometric graph with an explicit radius.
pub fn gen_rgg2d_radius(n: usize, r: f64, seed: u64) -> SeqGraph {
    rgg::<2>(n, r, seed)
}

fn rgg<const D: usize>(n: usize, r: f64, seed: u64) -> SeqGraph {
    let mut rng: ChaCha8Rng = rng::stream(seed, &[D as u64]);
    let points: Vec<[f64; D]> = (0..n).map(|_| std::array::from_fn(|_| rng.gen::<f64>())).collect();
    if n == 0 || r <= 0.0 {
        return SeqGraph::from_edges_simplified(n, Vec::new());
    }
    // cells of side >= r, so neighbors lie in adjacent cells
    let side = ((1.0 / r).floor() as usize).clamp(1, 1 << (60 / D));
    let cell_of = |p: &[f64; D]| -> [usize; D] { std::array::from_fn(|d| ((p[d] * side as f64) as usize).min(side - 1)) };
    let index = |c: &[usize; D]| c.iter().fold(0usize, |acc, &x| acc * side + x);
    let cells = side.pow(D as u32);
    let mut start = vec![0usize; cells + 1];
    for p in &points {
        start[index(&cell_of(p)) + 1] += 1;
    }
    for i in 0..cells {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut members = vec![0u32; n];
    for (i, p) in points.iter().enumerate() {
        let c = index(&cell_of(p));
        members[fill[c]] = i as u32;
        fill[c] += 1;
    }

    let r2 = r * r;
    let mut edges = Vec::new();
    let offsets = 3usize.pow(D as u32);
    for (i, p) in points.iter().enumerate() {
        let c = cell_of(p);
        for o in 0..offsets {
            let mut nb = [0usize; D];
            let mut ok = true;
            let mut rest = o;
            for d in 0..D {
                let delta = (rest % 3) as isize - 1;
                rest /= 3;
                let x = c[d] as isize + delta;
                if x < 0 || x >= side as isize {
                    ok = false;
                    break;
                }
                nb[d] = x as usize;
            }
            if !ok {
                continue;
            }
            let ci = index(&nb);
            for &j in &members[start[ci]..start[ci + 1]] {
                if (j as usize) <= i {
                    continue;
                }
                let q = &points[j as usize];
                let dist2: f64 = (0..D).map(|d| (p[d] - q[d]).powi(2)).sum();
                if dist2 <= r2 {
                    edges.push((i as u32, j));
                }
            }
        }
    }
    SeqGraph::from_edges_simplified(n, edges)
}

/// Chung–Lu graph: vertex `i` gets expected degree proportional to
/// `(i + 1)^(-1 / (gamma - 1))`, scaled to an average of `avg_deg`.
/// `n * avg_deg / 2` endpoint pairs are drawn in proportion to these
/// weights; self-loops and duplicates are dropped.
pub fn gen_powerlaw(n: usize, avg_deg: f64, gamma: f64, seed: u64) -> SeqGraph {
    assert!(gamma > 2.0, "the power-law exponent must exceed 2");
    let m = (n as f64 * avg_deg / 2.0).round() as usize;
    if n < 2 || m == 0 {
        return SeqGraph::from_edges_simplified(n, Vec::new());
    }
    let exp = -1.0 / (gamma - 1.0);
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        acc += ((i + 1) as f64).powf(exp);
        cumulative.push(acc);
    }
    let mut rng: ChaCha8Rng = rng::stream(seed, &[0x91a]);
    let draw = |rng: &mut ChaCha8Rng| -> u32 {
        let x = rng.gen::<f64>() * acc;
        cumulative.partition_point(|&c| c <= x).min(n - 1) as u32
    };
    let edges: Vec<(u32, u32)> = (0..m).map(|_| (draw(&mut rng), draw(&mut rng))).collect();
    // shuffle IDs so that heavy vertices are not all on the first PE
    let mut perm: Vec<u32> = (0..n as u32).collect();
    rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
    let edges = edges.into_iter().map(|(u, v)| (perm[u as usize], perm[v as usize])).collect();
    SeqGraph::from_edges_simplified(n, edges)
}

/// Parsed `gen:` instance description.
#[derive(Clone, Debug, PartialEq)]
pub enum GenSpec {
    Rgg2d { n: usize, deg: f64, seed: u64 },
    Rgg3d { n: usize, deg: f64, seed: u64 },
    Plaw { n: usize, deg: f64, gamma: f64, seed: u64 },
}

impl GenSpec {
    pub fn generate(&self) -> SeqGraph {
        match *self {
            GenSpec::Rgg2d { n, deg, seed } => gen_rgg2d(n, deg, seed),
            GenSpec::Rgg3d { n, deg, seed } => gen_rgg3d(n, deg, seed),
            GenSpec::Plaw { n, deg, gamma, seed } => gen_powerlaw(n, deg, gamma, seed),
        }
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenSpec::Rgg2d { n, deg, seed } => write!(f, "gen:rgg2d:n={n},deg={deg},seed={seed}"),
            GenSpec::Rgg3d { n, deg, seed } => write!(f, "gen:rgg3d:n={n},deg={deg},seed={seed}"),
            GenSpec::Plaw { n, deg, gamma, seed } => write!(f, "gen:plaw:n={n},deg={deg},gamma={gamma},seed={seed}"),
        }
    }
}

impl FromStr for GenSpec {
    type Err = Error;

    /// `gen:rgg2d:n=65536,deg=8,seed=1`, `gen:rgg3d:...` or
    /// `gen:plaw:n=65536,deg=8,gamma=3,seed=1`. `seed` defaults to 0 and
    /// `gamma` to 3.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidConfig(format!("generator `{s}`: {m}"));
        let rest = s.strip_prefix("gen:").ok_or_else(|| bad("missing `gen:` prefix".into()))?;
        let (kind, args) = rest.split_once(':').unwrap_or((rest, ""));
        let (mut n, mut deg, mut gamma, mut seed) = (None, None, 3.0, 0u64);
        for kv in args.split(',').filter(|x| !x.is_empty()) {
            let (key, val) = kv.split_once('=').ok_or_else(|| bad(format!("`{kv}` is not key=value")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("`{v}` is not a number")));
            match key.trim() {
                "n" => n = Some(val.parse::<usize>().map_err(|_| bad(format!("`{val}` is not a count")))?),
                "deg" => deg = Some(num(val)?),
                "gamma" => gamma = num(val)?,
                "seed" => seed = val.parse().map_err(|_| bad(format!("`{val}` is not a seed")))?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let n = n.ok_or_else(|| bad("missing n".into()))?;
        let deg = deg.ok_or_else(|| bad("missing deg".into()))?;
        if !(deg >= 0.0 && deg.is_finite()) {
            return Err(bad("deg must be non-negative".into()));
        }
        match kind {
            "rgg2d" | "rgg3d" if n < 2 => Err(bad("n must be at least 2".into())),
            "rgg2d" => Ok(GenSpec::Rgg2d { n, deg, seed }),
            "rgg3d" => Ok(GenSpec::Rgg3d { n, deg, seed }),
            "plaw" if gamma <= 2.0 => Err(bad("gamma must exceed 2".into())),
            "plaw" => Ok(GenSpec::Plaw { n, deg, gamma, seed }),
            other => Err(bad(format!("unknown generator `{other}`"))),
        }
    }
}

/// Hill estimate of the power-law exponent of the degree distribution from
/// the largest `fraction` of degrees.
pub fn hill_exponent(g: &SeqGraph, fraction: f64) -> f64 {
    let mut deg: Vec<f64> = (0..g.n() as u32).map(|v| g.degree(v) as f64).filter(|&d| d > 0.0).collect();
    deg.sort_by(|a, b| b.total_cmp(a));
    let top = ((deg.len() as f64 * fraction) as usize).clamp(1, deg.len().saturating_sub(1).max(1));
    let threshold = deg[top.min(deg.len() - 1)];
    let sum: f64 = deg[..top].iter().map(|d| (d / threshold).ln()).sum();
    1.0 + top as f64 / sum
}
