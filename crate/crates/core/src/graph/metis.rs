//! METIS graph format.
//!
//! Header `n m [fmt [ncon]]`, then one line per vertex. The `fmt` digits
//! (read right to left) enable edge weights, vertex weights and vertex sizes.
//! Neighbor IDs are 1-indexed; lines starting with `%` are comments.

use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::SeqGraph;
use crate::error::{Error, Result};
use crate::types::{BlockId, LocalId, Weight};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Format {
    edge_weights: bool,
    vertex_weights: bool,
    vertex_sizes: bool,
    ncon: usize,
}

fn parse_format(code: &str, ncon: Option<&str>, line: usize) -> Result<Format> {
    if code.len() > 3 || !code.chars().all(|c| c == '0' || c == '1') {
        return Err(Error::parse(line, format!("unsupported fmt code '{code}'")));
    }
    let digits: Vec<bool> = code.chars().rev().map(|c| c == '1').collect();
    let flag = |i: usize| digits.get(i).copied().unwrap_or(false);
    let ncon = match ncon {
        Some(s) => s
            .parse::<usize>()
            .map_err(|_| Error::parse(line, format!("invalid ncon '{s}'")))?,
        None => 1,
    };
    if ncon != 1 && flag(1) {
        return Err(Error::parse(line, "multi-constraint vertex weights are not supported"));
    }
    Ok(Format {
        edge_weights: flag(0),
        vertex_weights: flag(1),
        vertex_sizes: flag(2),
        ncon,
    })
}

fn parse_num(tok: &str, line: usize, what: &str) -> Result<i64> {
    tok.parse::<i64>()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{tok}'")))
}

pub fn load_metis(path: impl AsRef<Path>) -> Result<SeqGraph> {
    let text = std::fs::read_to_string(path)?;
    parse_metis(&text)
}

pub fn parse_metis(text: &str) -> Result<SeqGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim_start().starts_with('%'));

    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() < 2 || toks.len() > 4 {
        return Err(Error::parse(hline, "header must be 'n m [fmt [ncon]]'"));
    }
    let n = parse_num(toks[0], hline, "vertex count")?;
    let m = parse_num(toks[1], hline, "edge count")?;
    if n < 0 || m < 0 || n > u32::MAX as i64 {
        return Err(Error::parse(hline, "vertex and edge counts must be non-negative"));
    }
    let (n, m) = (n as usize, m as usize);
    let fmt = match toks.get(2) {
        Some(code) => parse_format(code, toks.get(3).copied(), hline)?,
        None => Format {
            ncon: 1,
            ..Format::default()
        },
    };

    let mut xadj = Vec::with_capacity(n + 1);
    xadj.push(0usize);
    let mut adjncy: Vec<LocalId> = Vec::with_capacity(2 * m);
    let mut adjwgt: Vec<Weight> = Vec::with_capacity(2 * m);
    let mut vwgt: Vec<Weight> = Vec::with_capacity(n);
    let mut line_of = Vec::with_capacity(n);
    let mut last_line = hline;

    for u in 0..n {
        let (lno, body) = lines.next().unwrap_or((last_line + 1, ""));
        last_line = lno;
        line_of.push(lno);
        let mut toks = body.split_whitespace();
        if fmt.vertex_sizes {
            let s = toks.next().ok_or_else(|| Error::parse(lno, "missing vertex size"))?;
            parse_num(s, lno, "vertex size")?;
        }
        if fmt.vertex_weights {
            let s = toks.next().ok_or_else(|| Error::parse(lno, "missing vertex weight"))?;
            let w = parse_num(s, lno, "vertex weight")?;
            if w < 1 {
                return Err(Error::parse(lno, format!("vertex weight must be positive, got {w}")));
            }
            vwgt.push(w);
        } else {
            vwgt.push(1);
        }
        let rest: Vec<&str> = toks.collect();
        let stride = if fmt.edge_weights { 2 } else { 1 };
        if rest.len() % stride != 0 {
            return Err(Error::parse(lno, "neighbor without edge weight"));
        }
        for pair in rest.chunks(stride) {
            let v = parse_num(pair[0], lno, "neighbor")?;
            if v < 1 || v as usize > n {
                return Err(Error::parse(lno, format!("neighbor {v} out of range 1..={n}")));
            }
            let v = (v - 1) as usize;
            if v == u {
                return Err(Error::parse(lno, "self-loop"));
            }
            let w = if fmt.edge_weights {
                let w = parse_num(pair[1], lno, "edge weight")?;
                if w < 1 {
                    return Err(Error::parse(lno, format!("edge weight must be positive, got {w}")));
                }
                w
            } else {
                1
            };
            adjncy.push(v as LocalId);
            adjwgt.push(w);
        }
        xadj.push(adjncy.len());
    }
    if let Some((lno, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(lno, format!("unexpected trailing content '{}'", extra.trim())));
    }

    // Symmetry and duplicates, reported at the offending vertex line.
    let mut sorted: Vec<Vec<(LocalId, Weight)>> = (0..n)
        .map(|u| {
            let mut a: Vec<_> = (xadj[u]..xadj[u + 1]).map(|i| (adjncy[i], adjwgt[i])).collect();
            a.sort_unstable();
            a
        })
        .collect();
    for u in 0..n {
        if sorted[u].windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::parse(line_of[u], "duplicate edge"));
        }
    }
    for u in 0..n {
        for &(v, w) in &sorted[u] {
            match sorted[v as usize].binary_search_by_key(&(u as LocalId), |e| e.0) {
                Ok(i) if sorted[v as usize][i].1 == w => {}
                Ok(_) => {
                    return Err(Error::parse(
                        line_of[u],
                        format!("asymmetric edge weight between {} and {}", u + 1, v + 1),
                    ))
                }
                Err(_) => {
                    return Err(Error::parse(
                        line_of[u],
                        format!("asymmetric adjacency: {} lists {} but not vice versa", u + 1, v + 1),
                    ))
                }
            }
        }
    }
    sorted.clear();
    if adjncy.len() != 2 * m {
        return Err(Error::parse(
            hline,
            format!("header announces {m} edges but adjacency lists hold {}", adjncy.len() / 2),
        ));
    }
    let _ = fmt.ncon;
    Ok(SeqGraph::from_csr_unchecked(xadj, adjncy, adjwgt, vwgt))
}

/// Serializes `g` in METIS format, emitting weight columns only when they are
/// not all one.
pub fn to_metis_string(g: &SeqGraph) -> String {
    let ew = !g.has_unit_edge_weights();
    let vw = !g.has_unit_vertex_weights();
    let mut s = String::new();
    match (vw, ew) {
        (false, false) => writeln!(s, "{} {}", g.n(), g.m()),
        (vw, ew) => writeln!(s, "{} {} {}{}", g.n(), g.m(), u8::from(vw), u8::from(ew)),
    }
    .unwrap();
    for u in 0..g.n() as LocalId {
        let mut first = true;
        if vw {
            write!(s, "{}", g.vertex_weight(u)).unwrap();
            first = false;
        }
        for (v, w) in g.neighbors(u) {
            if !first {
                s.push(' ');
            }
            first = false;
            write!(s, "{}", v + 1).unwrap();
            if ew {
                write!(s, " {w}").unwrap();
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_metis(g: &SeqGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_metis_string(g))?;
    Ok(())
}

/// Partition file: one 0-indexed block ID per line, in global vertex order.
pub fn write_partition(part: &[BlockId], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for b in part {
        writeln!(w, "{b}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_partition(path: impl AsRef<Path>) -> Result<Vec<BlockId>> {
    let text = std::fs::read_to_string(path)?;
    parse_partition(&text)
}

pub fn parse_partition(text: &str) -> Result<Vec<BlockId>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<BlockId>()
                .map_err(|_| Error::parse(i + 1, format!("invalid block id '{}'", l.trim())))
        })
        .collect()
}
