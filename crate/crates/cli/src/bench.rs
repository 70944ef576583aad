//! Partitioning runs over a (graph x k x P x seed x preset x mode) grid.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use deepmgp::comm::AllToAllMode;
use deepmgp::deep::{partition_graph, DeepConfig, Preset};
use deepmgp::graph::{read_partition, write_partition, SeqGraph};
use deepmgp::report::{imbalance_ratio, verify};
use serde::{Deserialize, Serialize};

use crate::input::{graph_name, load_graph};

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    /// METIS paths (relative to the grid file) or `gen:` descriptions.
    pub graphs: Vec<String>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default = "default_pes")]
    pub pes: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_presets")]
    pub presets: Vec<String>,
    #[serde(default = "default_modes")]
    pub modes: Vec<String>,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
}

fn default_k() -> Vec<usize> {
    (1..=7).map(|i| 1 << i).collect()
}
fn default_pes() -> Vec<usize> {
    vec![1, 2, 4, 8, 16]
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_presets() -> Vec<String> {
    vec!["fast".into()]
}
fn default_modes() -> Vec<String> {
    vec!["grid".into()]
}
fn default_eps() -> f64 {
    0.03
}

impl Grid {
    pub fn load(path: &Path) -> Result<Grid> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut grid: Grid = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for g in &mut grid.graphs {
            if !g.starts_with("gen:") && Path::new(g.as_str()).is_relative() {
                *g = base.join(&*g).to_string_lossy().into_owned();
            }
        }
        Ok(grid)
    }
}

pub fn parse_mode(s: &str) -> Result<AllToAllMode> {
    match s {
        "grid" => Ok(AllToAllMode::Grid),
        "direct" => Ok(AllToAllMode::Direct),
        other => bail!("unknown all-to-all mode `{other}` (expected grid or direct)"),
    }
}

/// One row of the results table. Quality and feasibility come from the
/// partition file written for the run, not from the partitioner's report.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub graph: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub pes: usize,
    pub seed: u64,
    pub preset: String,
    pub mode: String,
    pub algorithm: String,
    /// `ok`, or the error that stopped the run.
    pub status: String,
    pub cut: Option<i64>,
    /// `max_i c(V_i) * k / c(V) - 1`, rounded from the exact fraction.
    pub imbalance: Option<String>,
    pub feasible: Option<bool>,
    pub nonempty: Option<usize>,
    pub alltoall_phases: Option<u64>,
    pub alltoall_messages: Option<u64>,
    pub messages: Option<u64>,
    pub bytes: Option<u64>,
    /// Timings are filled only on request; they would break byte-stable
    /// output.
    pub wall_ms: Option<f64>,
    pub coarsening_ms: Option<f64>,
    pub initial_ms: Option<f64>,
    pub refinement_ms: Option<f64>,
}

pub fn algorithm_name(preset: &str, pes: usize, mode: &str) -> String {
    if mode == "grid" {
        format!("{preset}-p{pes}")
    } else {
        format!("{preset}-p{pes}-{mode}")
    }
}

/// `num / den` rounded half away from zero to `digits` decimals, without
/// going through floating point.
pub fn format_ratio(num: i128, den: i128, digits: u32) -> String {
    assert!(den > 0);
    let scale = 10i128.pow(digits);
    let neg = num < 0;
    let a = num.abs() * scale;
    let q = (a + den / 2) / den;
    let (int, frac) = (q / scale, q % scale);
    let sign = if neg && q != 0 { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = digits as usize)
    }
}

pub struct RunSpec<'a> {
    pub graph: &'a SeqGraph,
    pub name: &'a str,
    pub k: usize,
    pub pes: usize,
    pub seed: u64,
    pub preset: Preset,
    pub mode: &'a str,
    pub eps: f64,
    pub ip_k: usize,
}

/// Runs one configuration, writes the partition to `part_file` and
/// evaluates that file.
pub fn run_one(spec: &RunSpec, part_file: &Path, timings: bool) -> RunRecord {
    let mut rec = RunRecord {
        graph: spec.name.to_string(),
        n: spec.graph.n(),
        m: spec.graph.m(),
        k: spec.k,
        pes: spec.pes,
        seed: spec.seed,
        preset: spec.preset.to_string(),
        mode: spec.mode.to_string(),
        algorithm: algorithm_name(spec.preset.name(), spec.pes, spec.mode),
        ..RunRecord::default()
    };
    match try_run(spec, part_file, timings, &mut rec) {
        Ok(()) => rec.status = "ok".into(),
        Err(e) => rec.status = format!("error: {e:#}"),
    }
    rec
}

fn try_run(spec: &RunSpec, part_file: &Path, timings: bool, rec: &mut RunRecord) -> Result<()> {
    let mut cfg = DeepConfig::new(spec.k, spec.preset).with_seed(spec.seed).with_eps(spec.eps);
    cfg.mode = parse_mode(spec.mode)?;
    cfg.subdivision = spec.ip_k;
    let t = Instant::now();
    let out = partition_graph(spec.graph, &cfg, spec.pes)?;
    let wall = t.elapsed();
    write_partition(&out.labels, part_file)?;

    let labels = read_partition(part_file)?;
    let v = verify(spec.graph, &labels, spec.k, spec.eps)?;
    let (num, den) = imbalance_ratio(&v.block_weights, spec.graph.total_weight());
    rec.cut = Some(v.cut);
    rec.imbalance = Some(format_ratio(num, den, 6));
    rec.feasible = Some(v.feasible);
    rec.nonempty = Some(v.nonempty);
    let (_, a2a) = out.traffic.kind("alltoall");
    let total = out.traffic.total();
    rec.alltoall_phases = Some(a2a.phases);
    rec.alltoall_messages = Some(a2a.messages);
    rec.messages = Some(total.messages);
    rec.bytes = Some(total.bytes);
    if timings {
        let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
        rec.wall_ms = Some(ms(wall));
        rec.coarsening_ms = Some(ms(out.times.coarsening));
        rec.initial_ms = Some(ms(out.times.initial));
        rec.refinement_ms = Some(ms(out.times.refinement));
    }
    Ok(())
}

/// Runs the whole grid, one job after another. Partition files go to
/// `parts_dir`, named by their row index.
pub fn run_grid(grid: &Grid, ip_k: usize, parts_dir: &Path, timings: bool) -> Result<Vec<RunRecord>> {
    let presets: Vec<Preset> = grid.presets.iter().map(|p| p.parse()).collect::<Result<_, _>>()?;
    for m in &grid.modes {
        parse_mode(m)?;
    }
    let mut records = Vec::new();
    for spec_str in &grid.graphs {
        let g = load_graph(spec_str)?;
        let name = graph_name(spec_str);
        for &k in &grid.k {
            for &pes in &grid.pes {
                for preset in &presets {
                    for mode in &grid.modes {
                        for &seed in &grid.seeds {
                            let file: PathBuf = parts_dir.join(format!("{}.part", records.len()));
                            let spec = RunSpec {
                                graph: &g,
                                name: &name,
                                k,
                                pes,
                                seed,
                                preset: *preset,
                                mode,
                                eps: grid.epsilon,
                                ip_k,
                            };
                            let rec = run_one(&spec, &file, timings);
                            log::info!(
                                "{} k={k} P={pes} {} seed={seed}: {} cut={:?} feasible={:?}",
                                name,
                                rec.algorithm,
                                rec.status,
                                rec.cut,
                                rec.feasible
                            );
                            records.push(rec);
                        }
                    }
                }
            }
        }
    }
    Ok(records)
}

pub fn write_records(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
