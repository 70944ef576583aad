mod bench;
mod input;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use deepmgp::comm::Exec;
use deepmgp::deep::{partition_graph, DeepConfig, Preset};
use deepmgp::graph::{read_partition, write_metis, write_partition};
use deepmgp::report::{imbalance_ratio, verify};

use crate::bench::{format_ratio, parse_mode, Grid};
use crate::input::load_graph;

#[derive(Parser)]
#[command(name = "deepmgp", version, about = "Distributed deep multilevel graph partitioning on logical PEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Fast,
    Strong,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Preset {
        match p {
            PresetArg::Fast => Preset::Fast,
            PresetArg::Strong => Preset::Strong,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Grid,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecArg {
    Parallel,
    Sequential,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a graph into k blocks.
    Partition {
        /// METIS file or generator description such as gen:rgg2d:n=65536,deg=8,seed=1
        graph: String,
        #[arg(short)]
        k: usize,
        #[arg(long, default_value_t = 0.03)]
        epsilon: f64,
        /// Number of logical PEs (a power of two).
        #[arg(short = 'P', long = "pes", default_value_t = 1)]
        pes: usize,
        #[arg(long, value_enum, default_value = "fast")]
        preset: PresetArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fan-out of one extension step.
        #[arg(long = "ip-K", default_value_t = 2)]
        ip_k: usize,
        #[arg(long, value_enum, default_value = "grid")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "parallel")]
        exec: ExecArg,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a generated graph in METIS format.
    Generate {
        spec: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a grid of partitioning jobs described by a TOML file.
    Bench {
        #[arg(long)]
        grid: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long = "ip-K", default_value_t = 2)]
        ip_k: usize,
        /// Keep partition files here instead of a temporary directory.
        #[arg(long)]
        parts_dir: Option<PathBuf>,
        /// Add wall-clock columns (the output is then no longer byte-stable).
        #[arg(long)]
        timings: bool,
    },
    /// Performance profile over the feasible runs of a results file.
    Profile {
        results: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Message counters per graph, PE count and all-to-all mode.
    Scaling {
        results: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check a partition file; exit status 0 iff it is feasible.
    Verify {
        graph: String,
        partition: PathBuf,
        #[arg(short)]
        k: usize,
        #[arg(long, default_value_t = 0.03)]
        epsilon: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Partition {
            graph,
            k,
            epsilon,
            pes,
            preset,
            seed,
            ip_k,
            mode,
            exec,
            output,
        } => {
            let g = load_graph(&graph)?;
            let mut cfg = DeepConfig::new(k, preset.into()).with_seed(seed).with_eps(epsilon);
            cfg.subdivision = ip_k;
            cfg.mode = parse_mode(match mode {
                ModeArg::Grid => "grid",
                ModeArg::Direct => "direct",
            })?;
            cfg.exec = match exec {
                ExecArg::Parallel => Exec::Parallel,
                ExecArg::Sequential => Exec::Sequential,
            };
            let t = Instant::now();
            let out = partition_graph(&g, &cfg, pes)?;
            let wall = t.elapsed();
            write_partition(&out.labels, &output).with_context(|| format!("writing {}", output.display()))?;
            let (num, den) = imbalance_ratio(&out.block_weights, g.total_weight());
            println!(
                "n={} m={} k={k} P={pes} cut={} imbalance={} feasible={} time={:.3}s",
                g.n(),
                g.m(),
                out.cut,
                format_ratio(num, den, 6),
                out.feasible,
                wall.as_secs_f64()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate { spec, output } => {
            let g = load_graph(&spec)?;
            write_metis(&g, &output).with_context(|| format!("writing {}", output.display()))?;
            println!("n={} m={}", g.n(), g.m());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            grid,
            output,
            ip_k,
            parts_dir,
            timings,
        } => {
            let spec = Grid::load(&grid)?;
            let tmp;
            let dir = match parts_dir {
                Some(d) => {
                    std::fs::create_dir_all(&d)?;
                    d
                }
                None => {
                    tmp = tempfile::tempdir()?;
                    tmp.path().to_path_buf()
                }
            };
            let records = bench::run_grid(&spec, ip_k, &dir, timings)?;
            bench::write_records(&records, &output)?;
            let failed = records.iter().filter(|r| r.status != "ok").count();
            let infeasible = records.iter().filter(|r| r.feasible == Some(false)).count();
            println!("{} runs, {failed} failed, {infeasible} infeasible", records.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Profile { results, output } => {
            let records = bench::read_records(&results)?;
            let p = summary::profile(&records);
            summary::write_profile(&p, &output)?;
            for (alg, gm) in summary::geometric_means(&records) {
                println!("{alg}\tgeometric mean cut {gm:.1}");
            }
            if !p.dropped.is_empty() {
                println!("{} instance(s) left out for missing results", p.dropped.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scaling { results, output } => {
            let records = bench::read_records(&results)?;
            let rows = summary::scaling(&records);
            summary::write_scaling(&rows, &output)?;
            for r in &rows {
                println!(
                    "{} P={} {}: {:.0} all-to-all messages in {:.0} phases",
                    r.graph, r.pes, r.mode, r.alltoall_messages, r.alltoall_phases
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            graph,
            partition,
            k,
            epsilon,
        } => {
            let g = load_graph(&graph)?;
            let labels = read_partition(&partition).with_context(|| format!("reading {}", partition.display()))?;
            let v = verify(&g, &labels, k, epsilon)?;
            let (num, den) = imbalance_ratio(&v.block_weights, g.total_weight());
            println!(
                "cut={} imbalance={} max_block={} l_max={} nonempty={} feasible={}",
                v.cut,
                format_ratio(num, den, 6),
                v.block_weights.iter().max().copied().unwrap_or(0),
                v.l_max,
                v.nonempty,
                v.feasible
            );
            Ok(if v.feasible { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
