//! Distributed deep multilevel graph partitioning over logical PEs.
//!
//! The PEs of a run live in one process and exchange data only through the
//! collectives of [`comm::Comm`]. Every phase of the partitioner is written
//! as a sequence of per-PE supersteps separated by collectives, so the same
//! code runs on the rayon pool or sequentially (see [`comm::Exec`]).
//!
//! ```
//! use deepmgp::{deep::{partition_graph, DeepConfig, Preset}, graph::SeqGraph};
//!
//! let g = SeqGraph::from_edges(4, None, &[(0, 1, 1), (1, 2, 1), (2, 3, 1)]).unwrap();
//! let cfg = DeepConfig::new(2, Preset::Fast);
//! let out = partition_graph(&g, &cfg, 2).unwrap();
//! assert!(out.feasible);
//! assert_eq!(out.cut, 1);
//! ```

pub mod balancer;
pub mod clustering;
pub mod comm;
pub mod contraction;
pub mod deep;
pub mod error;
pub mod generate;
pub mod graph;
pub mod initial;
pub mod partition;
pub mod refinement;
pub mod report;
pub mod schedule;
pub mod types;

mod rng;

pub use error::{Error, Result};
pub use types::{BlockId, GlobalId, LocalId, Weight};
