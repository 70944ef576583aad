use std::path::Path;

use anyhow::{Context, Result};
use deepmgp::generate::GenSpec;
use deepmgp::graph::{load_metis, SeqGraph};

/// A METIS file path or a `gen:` generator description.
pub fn load_graph(spec: &str) -> Result<SeqGraph> {
    if spec.starts_with("gen:") {
        let gen: GenSpec = spec.parse()?;
        return Ok(gen.generate());
    }
    load_metis(spec).with_context(|| format!("reading graph {spec}"))
}

/// Short instance name: the file stem for files, the canonical spec for
/// generated graphs.
pub fn graph_name(spec: &str) -> String {
    if spec.starts_with("gen:") {
        return spec.parse::<GenSpec>().map(|g| g.to_string()).unwrap_or_else(|_| spec.to_string());
    }
    Path::new(spec)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| spec.to_string())
}
