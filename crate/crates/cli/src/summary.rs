//! Aggregate tables built from a results file.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use deepmgp::report::{default_taus, geometric_mean, performance_profile, Observation, Profile};

use crate::bench::RunRecord;

/// Instance key of a run: graph and block count.
pub fn instance(r: &RunRecord) -> String {
    format!("{}/k={}", r.graph, r.k)
}

/// Quality observations of all successful, feasible runs.
pub fn observations(records: &[RunRecord]) -> Vec<Observation> {
    records
        .iter()
        .filter(|r| r.status == "ok" && r.feasible == Some(true))
        .filter_map(|r| {
            Some(Observation {
                instance: instance(r),
                algorithm: r.algorithm.clone(),
                quality: r.cut? as f64,
            })
        })
        .collect()
}

pub fn profile(records: &[RunRecord]) -> Profile {
    performance_profile(&observations(records), &default_taus())
}

pub fn write_profile(p: &Profile, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["tau".to_string()];
    header.extend(p.algorithms.iter().cloned());
    w.write_record(&header)?;
    for (t, tau) in p.taus.iter().enumerate() {
        let mut row = vec![format!("{tau:.2}")];
        row.extend(p.fractions.iter().map(|f| format!("{:.6}", f[t])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Geometric mean over instances of the per-instance mean cut, restricted
/// to instances every algorithm solved.
pub fn geometric_means(records: &[RunRecord]) -> BTreeMap<String, f64> {
    let obs = observations(records);
    let mut cells: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for o in &obs {
        let e = cells.entry((o.algorithm.clone(), o.instance.clone())).or_insert((0.0, 0));
        e.0 += o.quality;
        e.1 += 1;
    }
    let algorithms: Vec<String> = {
        let mut a: Vec<String> = obs.iter().map(|o| o.algorithm.clone()).collect();
        a.sort();
        a.dedup();
        a
    };
    let mut instances: Vec<String> = obs.iter().map(|o| o.instance.clone()).collect();
    instances.sort();
    instances.dedup();
    instances.retain(|i| algorithms.iter().all(|a| cells.contains_key(&(a.clone(), i.clone()))));
    algorithms
        .into_iter()
        .map(|a| {
            let means: Vec<f64> = instances
                .iter()
                .map(|i| {
                    let (s, c) = cells[&(a.clone(), i.clone())];
                    s / c as f64
                })
                .collect();
            (a, geometric_mean(&means))
        })
        .collect()
}

/// Message counters per (graph, P, mode), averaged over runs.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ScalingRow {
    pub graph: String,
    pub pes: usize,
    pub mode: String,
    pub runs: usize,
    pub alltoall_phases: f64,
    pub alltoall_messages: f64,
    /// All-to-all messages per communication phase and PE.
    pub messages_per_phase_per_pe: f64,
    pub bytes: f64,
}

pub fn scaling(records: &[RunRecord]) -> Vec<ScalingRow> {
    let mut groups: BTreeMap<(String, usize, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == "ok") {
        groups.entry((r.graph.clone(), r.pes, r.mode.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((graph, pes, mode), rs)| {
            let mean = |f: &dyn Fn(&RunRecord) -> Option<u64>| {
                rs.iter().map(|r| f(r).unwrap_or(0) as f64).sum::<f64>() / rs.len() as f64
            };
            let phases = mean(&|r| r.alltoall_phases);
            let msgs = mean(&|r| r.alltoall_messages);
            ScalingRow {
                graph,
                pes,
                mode,
                runs: rs.len(),
                alltoall_phases: phases,
                alltoall_messages: msgs,
                messages_per_phase_per_pe: if phases > 0.0 { msgs / phases / pes as f64 } else { 0.0 },
                bytes: mean(&|r| r.bytes),
            }
        })
        .collect()
}

pub fn write_scaling(rows: &[ScalingRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(graph: &str, alg: &str, cut: i64, feasible: bool) -> RunRecord {
        RunRecord {
            graph: graph.into(),
            k: 2,
            algorithm: alg.into(),
            status: "ok".into(),
            cut: Some(cut),
            feasible: Some(feasible),
            ..RunRecord::default()
        }
    }

    #[test]
    fn infeasible_runs_do_not_count() {
        let rs = [rec("a", "x", 10, true), rec("a", "y", 5, false), rec("b", "x", 4, true), rec("b", "y", 8, true)];
        let p = profile(&rs);
        // instance a has no feasible y result and is dropped
        assert_eq!(p.dropped, vec!["a/k=2"]);
        assert_eq!(p.fractions[0][0], 1.0);
        assert_eq!(p.fractions[1][0], 0.0);
        let gm = geometric_means(&rs);
        assert!((gm["x"] - 4.0).abs() < 1e-9);
        assert!((gm["y"] - 8.0).abs() < 1e-9);
    }

    #[test]
    fn scaling_rows() {
        let mut a = rec("g", "x", 1, true);
        a.pes = 4;
        a.mode = "direct".into();
        a.alltoall_phases = Some(10);
        a.alltoall_messages = Some(120);
        let rows = scaling(&[a]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].messages_per_phase_per_pe, 3.0);
    }
}
