//! Execution records produced by the recorded backend.

use super::CellClass;
use std::io::Write;

/// One executed primitive step of the execution DAG.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DagNode {
    pub id: u64,
    pub weight: u64,
    /// program-order predecessor, extra dependency (join/resume/barrier/
    /// reactivation), and fork parent
    pub parents: [Option<u64>; 3],
}

/// Arrival/service timestamps of one RMW request on one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellTraceEntry {
    pub cell: u64,
    pub class: CellClass,
    pub task: u64,
    pub arrival: u64,
    pub service: u64,
}

/// Full DAG capture (opt-in via [`super::RecordedRt::record_dag`]).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DagLog {
    pub nodes: Vec<DagNode>,
    pub cell_trace: Vec<CellTraceEntry>,
}

/// Per-class cell contention statistics for one runtime (cumulative across
/// the runs executed on it).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassStats {
    pub class: CellClass,
    pub cells: u64,
    pub requests: u64,
    /// maximum simultaneous queue length observed on any cell of this class
    pub max_queue: u64,
}

/// Summary of one recorded run: total weighted work, maximum-weight path
/// (span), simulated time steps, and cell contention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionRecord {
    pub work: u64,
    pub span: u64,
    pub steps: u64,
    pub tasks: u64,
    pub nodes: u64,
    pub cell_stats: Vec<ClassStats>,
    pub dag: Option<DagLog>,
}

impl ExecutionRecord {
    /// Maximum simultaneous queue length over cells of `class`.
    pub fn max_contention(&self, class: CellClass) -> u64 {
        self.cell_stats
            .iter()
            .find(|s| s.class == class)
            .map(|s| s.max_queue)
            .unwrap_or(0)
    }

    /// Maximum simultaneous queue length over all cells.
    pub fn max_contention_any(&self) -> u64 {
        self.cell_stats.iter().map(|s| s.max_queue).max().unwrap_or(0)
    }

    /// Writes the captured DAG as CSV (`node_id,weight,parent_ids`), where
    /// `parent_ids` is a `;`-separated list. Requires DAG capture.
    pub fn write_dag_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dag = self.dag.as_ref().expect("DAG capture was not enabled for this run");
        writeln!(w, "node_id,weight,parent_ids")?;
        for n in &dag.nodes {
            let parents: Vec<String> =
                n.parents.iter().flatten().map(|p| p.to_string()).collect();
            writeln!(w, "{},{},{}", n.id, n.weight, parents.join(";"))?;
        }
        Ok(())
    }

    /// Recomputes work and span from the captured DAG; used to cross-check
    /// the incremental accounting.
    pub fn recompute_from_dag(&self) -> Option<(u64, u64)> {
        let dag = self.dag.as_ref()?;
        let mut dist: std::collections::HashMap<u64, u64> = std::collections::HashMap::new();
        let mut work = 0u64;
        let mut span = 0u64;
        for n in &dag.nodes {
            let base = n.parents.iter().flatten().map(|p| dist.get(p).copied().unwrap_or(0)).max().unwrap_or(0);
            let d = base + n.weight;
            work += n.weight;
            span = span.max(d);
            dist.insert(n.id, d);
        }
        Some((work, span))
    }
}
