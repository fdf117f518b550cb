//! Library-level event counters, shared by all tasks of a runtime. These are
//! instrumentation (not simulated memory): they cost nothing in the recorded
//! model and are deterministic for a given program on the recorded backend.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Default, Debug)]
pub struct Metrics {
    /// queue feed events in the pipelined splitting schemes
    pub feeds: AtomicU64,
    /// effective + ineffective runs of joinin procedures
    pub joinin_runs: AtomicU64,
    /// runs of pushdown procedures
    pub pushdown_runs: AtomicU64,
    /// splitting processes forked
    pub splits: AtomicU64,
    /// sequential joins performed while collating
    pub collate_joins: AtomicU64,
    /// nodes marked during reverse-indexing traces
    pub marked_nodes: AtomicU64,
    /// try-lock probes during reverse-indexing traces
    pub trace_probes: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MetricsSnapshot {
    pub feeds: u64,
    pub joinin_runs: u64,
    pub pushdown_runs: u64,
    pub splits: u64,
    pub collate_joins: u64,
    pub marked_nodes: u64,
    pub trace_probes: u64,
}

impl Metrics {
    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            feeds: self.feeds.load(Ordering::Relaxed),
            joinin_runs: self.joinin_runs.load(Ordering::Relaxed),
            pushdown_runs: self.pushdown_runs.load(Ordering::Relaxed),
            splits: self.splits.load(Ordering::Relaxed),
            collate_joins: self.collate_joins.load(Ordering::Relaxed),
            marked_nodes: self.marked_nodes.load(Ordering::Relaxed),
            trace_probes: self.trace_probes.load(Ordering::Relaxed),
        }
    }

    pub fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

impl std::ops::Sub for MetricsSnapshot {
    type Output = MetricsSnapshot;

    fn sub(self, rhs: MetricsSnapshot) -> MetricsSnapshot {
        MetricsSnapshot {
            feeds: self.feeds - rhs.feeds,
            joinin_runs: self.joinin_runs - rhs.joinin_runs,
            pushdown_runs: self.pushdown_runs - rhs.pushdown_runs,
            splits: self.splits - rhs.splits,
            collate_joins: self.collate_joins - rhs.collate_joins,
            marked_nodes: self.marked_nodes - rhs.marked_nodes,
            trace_probes: self.trace_probes - rhs.trace_probes,
        }
    }
}

impl MetricsSnapshot {
    /// Combined pipeline work counter: feeds plus joinin runs.
    pub fn pipeline_events(&self) -> u64 {
        self.feeds + self.joinin_runs
    }
}
