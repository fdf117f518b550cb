//! Batch-parallel 2-3 trees with pipelined splitting and joining.
//!
//! The crate provides:
//!
//! * [`runtime`] — fork/join task runtime with FIFO-queued RMW cells, plus a
//!   deterministic recorded backend that measures work, span, and per-cell
//!   contention of each run.
//! * [`batch`] — leaf-based height-balanced binary trees used as batches,
//!   their slices, and the single-producer/single-consumer dedicated queue.
//! * [`batch_ops`] — pipelined batch operations: filter, balance, partition,
//!   join-of-batches, merge, and merge sort.
//! * [`ptree`] — the batch-parallel 2-3 tree: unsorted batch search, sorted
//!   batch access (split/execute/join phases), reverse-indexing, and batch
//!   joining of instances.
//! * [`sorted_set`] — persistent sorted sets (intersection, union,
//!   difference) layered on the 2-3 tree.

pub mod batch;
pub mod batch_ops;
pub mod ptree;
pub mod runtime;
pub mod sorted_set;

/// Anything a batch tree can carry at its leaves.
pub trait BatchItem: Clone + Send + Sync + 'static {}

impl<T: Clone + Send + Sync + 'static> BatchItem for T {}

/// Ordered items stored in sorted batches and trees.
pub trait Item: BatchItem + Ord + std::fmt::Debug {}

impl<T: BatchItem + Ord + std::fmt::Debug> Item for T {}

/// Errors reported by batch constructors and validators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input items must be strictly increasing (violation at index {0})")]
    Unsorted(usize),
    #[error("rank range [{lo}, {hi}] out of bounds for batch of size {size}")]
    RankRange { lo: usize, hi: usize, size: usize },
    #[error("structural validation failed: {0}")]
    Invalid(String),
}
