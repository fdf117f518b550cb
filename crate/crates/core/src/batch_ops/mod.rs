//! Pipelined batch operations: parallel filter, balance, partition,
//! join-of-batches, merge, and merge sort.
//!
//! Each operation runs the three-phase pattern from the splitting scheme:
//! preprocess, pipelined push-down through reactivated per-node procedures
//! feeding dedicated queues, and a collating phase gated on barriers.

mod filter;
mod merge;
mod partition;

pub use filter::{balance, filter, join_batches};
pub use merge::{merge, merge_sort};
pub use partition::partition;

use crate::runtime::{Ctx, TaskHandle};
use futures::future::BoxFuture;
use std::future::Future;

/// Subtree size below which recursions run sequentially instead of forking.
pub(crate) const FORK_CUTOFF: usize = 8;

/// Forks `fa`, runs `fb` inline, joins; the usual two-way parallel call.
pub(crate) async fn par2<A, B, FA, FB>(ctx: &Ctx, fa: FA, fb: FB) -> (A, B)
where
    A: Send + 'static,
    B: Send + 'static,
    FA: Future<Output = A> + Send + 'static,
    FB: Future<Output = B> + Send + 'static,
{
    let ha: TaskHandle<A> = ctx.fork(fa).await;
    let b = fb.await;
    let a = ha.join(ctx).await;
    (a, b)
}

/// Runs every future in parallel and joins them all.
pub(crate) async fn par_all<T: Send + 'static>(
    ctx: &Ctx,
    futs: Vec<BoxFuture<'static, T>>,
) -> Vec<T> {
    let mut handles = Vec::with_capacity(futs.len());
    for f in futs {
        handles.push(ctx.fork(f).await);
    }
    let mut out = Vec::with_capacity(handles.len());
    for h in handles {
        out.push(h.join(ctx).await);
    }
    out
}
