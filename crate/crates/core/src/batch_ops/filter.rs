//! Parallel filtering of a leaf-based binary tree, and the operations defined
//! directly on top of it (balancing, joining a batch of batches).
//!
//! The item order is preserved and the output batch is a complete BBT. The
//! push-down phase pipelines the blank output tree down the input tree via
//! per-node dedicated queue pairs and reactivated `pushdown` procedures.

use super::{par2, FORK_CUTOFF};
use crate::batch::{Aux, Batch, BatchNode, DedicatedQueue};
use crate::runtime::{Barrier, Ctx, Metrics, Reactivation};
use crate::BatchItem;
use futures::future::BoxFuture;
use std::sync::{Arc, Weak};

type Pred<T> = Arc<dyn Fn(&T) -> bool + Send + Sync>;

/// Filters `t` (any leaf-based binary tree over items) by `pred`, returning
/// the satisfying items in original order as a complete BBT.
pub async fn filter<T: BatchItem>(ctx: &Ctx, t: &Batch<T>, pred: impl Fn(&T) -> bool + Send + Sync + 'static) -> Batch<T> {
    match t.root() {
        None => Batch::empty(),
        Some(root) => filter_tree(ctx, root.clone(), Arc::new(pred)).await,
    }
}

/// Rebuilds any leaf-based binary tree of items as a complete BBT with the
/// identical leaf sequence (filtering with no condition).
pub async fn balance<T: BatchItem>(ctx: &Ctx, t: &Batch<T>) -> Batch<T> {
    match t.root() {
        None => Batch::empty(),
        Some(root) => filter_tree(ctx, root.clone(), Arc::new(|_: &T| true)).await,
    }
}

/// Joins a batch of batches: replaces each leaf by its batch (or a dummy
/// marker when empty) and filters the dummies out.
pub async fn join_batches<T: BatchItem>(ctx: &Ctx, t: &Batch<Batch<T>>) -> Batch<T> {
    match t.root() {
        None => Batch::empty(),
        Some(root) => {
            let grafted = graft(root);
            filter_tree(ctx, grafted, Arc::new(|_: &T| true)).await
        }
    }
}

/// Convenience wrapper: joins the batches in `parts`, in order.
pub async fn join_batch_list<T: BatchItem>(ctx: &Ctx, parts: Vec<Batch<T>>) -> Batch<T> {
    if parts.is_empty() {
        return Batch::empty();
    }
    join_batches(ctx, &Batch::from_items(parts)).await
}

fn graft<T: BatchItem>(node: &Arc<BatchNode<Batch<T>>>) -> Arc<BatchNode<T>> {
    match node.children() {
        None => match node.item().and_then(|b| b.root().cloned()) {
            Some(inner) => inner,
            None => BatchNode::blank_leaf(), // dummy marker, filtered out
        },
        Some((l, r)) => BatchNode::internal(graft(l), graft(r)),
    }
}

pub(crate) async fn filter_tree<T: BatchItem>(ctx: &Ctx, root: Arc<BatchNode<T>>, pred: Pred<T>) -> Batch<T> {
    // preprocessing: counts, rank ranges, queues and pushdown procedures
    let total = count_pass(ctx.clone(), root.clone(), pred).await;
    if total == 0 {
        clear_pass(ctx.clone(), root, true).await;
        return Batch::empty();
    }
    range_pass(ctx.clone(), root.clone(), 0).await;

    // blank complete output tree with rank ranges and leaf barriers
    let out_root = build_blank(ctx, total, 0);

    // push-down phase
    feed(ctx, &root, 1, out_root.clone()).await;

    // collating phase
    wait_done_pass(ctx.clone(), out_root.clone()).await;
    bounds_pass(ctx.clone(), out_root.clone()).await;
    clear_pass(ctx.clone(), root, true).await;
    clear_pass(ctx.clone(), out_root.clone(), false).await;
    Batch::from_root(Some(out_root))
}

/// Computes `count` per node, allocating the per-operation aux state.
fn count_pass<T: BatchItem>(ctx: Ctx, v: Arc<BatchNode<T>>, pred: Pred<T>) -> BoxFuture<'static, usize> {
    Box::pin(async move {
        if v.size() <= FORK_CUTOFF {
            ctx.tick().await;
            return count_seq(&ctx, &v, &pred);
        }
        let (l, r) = v.children_cloned().expect("internal node above cutoff");
        let (cl, cr) = par2(
            &ctx,
            count_pass(ctx.clone(), l, pred.clone()),
            count_pass(ctx.clone(), r, pred.clone()),
        )
        .await;
        init_aux(&ctx, &v, cl + cr);
        cl + cr
    })
}

fn count_seq<T: BatchItem>(ctx: &Ctx, v: &Arc<BatchNode<T>>, pred: &Pred<T>) -> usize {
    let count = match v.children() {
        None => v.item().map(|it| pred(it)).unwrap_or(false) as usize,
        Some((l, r)) => count_seq(ctx, l, pred) + count_seq(ctx, r, pred),
    };
    init_aux(ctx, v, count);
    count
}

fn init_aux<T: BatchItem>(ctx: &Ctx, v: &Arc<BatchNode<T>>, count: usize) {
    let mut aux = Aux { count, ..Aux::default() };
    aux.q1 = Some(DedicatedQueue::new(ctx));
    aux.q2 = Some(DedicatedQueue::new(ctx));
    let weak = Arc::downgrade(v);
    aux.pushdown = Some(Reactivation::new(ctx, move |ctx| {
        let weak: Weak<BatchNode<T>> = weak.clone();
        Box::pin(async move {
            if let Some(v) = weak.upgrade() {
                pushdown_run(ctx, v).await;
            }
        })
    }));
    *v.aux.lock() = Some(aux);
}

/// Top-down pass assigning [rstart, rend) rank ranges.
fn range_pass<T: BatchItem>(ctx: Ctx, v: Arc<BatchNode<T>>, rstart: usize) -> BoxFuture<'static, ()> {
    Box::pin(async move {
        if v.size() <= FORK_CUTOFF {
            ctx.tick().await;
            range_seq(&v, rstart);
            return;
        }
        let count = v.with_aux(|a| {
            a.rstart = rstart;
            a.rend = rstart + a.count;
            a.count
        });
        let _ = count;
        let (l, r) = v.children_cloned().expect("internal node above cutoff");
        let lcount = l.with_aux(|a| a.count);
        par2(
            &ctx,
            range_pass(ctx.clone(), l, rstart),
            range_pass(ctx.clone(), r, rstart + lcount),
        )
        .await;
    })
}

fn range_seq<T: BatchItem>(v: &Arc<BatchNode<T>>, rstart: usize) {
    v.with_aux(|a| {
        a.rstart = rstart;
        a.rend = rstart + a.count;
    });
    if let Some((l, r)) = v.children() {
        let lcount = l.with_aux(|a| a.count);
        range_seq(l, rstart);
        range_seq(r, rstart + lcount);
    }
}

/// Builds the blank complete output tree; every node carries its rank range
/// and every leaf a `done` barrier.
fn build_blank<T: BatchItem>(ctx: &Ctx, n: usize, rstart: usize) -> Arc<BatchNode<T>> {
    let node = if n == 1 {
        BatchNode::blank_leaf()
    } else {
        let h = usize::BITS - (n - 1).leading_zeros();
        let halfcap = 1usize << (h - 1);
        let left_n = if n >= halfcap + halfcap / 2 { halfcap } else { n - halfcap / 2 };
        BatchNode::internal(build_blank(ctx, left_n, rstart), build_blank(ctx, n - left_n, rstart + left_n))
    };
    let mut aux = Aux { count: n, rstart, rend: rstart + n, ..Aux::default() };
    if n == 1 {
        aux.done = Some(Barrier::new(ctx));
    }
    *node.aux.lock() = Some(aux);
    node
}

/// Pushes `b` onto queue `qi` of `target` and reactivates its pushdown.
fn feed<'a, T: BatchItem>(
    ctx: &'a Ctx,
    target: &'a Arc<BatchNode<T>>,
    qi: u8,
    b: Arc<BatchNode<T>>,
) -> BoxFuture<'a, ()> {
    Box::pin(async move {
        Metrics::bump(&ctx.metrics().feeds);
        let (q, pd) = target.with_aux(|a| {
            let q = if qi == 1 { a.q1.clone() } else { a.q2.clone() };
            (q.expect("queues not initialized"), a.pushdown.clone().expect("pushdown not initialized"))
        });
        q.push(b).await;
        pd.reactivate(ctx).await;
    })
}

async fn pushdown_run<T: BatchItem>(ctx: Ctx, v: Arc<BatchNode<T>>) {
    Metrics::bump(&ctx.metrics().pushdown_runs);
    let Some((q1, q2, pd)) =
        v.try_aux(|a| (a.q1.clone().unwrap(), a.q2.clone().unwrap(), a.pushdown.clone().unwrap()))
    else {
        return; // operation already finished and released its state
    };
    for qi in [1u8, 2u8] {
        let q = if qi == 1 { &q1 } else { &q2 };
        let Some(b) = q.pop().await else { continue };
        pd.reactivate(&ctx).await;
        if v.is_leaf() {
            debug_assert!(b.is_leaf(), "a multi-leaf output subtree reached an input leaf");
            let item = v.item().expect("filtered leaf must hold an item").clone();
            b.set_item(item);
            let done = b.with_aux(|a| a.done.clone().expect("leaf done barrier"));
            done.notify(&ctx).await;
            continue;
        }
        let (vl, vr) = v.children_cloned().expect("internal");
        let (l_rend, r_rstart) = (vl.with_aux(|a| a.rend), vr.with_aux(|a| a.rstart));
        let (b_rstart, b_rend) = b.with_aux(|a| (a.rstart, a.rend));
        if b_rend <= l_rend {
            feed(&ctx, &vl, qi, b).await;
            continue;
        }
        if b_rstart >= r_rstart {
            feed(&ctx, &vr, qi, b).await;
            continue;
        }
        // split the arriving subtree between the two children
        Metrics::bump(&ctx.metrics().splits);
        let ctx2 = ctx.clone();
        let _split = ctx
            .fork(async move {
                let mut b = b;
                while !b.is_leaf() {
                    ctx2.tick().await;
                    let (bl, br) = b.children_cloned().unwrap();
                    if bl.with_aux(|a| a.rend) <= l_rend {
                        feed(&ctx2, &vl, 2, bl).await;
                        b = br;
                    } else {
                        feed(&ctx2, &vr, 1, br).await;
                        b = bl;
                    }
                }
                if b.with_aux(|a| a.rend) <= l_rend {
                    feed(&ctx2, &vl, 2, b).await;
                } else {
                    feed(&ctx2, &vr, 1, b).await;
                }
            })
            .await;
    }
}

fn wait_done_pass<T: BatchItem>(ctx: Ctx, v: Arc<BatchNode<T>>) -> BoxFuture<'static, ()> {
    Box::pin(async move {
        match v.children_cloned() {
            None => {
                let done = v.with_aux(|a| a.done.clone().expect("leaf done barrier"));
                done.wait(&ctx).await;
            }
            Some((l, r)) => {
                par2(&ctx, wait_done_pass(ctx.clone(), l), wait_done_pass(ctx.clone(), r)).await;
            }
        }
    })
}

/// Bottom-up recomputation of first/last on the output tree.
fn bounds_pass<T: BatchItem>(ctx: Ctx, v: Arc<BatchNode<T>>) -> BoxFuture<'static, (T, T)> {
    Box::pin(async move {
        if v.size() <= FORK_CUTOFF {
            ctx.tick().await;
            return bounds_seq(&v);
        }
        let (l, r) = v.children_cloned().expect("internal node above cutoff");
        let ((lf, _), (_, rl)) =
            par2(&ctx, bounds_pass(ctx.clone(), l), bounds_pass(ctx.clone(), r)).await;
        v.set_bounds(lf.clone(), rl.clone());
        (lf, rl)
    })
}

fn bounds_seq<T: BatchItem>(v: &Arc<BatchNode<T>>) -> (T, T) {
    match v.children() {
        None => {
            let it = v.item().expect("output leaf not filled").clone();
            v.set_bounds(it.clone(), it.clone());
            (it.clone(), it)
        }
        Some((l, r)) => {
            let (lf, _) = bounds_seq(l);
            let (_, rl) = bounds_seq(r);
            v.set_bounds(lf.clone(), rl.clone());
            (lf, rl)
        }
    }
}

/// Releases per-operation aux state. `input` trees may still see straggler
/// pushdown reactivations, which no-op once the state is gone.
fn clear_pass<T: BatchItem>(ctx: Ctx, v: Arc<BatchNode<T>>, input: bool) -> BoxFuture<'static, ()> {
    Box::pin(async move {
        if v.size() <= FORK_CUTOFF {
            clear_seq(&v);
            return;
        }
        let (l, r) = v.children_cloned().expect("internal node above cutoff");
        par2(&ctx, clear_pass(ctx.clone(), l, input), clear_pass(ctx.clone(), r, input)).await;
        v.clear_aux();
    })
}

fn clear_seq<T: BatchItem>(v: &Arc<BatchNode<T>>) {
    if let Some((l, r)) = v.children() {
        clear_seq(l);
        clear_seq(r);
    }
    v.clear_aux();
}
