//! Parallel multi-way partitioning of a sorted batch around a sorted batch of
//! pivots: the input tree is pushed down the pivot tree (extended with a
//! maximal sentinel), and each pivot leaf collates the slice it received once
//! its `fed` barrier says no more subtrees can arrive.

use super::par2;
use crate::batch::{bbt_join, Batch, BatchNode, DedicatedQueue};
use crate::runtime::{Barrier, Ctx, Metrics, Reactivation};
use crate::Item;
use futures::future::BoxFuture;
use parking_lot::Mutex;
use std::sync::{Arc, OnceLock, Weak};

/// Per-node state of the pivot tree: the last pivot of the subtree (`None`
/// once the subtree contains the sentinel, which compares above everything),
/// the dedicated queue pair, and the freeze protocol state.
pub(crate) struct PivotNode<T> {
    bound: Option<T>,
    leaf_idx: Option<usize>,
    children: Option<(Arc<PivotNode<T>>, Arc<PivotNode<T>>)>,
    q1: DedicatedQueue<Arc<BatchNode<T>>>,
    q2: DedicatedQueue<Arc<BatchNode<T>>>,
    pushdown: OnceLock<Reactivation>,
    frozen: Mutex<bool>,
    fed: Barrier,
    split: Mutex<Option<Barrier>>,
}

impl<T: Item> PivotNode<T> {
    fn leaf(ctx: &Ctx, bound: Option<T>, idx: usize) -> Arc<Self> {
        Self::make(ctx, bound, Some(idx), None)
    }

    fn internal(ctx: &Ctx, l: Arc<Self>, r: Arc<Self>) -> Arc<Self> {
        Self::make(ctx, r.bound.clone(), None, Some((l, r)))
    }

    fn make(
        ctx: &Ctx,
        bound: Option<T>,
        leaf_idx: Option<usize>,
        children: Option<(Arc<Self>, Arc<Self>)>,
    ) -> Arc<Self> {
        let node = Arc::new(PivotNode {
            bound,
            leaf_idx,
            children,
            q1: DedicatedQueue::new(ctx),
            q2: DedicatedQueue::new(ctx),
            pushdown: OnceLock::new(),
            frozen: Mutex::new(false),
            fed: Barrier::new(ctx),
            split: Mutex::new(None),
        });
        let weak = Arc::downgrade(&node);
        node.pushdown
            .set(Reactivation::new(ctx, move |ctx| {
                let weak: Weak<PivotNode<T>> = weak.clone();
                Box::pin(async move {
                    if let Some(v) = weak.upgrade() {
                        pushdown_run(ctx, v).await;
                    }
                })
            }))
            .ok()
            .expect("fresh node");
        node
    }

    /// True iff `x` belongs in this subtree or one to its left.
    fn covers(&self, x: &T) -> bool {
        match &self.bound {
            None => true,
            Some(b) => x <= b,
        }
    }
}

/// Partitions sorted `t` around sorted pivots `p`. Returns `p.size() + 1`
/// sorted batches: entry `i < p.size()` holds the items `x` with
/// `p[i-1] < x <= p[i]`, and the last entry (the sentinel's) everything
/// greater than the last pivot. Their concatenation equals `t`'s sequence.
pub async fn partition<T: Item>(ctx: &Ctx, t: &Batch<T>, p: &Batch<T>) -> Vec<Batch<T>> {
    let k = p.size();
    let pivots = p.items();
    // pivot tree over the pivots plus the sentinel
    let mut leaves: Vec<Arc<PivotNode<T>>> = pivots
        .into_iter()
        .enumerate()
        .map(|(i, x)| PivotNode::leaf(ctx, Some(x), i))
        .collect();
    leaves.push(PivotNode::leaf(ctx, None, k));
    let root = build_pivot_tree(ctx, &leaves);

    let out: Arc<Vec<Mutex<Option<Batch<T>>>>> =
        Arc::new((0..=k).map(|_| Mutex::new(None)).collect());

    root.fed.notify(ctx).await;
    if let Some(troot) = t.root() {
        feed(ctx, &root, 1, troot.clone()).await;
    } else {
        // nothing to push down; freezing cascades immediately
        root.pushdown.get().unwrap().reactivate(ctx).await;
    }

    collate(ctx.clone(), root, out.clone()).await;

    Arc::try_unwrap(out)
        .ok()
        .expect("collation left stray references")
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_default())
        .collect()
}

fn build_pivot_tree<T: Item>(ctx: &Ctx, leaves: &[Arc<PivotNode<T>>]) -> Arc<PivotNode<T>> {
    if leaves.len() == 1 {
        return leaves[0].clone();
    }
    let n = leaves.len();
    let h = usize::BITS - (n - 1).leading_zeros();
    let halfcap = 1usize << (h - 1);
    let left_n = if n >= halfcap + halfcap / 2 { halfcap } else { n - halfcap / 2 };
    PivotNode::internal(ctx, build_pivot_tree(ctx, &leaves[..left_n]), build_pivot_tree(ctx, &leaves[left_n..]))
}

fn feed<'a, T: Item>(
    ctx: &'a Ctx,
    v: &'a Arc<PivotNode<T>>,
    qi: u8,
    b: Arc<BatchNode<T>>,
) -> BoxFuture<'a, ()> {
    Box::pin(async move {
        Metrics::bump(&ctx.metrics().feeds);
        let q = if qi == 1 { &v.q1 } else { &v.q2 };
        q.push(b).await;
        v.pushdown.get().unwrap().reactivate(ctx).await;
    })
}

async fn pushdown_run<T: Item>(ctx: Ctx, v: Arc<PivotNode<T>>) {
    Metrics::bump(&ctx.metrics().pushdown_runs);
    if v.leaf_idx.is_some() {
        return;
    }
    let (vl, vr) = v.children.clone().unwrap();
    let mut empty = true;
    for qi in [1u8, 2u8] {
        let q = if qi == 1 { &v.q1 } else { &v.q2 };
        let Some(b) = q.pop().await else { continue };
        v.pushdown.get().unwrap().reactivate(&ctx).await;
        empty = false;
        if vl.covers(b.last()) {
            feed(&ctx, &vl, qi, b).await;
            continue;
        }
        if !vl.covers(b.first()) {
            feed(&ctx, &vr, qi, b).await;
            continue;
        }
        let split = Barrier::new(&ctx);
        *v.split.lock() = Some(split.clone());
        Metrics::bump(&ctx.metrics().splits);
        let ctx2 = ctx.clone();
        let (vl2, vr2) = (vl.clone(), vr.clone());
        let _proc = ctx
            .fork(async move {
                let mut b = b;
                while !b.is_leaf() {
                    ctx2.tick().await;
                    let (bl, br) = b.children_cloned().unwrap();
                    if vl2.covers(bl.last()) {
                        feed(&ctx2, &vl2, 2, bl).await;
                        b = br;
                    } else {
                        feed(&ctx2, &vr2, 1, br).await;
                        b = bl;
                    }
                }
                if vl2.covers(b.last()) {
                    feed(&ctx2, &vl2, 2, b).await;
                } else {
                    feed(&ctx2, &vr2, 1, b).await;
                }
                split.notify(&ctx2).await;
            })
            .await;
    }
    // freeze once this node can no longer feed its children
    if empty && v.fed.notified().await {
        let split = v.split.lock().clone();
        if let Some(s) = split {
            s.wait(&ctx).await;
        }
        {
            let mut frozen = v.frozen.lock();
            if *frozen {
                return;
            }
            *frozen = true;
        }
        vl.fed.notify(&ctx).await;
        vr.fed.notify(&ctx).await;
        vl.pushdown.get().unwrap().reactivate(&ctx).await;
        vr.pushdown.get().unwrap().reactivate(&ctx).await;
    }
}

fn collate<T: Item>(
    ctx: Ctx,
    v: Arc<PivotNode<T>>,
    out: Arc<Vec<Mutex<Option<Batch<T>>>>>,
) -> BoxFuture<'static, ()> {
    Box::pin(async move {
        match (&v.leaf_idx, v.children.clone()) {
            (Some(idx), _) => {
                v.fed.wait(&ctx).await;
                let part = drain_and_join(&ctx, &v.q1, &v.q2).await;
                *out[*idx].lock() = Some(part);
            }
            (None, Some((l, r))) => {
                par2(&ctx, collate(ctx.clone(), l, out.clone()), collate(ctx.clone(), r, out.clone()))
                    .await;
            }
            (None, None) => unreachable!(),
        }
    })
}

/// Joins the subtrees of both queues in reverse pop order (short to tall),
/// then joins the two halves; yields the leaf's slice in left-to-right order.
async fn drain_and_join<T: Item>(
    ctx: &Ctx,
    q1: &DedicatedQueue<Arc<BatchNode<T>>>,
    q2: &DedicatedQueue<Arc<BatchNode<T>>>,
) -> Batch<T> {
    let mut a = Vec::new();
    while let Some(x) = q1.pop().await {
        a.push(x);
    }
    let mut b = Vec::new();
    while let Some(x) = q2.pop().await {
        b.push(x);
    }
    let mut left: Option<Arc<BatchNode<T>>> = None;
    for x in a.into_iter().rev() {
        ctx.tick().await;
        Metrics::bump(&ctx.metrics().collate_joins);
        left = Some(match left {
            None => x,
            Some(acc) => bbt_join(acc, x),
        });
    }
    let mut right: Option<Arc<BatchNode<T>>> = None;
    for x in b.into_iter().rev() {
        ctx.tick().await;
        Metrics::bump(&ctx.metrics().collate_joins);
        right = Some(match right {
            None => x,
            Some(acc) => bbt_join(x, acc),
        });
    }
    let root = match (left, right) {
        (None, r) => r,
        (l, None) => l,
        (Some(l), Some(r)) => {
            ctx.tick().await;
            Metrics::bump(&ctx.metrics().collate_joins);
            Some(bbt_join(l, r))
        }
    };
    Batch::from_root(root)
}
