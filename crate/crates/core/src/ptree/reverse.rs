//! Batch reverse-indexing: turn an unsorted batch of direct item pointers
//! into a sorted batch of those items. Tracing walks each leaf's root path,
//! claiming nodes through try-lock on their marked flags (at most two probes
//! touch any flag); retrieval descends the marked skeleton and joins the
//! found leaves through the pipelined joining scheme.

use super::access::ItemHandle;
use super::joinin::join23;
use super::node::TreeNode;
use super::seq::NodeRef;
use crate::batch::{Batch, BatchNode};
use crate::batch_ops::{balance, par2};
use crate::runtime::{Barrier, Ctx, Metrics};
use crate::Item;
use futures::future::BoxFuture;
use std::sync::atomic::Ordering;
use std::sync::Arc;

pub(crate) async fn reverse_index<K: Item>(
    ctx: &Ctx,
    root: Option<NodeRef<K>>,
    handles: &Batch<ItemHandle<K>>,
) -> Batch<K> {
    let Some(hroot) = handles.root() else {
        return Batch::empty();
    };
    let root = root.expect("handles into an empty tree");

    // tracing phase
    trace_all(ctx.clone(), hroot.clone()).await;

    // retrieving phase
    let u = retrieve(ctx.clone(), root.clone()).await;
    rfinalize(ctx.clone(), root).await;

    // convert the joined 2-3 tree into a complete sorted batch
    let raw = binarize(&u);
    balance(ctx, &Batch::from_root(Some(raw))).await
}

fn trace_all<K: Item>(ctx: Ctx, h: Arc<BatchNode<ItemHandle<K>>>) -> BoxFuture<'static, ()> {
    Box::pin(async move {
        match h.children_cloned() {
            None => {
                let leaf = h.item().expect("handle leaf").leaf.clone();
                trace(&ctx, leaf).await;
            }
            Some((l, r)) => {
                par2(&ctx, trace_all(ctx.clone(), l), trace_all(ctx.clone(), r)).await;
            }
        }
    })
}

/// Walks from a leaf toward the root, stopping at the first node some other
/// trace already claimed. On the binary view of the tree a 3-child node is
/// two levels, so a climb from its mid or right child first claims the
/// virtual inner node's flag; every flag then sees at most two probes.
async fn trace<K: Item>(ctx: &Ctx, start: NodeRef<K>) {
    let mut v = start;
    let mut came_from: Option<NodeRef<K>> = None;
    loop {
        if let Some(child) = &came_from {
            let kids = v.kids();
            if kids.len() == 3 && !Arc::ptr_eq(child, &kids[0]) {
                // mid/right child: pass through the virtual inner node first
                let lock2 = v.marked2.as_ref().expect("marked flag");
                v.probe_count2.fetch_add(1, Ordering::Relaxed);
                Metrics::bump(&ctx.metrics().trace_probes);
                if !lock2.try_lock().await {
                    return;
                }
                Metrics::bump(&ctx.metrics().marked_nodes);
            }
        }
        let lock = v.marked.as_ref().expect("reverse-indexing on a tree without parent tracking");
        v.probe_count.fetch_add(1, Ordering::Relaxed);
        Metrics::bump(&ctx.metrics().trace_probes);
        if !lock.try_lock().await {
            return;
        }
        Metrics::bump(&ctx.metrics().marked_nodes);
        match v.parent() {
            None => return,
            Some(p) => {
                came_from = Some(std::mem::replace(&mut v, p));
            }
        }
    }
}

async fn is_marked<K: Item>(v: &NodeRef<K>) -> bool {
    v.marked.as_ref().expect("marked flag").is_held().await
}

fn retrieve<K: Item>(ctx: Ctx, v: NodeRef<K>) -> BoxFuture<'static, NodeRef<K>> {
    Box::pin(async move {
        if v.is_leaf() {
            return TreeNode::new_leaf(&ctx, false, v.key().unwrap().clone(), v.payload().unwrap());
        }
        let kids = v.kids();
        let mut marked = Vec::with_capacity(3);
        for k in &kids {
            if is_marked(k).await {
                marked.push(k.clone());
            }
        }
        debug_assert!(!marked.is_empty(), "marked node without marked children");
        if marked.len() == 1 {
            return retrieve(ctx.clone(), marked.pop().unwrap()).await;
        }
        let first = marked[0].clone();
        let rest = marked.split_off(1);
        let mut acc = {
            let second = rest[0].clone();
            let done = Barrier::new(&ctx);
            v.rev_done.lock().push(done.clone());
            let (l, r) = par2(&ctx, retrieve(ctx.clone(), first), retrieve(ctx.clone(), second)).await;
            join23(&ctx, false, Some(l), Some(r), done).await.expect("join of nonempty trees")
        };
        if rest.len() == 2 {
            let third = rest[1].clone();
            let done = Barrier::new(&ctx);
            v.rev_done.lock().push(done.clone());
            let r = retrieve(ctx.clone(), third).await;
            acc = join23(&ctx, false, Some(acc), Some(r), done).await.expect("join of nonempty trees");
        }
        acc
    })
}

fn rfinalize<K: Item>(ctx: Ctx, v: NodeRef<K>) -> BoxFuture<'static, ()> {
    Box::pin(async move {
        let probes = v.probe_count.swap(0, Ordering::Relaxed);
        debug_assert!(probes <= 2, "more than two try-lock probes on one marked flag");
        let probes2 = v.probe_count2.swap(0, Ordering::Relaxed);
        debug_assert!(probes2 <= 2, "more than two try-lock probes on one virtual marked flag");
        let lock2 = v.marked2.as_ref().expect("marked flag");
        if lock2.is_held().await {
            lock2.unlock().await;
        }
        v.marked.as_ref().expect("marked flag").unlock().await;
        if v.is_leaf() {
            return;
        }
        let kids = v.kids();
        let mut marked = Vec::with_capacity(3);
        for k in &kids {
            if is_marked(k).await {
                marked.push(k.clone());
            }
        }
        if marked.len() == 1 {
            rfinalize(ctx.clone(), marked.pop().unwrap()).await;
            return;
        }
        let futs: Vec<BoxFuture<'static, ()>> =
            marked.into_iter().map(|k| rfinalize(ctx.clone(), k) as BoxFuture<'static, ()>).collect();
        crate::batch_ops::par_all(&ctx, futs).await;
        let barriers: Vec<Barrier> = std::mem::take(&mut *v.rev_done.lock());
        for b in barriers {
            b.wait(&ctx).await;
        }
    })
}

/// Binary view of a 2-3 tree: 3-child nodes become a virtual two-level
/// split. Heights follow the red-black encoding, so the result is
/// log-splitting within a constant but not a strict BBT; callers rebalance.
pub(crate) fn binarize<K: Item>(v: &NodeRef<K>) -> Arc<BatchNode<K>> {
    if v.is_leaf() {
        return BatchNode::leaf(v.key().unwrap().clone());
    }
    let kids = v.kids();
    match kids.len() {
        2 => BatchNode::internal(binarize(&kids[0]), binarize(&kids[1])),
        3 => BatchNode::internal(
            binarize(&kids[0]),
            BatchNode::internal(binarize(&kids[1]), binarize(&kids[2])),
        ),
        n => unreachable!("2-3 node with {n} children"),
    }
}
