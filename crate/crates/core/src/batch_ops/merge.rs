//! Parallel merging of two sorted batches (duplicates combined pairwise) and
//! the merge sort it induces.

use super::filter::join_batch_list;
use super::partition::partition;
use super::{par2, FORK_CUTOFF};
use crate::batch::{bbt_join, replace_last_leaf, Batch, BatchNode};
use crate::runtime::Ctx;
use crate::Item;
use futures::future::BoxFuture;
use std::sync::Arc;

type Combine<T> = Arc<dyn Fn(&T, &T) -> T + Send + Sync>;

/// Merges sorted batches `a` and `b`; when an item occurs in both, the pair
/// is collapsed to `combine(a_item, b_item)`.
pub async fn merge<T: Item>(
    ctx: &Ctx,
    a: &Batch<T>,
    b: &Batch<T>,
    combine: impl Fn(&T, &T) -> T + Send + Sync + 'static,
) -> Batch<T> {
    merge_with(ctx, a, b, Arc::new(combine)).await
}

async fn merge_with<T: Item>(ctx: &Ctx, a: &Batch<T>, b: &Batch<T>, combine: Combine<T>) -> Batch<T> {
    if a.is_empty() {
        return b.clone();
    }
    if b.is_empty() {
        return a.clone();
    }
    // phase 1: partition b around a's items
    let mut parts = partition(ctx, b, a).await;
    // phase 2: insert each item of a into its part (it belongs at the right
    // end; an equal last item is combined instead)
    let a_items = a.items();
    let sentinel_part = parts.pop().expect("partition returns pivot count + 1 parts");
    let futs: Vec<BoxFuture<'static, Batch<T>>> = parts
        .into_iter()
        .zip(a_items.into_iter())
        .map(|(part, item)| {
            let ctx = ctx.clone();
            let combine = combine.clone();
            let fut: BoxFuture<'static, Batch<T>> = Box::pin(async move {
                ctx.tick().await;
                insert_at_end(part, item, &combine)
            });
            fut
        })
        .collect();
    let mut merged = super::par_all(ctx, futs).await;
    merged.push(sentinel_part);
    // phase 3: join the per-leaf batches
    join_batch_list(ctx, merged).await
}

fn insert_at_end<T: Item>(part: Batch<T>, item: T, combine: &Combine<T>) -> Batch<T> {
    match part.root() {
        None => Batch::from_root(Some(BatchNode::leaf(item))),
        Some(root) => {
            if *root.last() == item {
                Batch::from_root(Some(replace_last_leaf(root, &|b| combine(&item, b))))
            } else {
                debug_assert!(*root.last() < item, "partition sent an item past its pivot");
                Batch::from_root(Some(bbt_join(root.clone(), BatchNode::leaf(item))))
            }
        }
    }
}

/// Sorts an arbitrary batch by recursive two-way merging; duplicates are
/// combined with `combine`.
pub async fn merge_sort<T: Item>(
    ctx: &Ctx,
    items: &Batch<T>,
    combine: impl Fn(&T, &T) -> T + Send + Sync + 'static,
) -> Batch<T> {
    match items.root() {
        None => Batch::empty(),
        Some(root) => sort_rec(ctx.clone(), root.clone(), Arc::new(combine)).await,
    }
}

fn sort_rec<T: Item>(ctx: Ctx, node: Arc<BatchNode<T>>, combine: Combine<T>) -> BoxFuture<'static, Batch<T>> {
    Box::pin(async move {
        if node.size() <= 1 {
            let item = node.item().expect("leaf").clone();
            return Batch::from_root(Some(BatchNode::leaf(item)));
        }
        if node.size() <= FORK_CUTOFF {
            ctx.tick().await;
            let mut items = Vec::with_capacity(node.size());
            collect(&node, &mut items);
            items.sort();
            items.dedup_by(|b, a| {
                if a == b {
                    *a = combine(a, b);
                    true
                } else {
                    false
                }
            });
            return Batch::from_items(items);
        }
        let (l, r) = node.children_cloned().expect("internal");
        let (sl, sr) = par2(
            &ctx,
            sort_rec(ctx.clone(), l, combine.clone()),
            sort_rec(ctx.clone(), r, combine.clone()),
        )
        .await;
        merge_with(&ctx, &sl, &sr, combine).await
    })
}

fn collect<T: Item>(node: &Arc<BatchNode<T>>, out: &mut Vec<T>) {
    match node.children() {
        None => out.push(node.item().expect("leaf").clone()),
        Some((l, r)) => {
            collect(l, out);
            collect(r, out);
        }
    }
}
