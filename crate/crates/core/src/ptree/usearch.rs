//! Unsorted batch search: recursively partition the probe batch around the
//! child boundaries of each tree node (by parallel filtering), so no tree
//! node ever sees more than a constant number of concurrent accesses.

use super::access::ItemHandle;
use super::seq::NodeRef;
use crate::batch::{Batch, BatchNode};
use crate::batch_ops::{filter, par2};
use crate::runtime::Ctx;
use crate::Item;
use futures::future::BoxFuture;
use std::sync::{Arc, OnceLock};

/// Search outcome for one probe.
#[derive(Clone, Debug)]
pub struct SearchTagged<K> {
    pub key: K,
    pub found: bool,
    pub handle: Option<ItemHandle<K>>,
}

#[derive(Clone)]
struct Probe<K> {
    key: K,
    slot: Arc<OnceLock<Option<ItemHandle<K>>>>,
}

pub(crate) async fn usearch<K: Item>(
    ctx: &Ctx,
    root: Option<NodeRef<K>>,
    items: &Batch<K>,
) -> Batch<SearchTagged<K>> {
    let probes: Vec<Probe<K>> = items
        .items()
        .into_iter()
        .map(|key| Probe { key, slot: Arc::new(OnceLock::new()) })
        .collect();
    if probes.is_empty() {
        return Batch::empty();
    }
    match root {
        None => {
            for p in &probes {
                p.slot.set(None).ok().expect("fresh slot");
            }
        }
        Some(r) => {
            let b = Batch::from_items(probes.clone());
            usearch_rec(ctx.clone(), r, b).await;
        }
    }
    let tagged: Vec<SearchTagged<K>> = probes
        .into_iter()
        .map(|p| {
            let handle = p.slot.get().expect("probe landed nowhere").clone();
            SearchTagged { found: handle.is_some(), key: p.key, handle }
        })
        .collect();
    Batch::from_items(tagged)
}

fn usearch_rec<K: Item>(ctx: Ctx, v: NodeRef<K>, b: Batch<Probe<K>>) -> BoxFuture<'static, ()> {
    Box::pin(async move {
        if b.is_empty() {
            return;
        }
        if v.is_leaf() {
            let key = v.key().unwrap().clone();
            tag_leaves(&v, &key, b.root().unwrap());
            ctx.tick().await;
            return;
        }
        let kids = v.kids();
        // partition the probes around the first child boundary, then (for
        // 3-child nodes) the second
        let p0 = kids[0].last().expect("finished tree bounds");
        let (le, gt) = split_batch(&ctx, &b, p0).await;
        if kids.len() == 2 {
            let (k0, k1) = (kids[0].clone(), kids[1].clone());
            par2(&ctx, usearch_rec(ctx.clone(), k0, le), usearch_rec(ctx.clone(), k1, gt)).await;
        } else {
            let p1 = kids[1].last().expect("finished tree bounds");
            let (mid, hi) = split_batch(&ctx, &gt, p1).await;
            let (k0, k1, k2) = (kids[0].clone(), kids[1].clone(), kids[2].clone());
            let ctx2 = ctx.clone();
            let h = ctx
                .fork(async move {
                    par2(&ctx2, usearch_rec(ctx2.clone(), k1, mid), usearch_rec(ctx2.clone(), k2, hi))
                        .await;
                })
                .await;
            usearch_rec(ctx.clone(), k0, le).await;
            h.join(&ctx).await;
        }
    })
}

// One batch instance admits one operation at a time, so the two sides are
// filtered back to back; this only doubles the per-level constant.
async fn split_batch<K: Item>(
    ctx: &Ctx,
    b: &Batch<Probe<K>>,
    pivot: K,
) -> (Batch<Probe<K>>, Batch<Probe<K>>) {
    let p2 = pivot.clone();
    let le = filter(ctx, b, move |p: &Probe<K>| p.key <= pivot).await;
    let gt = filter(ctx, b, move |p: &Probe<K>| p.key > p2).await;
    (le, gt)
}

fn tag_leaves<K: Item>(v: &NodeRef<K>, key: &K, b: &Arc<BatchNode<Probe<K>>>) {
    match b.children() {
        None => {
            let p = b.item().expect("probe leaf");
            let hit = (&p.key == key).then(|| ItemHandle { leaf: v.clone() });
            p.slot.set(hit).ok().expect("probe tagged twice");
        }
        Some((l, r)) => {
            tag_leaves(v, key, l);
            tag_leaves(v, key, r);
        }
    }
}
