//! Sorted batch access: partition the tree around the access keys by pushing
//! it down the access batch, execute each access on its collated part, and
//! rejoin the parts bottom-up through the pipelined joining scheme.

use super::access::{AccessPlan, EffAccess, EffOutcome, ItemHandle, PresentEff};
use super::joinin::{init_spines, join23};
use super::node::{Payload, TreeNode};
use super::seq::{find_leaf, seq_delete, seq_insert, seq_join, NodeRef};
use crate::batch::{BatchNode, DedicatedQueue};
use crate::batch_ops::par2;
use crate::runtime::{Barrier, Ctx, Metrics, Reactivation};
use crate::Item;
use futures::future::BoxFuture;
use parking_lot::Mutex;
use std::sync::{Arc, OnceLock, Weak};

/// Overlay node mirroring the access batch during one execute: the dedicated
/// queue pair collecting tree slices, the freeze protocol state, and the
/// joining-phase completion barrier.
struct ExecNode<K> {
    pivot: Option<K>,
    acc: Option<EffAccess<K>>,
    children: Option<(Arc<ExecNode<K>>, Arc<ExecNode<K>>)>,
    q1: DedicatedQueue<NodeRef<K>>,
    q2: DedicatedQueue<NodeRef<K>>,
    pushdown: OnceLock<Reactivation>,
    frozen: Mutex<bool>,
    fed: Barrier,
    split: Mutex<Option<Barrier>>,
    done: Barrier,
}

impl<K: Item> ExecNode<K> {
    fn build(ctx: &Ctx, b: &Arc<BatchNode<EffAccess<K>>>) -> Arc<Self> {
        let (pivot, acc, children) = match b.children() {
            None => (None, Some(b.item().expect("access leaf").clone()), None),
            Some((l, r)) => (
                Some(l.last().key.clone()),
                None,
                Some((Self::build(ctx, l), Self::build(ctx, r))),
            ),
        };
        let node = Arc::new(ExecNode {
            pivot,
            acc,
            children,
            q1: DedicatedQueue::new(ctx),
            q2: DedicatedQueue::new(ctx),
            pushdown: OnceLock::new(),
            frozen: Mutex::new(false),
            fed: Barrier::new(ctx),
            split: Mutex::new(None),
            done: Barrier::new(ctx),
        });
        let weak = Arc::downgrade(&node);
        node.pushdown
            .set(Reactivation::new(ctx, move |ctx| {
                let weak: Weak<ExecNode<K>> = weak.clone();
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

    /// True iff `key` belongs at this subtree's leaves or further left.
    fn left_covers(&self, key: &Option<K>) -> bool {
        match (key, &self.pivot) {
            (Some(k), Some(p)) => k <= p,
            _ => unreachable!("routing on unbounded subtree"),
        }
    }
}

fn feed<'a, K: Item>(ctx: &'a Ctx, v: &'a Arc<ExecNode<K>>, qi: u8, b: NodeRef<K>) -> BoxFuture<'a, ()> {
    Box::pin(async move {
        Metrics::bump(&ctx.metrics().feeds);
        let q = if qi == 1 { &v.q1 } else { &v.q2 };
        q.push(b).await;
        v.pushdown.get().unwrap().reactivate(ctx).await;
    })
}

async fn pushdown_run<K: Item>(ctx: Ctx, v: Arc<ExecNode<K>>) {
    Metrics::bump(&ctx.metrics().pushdown_runs);
    let Some((vl, vr)) = v.children.clone() else { return };
    let mut empty = true;
    for qi in [1u8, 2u8] {
        let q = if qi == 1 { &v.q1 } else { &v.q2 };
        let Some(b) = q.pop().await else { continue };
        v.pushdown.get().unwrap().reactivate(&ctx).await;
        empty = false;
        if v.left_covers(&b.last()) {
            feed(&ctx, &vl, qi, b).await;
            continue;
        }
        if !v.left_covers(&b.first()) {
            feed(&ctx, &vr, qi, b).await;
            continue;
        }
        let split = Barrier::new(&ctx);
        *v.split.lock() = Some(split.clone());
        Metrics::bump(&ctx.metrics().splits);
        let ctx2 = ctx.clone();
        let v2 = v.clone();
        let (vl2, vr2) = (vl.clone(), vr.clone());
        let _proc = ctx
            .fork(async move {
                let mut b = b;
                while !b.is_leaf() {
                    ctx2.tick().await;
                    let kids = b.kids();
                    // first child whose range extends past the pivot
                    let mut j = kids.len() - 1;
                    for (i, k) in kids.iter().enumerate() {
                        if !v2.left_covers(&k.last()) {
                            j = i;
                            break;
                        }
                    }
                    for k in &kids[..j] {
                        feed(&ctx2, &vl2, 2, k.clone()).await;
                    }
                    for k in kids[j + 1..].iter().rev() {
                        feed(&ctx2, &vr2, 1, k.clone()).await;
                    }
                    b = kids[j].clone();
                }
                if v2.left_covers(&b.last()) {
                    feed(&ctx2, &vl2, 2, b).await;
                } else {
                    feed(&ctx2, &vr2, 1, b).await;
                }
                split.notify(&ctx2).await;
            })
            .await;
    }
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

fn collate<K: Item>(
    ctx: Ctx,
    v: Arc<ExecNode<K>>,
    parents: bool,
    persistent: bool,
) -> BoxFuture<'static, Option<NodeRef<K>>> {
    Box::pin(async move {
        if let Some(acc) = &v.acc {
            v.fed.wait(&ctx).await;
            let mut q1_parts = Vec::new();
            while let Some(x) = v.q1.pop().await {
                q1_parts.push(x);
            }
            let mut q2_parts = Vec::new();
            while let Some(x) = v.q2.pop().await {
                q2_parts.push(x);
            }
            // reverse pop order is short-to-tall; build left and right halves
            let mut left: Option<NodeRef<K>> = None;
            for x in q1_parts.into_iter().rev() {
                Metrics::bump(&ctx.metrics().collate_joins);
                left = seq_join(&ctx, parents, left, Some(x)).await;
            }
            let mut right: Option<NodeRef<K>> = None;
            for x in q2_parts.into_iter().rev() {
                Metrics::bump(&ctx.metrics().collate_joins);
                right = seq_join(&ctx, parents, Some(x), right).await;
            }
            let x = seq_join(&ctx, parents, left, right).await;
            let mut x = apply_access(&ctx, parents, persistent, x, acc).await;
            if persistent {
                x = x.map(|t| snapshot_spines(&ctx, &t));
            }
            if let Some(t) = &x {
                init_spines(&ctx, t);
            }
            x
        } else {
            let (l, r) = v.children.clone().expect("internal exec node");
            let (lt, rt) = par2(
                &ctx,
                collate(ctx.clone(), l, parents, persistent),
                collate(ctx.clone(), r, parents, persistent),
            )
            .await;
            join23(&ctx, parents, lt, rt, v.done.clone()).await
        }
    })
}

fn finalize<K: Item>(ctx: Ctx, v: Arc<ExecNode<K>>) -> BoxFuture<'static, ()> {
    Box::pin(async move {
        let Some((l, r)) = v.children.clone() else { return };
        par2(&ctx, finalize(ctx.clone(), l), finalize(ctx.clone(), r)).await;
        v.done.wait(&ctx).await;
    })
}

/// Executes an effective access on the collated part, recording its outcome.
async fn apply_access<K: Item>(
    ctx: &Ctx,
    parents: bool,
    persistent: bool,
    x: Option<NodeRef<K>>,
    acc: &EffAccess<K>,
) -> Option<NodeRef<K>> {
    let prior = x
        .as_ref()
        .map(|t| find_leaf(t, &acc.key))
        .filter(|leaf| leaf.key() == Some(&acc.key));
    match prior {
        Some(leaf) => {
            let prior_payload = leaf.payload();
            match acc.present_eff {
                PresentEff::Keep => {
                    acc.set_outcome(EffOutcome {
                        was_present: true,
                        prior_payload,
                        handle: (!persistent).then(|| ItemHandle { leaf }),
                    });
                    x
                }
                PresentEff::Set(p) => {
                    if persistent {
                        let (nx, nleaf) = replace_leaf(ctx, parents, x.unwrap(), &acc.key, p).await;
                        let _ = nleaf;
                        acc.set_outcome(EffOutcome { was_present: true, prior_payload, handle: None });
                        Some(nx)
                    } else {
                        leaf.set_payload(p);
                        acc.set_outcome(EffOutcome {
                            was_present: true,
                            prior_payload,
                            handle: Some(ItemHandle { leaf }),
                        });
                        x
                    }
                }
                PresentEff::Remove => {
                    let nx = seq_delete(ctx, parents, x.unwrap(), &acc.key).await;
                    acc.set_outcome(EffOutcome { was_present: true, prior_payload, handle: None });
                    nx
                }
            }
        }
        None => match acc.absent_eff {
            None => {
                acc.set_outcome(EffOutcome { was_present: false, prior_payload: None, handle: None });
                x
            }
            Some(p) => {
                let (nx, leaf) = seq_insert(ctx, parents, x, acc.key.clone(), p).await;
                acc.set_outcome(EffOutcome {
                    was_present: false,
                    prior_payload: None,
                    handle: (!persistent).then(|| ItemHandle { leaf }),
                });
                Some(nx)
            }
        },
    }
}

/// Path-copies the leaf holding `key`, giving it a new payload.
fn replace_leaf<'a, K: Item>(
    ctx: &'a Ctx,
    parents: bool,
    v: NodeRef<K>,
    key: &'a K,
    p: Payload,
) -> BoxFuture<'a, (NodeRef<K>, NodeRef<K>)> {
    Box::pin(async move {
        ctx.tick().await;
        if v.is_leaf() {
            debug_assert_eq!(v.key(), Some(key));
            let leaf = TreeNode::new_leaf(ctx, parents, key.clone(), p);
            return (leaf.clone(), leaf);
        }
        let kids = v.kids();
        let mut at = kids.len() - 1;
        for (i, k) in kids.iter().enumerate() {
            if k.last().as_ref().map(|l| key <= l).unwrap_or(false) {
                at = i;
                break;
            }
        }
        let (nk, leaf) = replace_leaf(ctx, parents, kids[at].clone(), key, p).await;
        let mut new_kids = kids.clone();
        new_kids[at] = nk;
        (TreeNode::new_internal(ctx, parents, &new_kids), leaf)
    })
}

/// Copy of a finished tree with the left and right spines deep-copied and all
/// interior nodes shared; subsequent pipelined joins on the copy cannot touch
/// the original.
pub(crate) fn snapshot_spines<K: Item>(ctx: &Ctx, root: &NodeRef<K>) -> NodeRef<K> {
    fn snap<K: Item>(ctx: &Ctx, v: &NodeRef<K>, left_edge: bool, right_edge: bool) -> NodeRef<K> {
        if v.is_leaf() {
            return TreeNode::new_leaf(
                ctx,
                false,
                v.key().unwrap().clone(),
                v.payload().unwrap(),
            );
        }
        let kids = v.kids();
        let n = kids.len();
        let new_kids: Vec<NodeRef<K>> = kids
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let le = left_edge && i == 0;
                let re = right_edge && i == n - 1;
                if le || re {
                    snap(ctx, k, le, re)
                } else {
                    k.clone()
                }
            })
            .collect();
        let node = TreeNode::new_internal(ctx, false, &new_kids);
        // spine fields are rebuilt by init_spines before any join touches it
        node
    }
    snap(ctx, root, true, true)
}

/// Runs the access plan on the tree root. Returns the new root; `old_root`
/// is consumed in destructive mode and merely read in persistent mode.
pub(crate) async fn execute_on_root<K: Item>(
    ctx: &Ctx,
    old_root: Option<NodeRef<K>>,
    plan: &AccessPlan<K>,
    parents: bool,
    persistent: bool,
) -> Option<NodeRef<K>> {
    let Some(broot) = plan.batch.root() else {
        return old_root;
    };
    let overlay = ExecNode::build(ctx, broot);
    overlay.fed.notify(ctx).await;
    if let Some(t) = old_root.clone() {
        feed(ctx, &overlay, 1, t).await;
    } else {
        overlay.pushdown.get().unwrap().reactivate(ctx).await;
    }
    let new_root = collate(ctx.clone(), overlay.clone(), parents, persistent).await;
    finalize(ctx.clone(), overlay).await;
    new_root
}
