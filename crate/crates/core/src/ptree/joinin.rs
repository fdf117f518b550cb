//! Pipelined 2-3 tree joining. A tree joined into a taller one is pushed down
//! the taller tree's spine; every spine node applies one O(1) local
//! adjustment per queued tree, serialized by a reactivation wrapper, and
//! spine-structure integers let each level pre-compute whether the join
//! overflows (allocating a blank sibling for the eventual split) without
//! waiting for lower levels.

use super::node::{Dir, JoinAux, TreeNode};
use super::seq::NodeRef;
use super::spine::{lspine, rspine};
use crate::batch::DedicatedQueue;
use crate::runtime::{Barrier, Ctx, Metrics, Reactivation};
use crate::Item;
use futures::future::BoxFuture;
use std::sync::{Arc, Weak};

/// Prepares `x` for service as a spine child: records its spine structure
/// and installs a fresh inbox and join-in procedure for the given direction.
pub(crate) fn init_spine_node<K: Item>(ctx: &Ctx, x: &NodeRef<K>, dir: Dir) {
    let s = match dir {
        Dir::Left => lspine(x),
        Dir::Right => rspine(x),
    };
    x.state.lock().spine = s;
    let inbox = DedicatedQueue::new(ctx);
    let weak: Weak<TreeNode<K>> = Arc::downgrade(x);
    let joinin = Reactivation::new(ctx, move |ctx| {
        let weak = weak.clone();
        Box::pin(async move {
            if let Some(v) = weak.upgrade() {
                joinin_run(ctx, v).await;
            }
        }) as BoxFuture<'static, ()>
    });
    *x.join_aux.lock() = Some(JoinAux { inbox, joinin, dir });
}

/// Initializes both spines of a freshly collated root, leaf to root.
pub(crate) fn init_spines<K: Item>(ctx: &Ctx, x: &NodeRef<K>) {
    for dir in [Dir::Left, Dir::Right] {
        let mut path = Vec::new();
        let mut cur = x.clone();
        while !cur.is_leaf() {
            let kids = cur.kids();
            let next = match dir {
                Dir::Left => kids.first().unwrap().clone(),
                Dir::Right => kids.last().unwrap().clone(),
            };
            path.push(next.clone());
            cur = next;
        }
        for node in path.iter().rev() {
            init_spine_node(ctx, node, dir);
        }
    }
}

/// Pushes queued tree `x` down to spine child `v`: enqueue, reactivate, and
/// eagerly update `v`'s spine structure and outer bound to their post-join
/// values.
pub(crate) async fn feed<K: Item>(ctx: &Ctx, x: &NodeRef<K>, v: &NodeRef<K>) {
    Metrics::bump(&ctx.metrics().feeds);
    let (inbox, joinin, dir) = {
        let aux = v.join_aux.lock();
        let aux = aux.as_ref().expect("fed node without join-in state");
        (aux.inbox.clone(), aux.joinin.clone(), aux.dir)
    };
    let xw = x.weight();
    let (x_spine, x_bound) = match dir {
        Dir::Right => (rspine(x), x.last()),
        Dir::Left => (lspine(x), x.first()),
    };
    inbox.push(x.clone()).await;
    joinin.reactivate(ctx).await;
    {
        let mut st = v.state.lock();
        st.spine = (st.spine - st.spine % xw + xw) % v.weight() + x_spine;
        match dir {
            Dir::Right => st.last = x_bound,
            Dir::Left => st.first = x_bound,
        }
    }
}

/// One run of a spine node's join-in procedure: pop at most one queued tree,
/// apply the local adjustment, push it further if it is still taller-bound,
/// and reactivate.
async fn joinin_run<K: Item>(ctx: Ctx, v: NodeRef<K>) {
    Metrics::bump(&ctx.metrics().joinin_runs);
    let Some((inbox, joinin, dir)) = v
        .join_aux
        .lock()
        .as_ref()
        .map(|a| (a.inbox.clone(), a.joinin.clone(), a.dir))
    else {
        return;
    };
    let Some(r) = inbox.pop().await else { return };
    ctx.tick().await;
    let parents = v.parents_tracked();

    // the spine child of v in the joining direction
    let inner = |st: &super::node::NodeState<K>| match dir {
        Dir::Right => st.right.clone().expect("spine node without children"),
        Dir::Left => st.left.clone().expect("spine node without children"),
    };
    let child = inner(&v.state.lock());

    if child.height() == r.height() {
        // absorb r as the outermost child of v
        let filled = {
            let mut st = v.state.lock();
            let mut filled = None;
            if st.mid.is_none() {
                match dir {
                    Dir::Right => {
                        st.mid = st.right.take();
                        st.right = Some(r.clone());
                    }
                    Dir::Left => {
                        st.mid = st.left.take();
                        st.left = Some(r.clone());
                    }
                }
            } else {
                // v itself splits: its inner pair moves out into the blank
                // node pre-allocated by the level above
                let target = r
                    .queued
                    .lock()
                    .overflow
                    .take()
                    .expect("absorbing split without a blank overflow node");
                match dir {
                    Dir::Right => {
                        let (a, b) = (st.left.take().unwrap(), st.mid.take().unwrap());
                        filled = Some((target, [a, b]));
                        st.left = st.right.take();
                        st.right = Some(r.clone());
                        st.first = st.left.as_ref().unwrap().first();
                    }
                    Dir::Left => {
                        let (a, b) = (st.mid.take().unwrap(), st.right.take().unwrap());
                        filled = Some((target, [a, b]));
                        st.right = st.left.take();
                        st.left = Some(r.clone());
                        st.last = st.right.as_ref().unwrap().last();
                    }
                }
            }
            filled
        };
        if let Some((target, pair)) = filled {
            target.fill(&pair);
        }
        if parents {
            r.set_parent(&v);
        }
        let joined = v_joined_barrier(&r);
        joined.notify(&ctx).await;
    } else {
        // r descends; pre-compute whether child+r overflows
        debug_assert!(child.height() > r.height());
        let overflows = child.spine() + r.weight() >= child.weight();
        if overflows {
            let blank = TreeNode::new_blank(&ctx, parents, child.height());
            let filled = {
                let mut st = v.state.lock();
                let mut filled = None;
                if st.mid.is_none() {
                    st.mid = Some(blank.clone());
                } else {
                    let target = r
                        .queued
                        .lock()
                        .overflow
                        .take()
                        .expect("cascading split without a blank overflow node");
                    match dir {
                        Dir::Right => {
                            let (a, b) = (st.left.take().unwrap(), st.mid.take().unwrap());
                            filled = Some((target, [a, b]));
                            st.left = Some(blank.clone());
                            st.first = st.right.as_ref().unwrap().first();
                        }
                        Dir::Left => {
                            let (a, b) = (st.mid.take().unwrap(), st.right.take().unwrap());
                            filled = Some((target, [a, b]));
                            st.right = Some(blank.clone());
                            st.last = st.left.as_ref().unwrap().last();
                        }
                    }
                }
                filled
            };
            if let Some((target, pair)) = filled {
                target.fill(&pair);
            }
            if parents {
                blank.set_parent(&v);
            }
            r.queued.lock().overflow = Some(blank);
        }
        feed(&ctx, &r, &child).await;
    }
    joinin.reactivate(&ctx).await;
}

fn v_joined_barrier<K: Item>(r: &NodeRef<K>) -> Barrier {
    let mut q = r.queued.lock();
    q.overflow = None;
    q.joined.take().expect("queued tree without a joined barrier")
}

/// Join of two root 2-3 trees (either may be empty). `done` is notified once
/// the shorter side has ceased to be a queued tree — immediately when the
/// join completes locally, otherwise by the absorbing local adjustment.
pub(crate) async fn join23<K: Item>(
    ctx: &Ctx,
    parents: bool,
    l: Option<NodeRef<K>>,
    r: Option<NodeRef<K>>,
    done: Barrier,
) -> Option<NodeRef<K>> {
    let (l, r) = match (l, r) {
        (None, x) | (x, None) => {
            done.notify(ctx).await;
            return x;
        }
        (Some(l), Some(r)) => (l, r),
    };
    ctx.tick().await;
    if l.height() == r.height() {
        done.notify(ctx).await;
        return Some(rjoin(ctx, parents, l, r));
    }
    if l.height() > r.height() {
        init_spine_node(ctx, &r, Dir::Right);
        let (l_inner, l_mid, l_left) = {
            let st = l.state.lock();
            (st.right.clone().unwrap(), st.mid.clone(), st.left.clone().unwrap())
        };
        if l_inner.height() == r.height() {
            done.notify(ctx).await;
            if l_mid.is_none() {
                {
                    let mut st = l.state.lock();
                    st.mid = st.right.take();
                    st.right = Some(r.clone());
                    st.last = r.last();
                }
                if parents {
                    r.set_parent(&l);
                }
                Some(l)
            } else {
                let a = sjoin(ctx, parents, &l_left, &l_mid.clone().unwrap());
                let b = sjoin(ctx, parents, &l_inner, &r);
                Some(rjoin(ctx, parents, a, b))
            }
        } else {
            {
                let mut q = r.queued.lock();
                q.joined = Some(done);
                q.overflow = None;
            }
            if l_inner.spine() + r.weight() >= l_inner.weight() {
                // l.right + r overflows
                let blank = TreeNode::new_blank(ctx, parents, l_inner.height());
                r.queued.lock().overflow = Some(blank.clone());
                feed(ctx, &r, &l_inner).await;
                if l_mid.is_none() {
                    {
                        let mut st = l.state.lock();
                        st.mid = Some(blank.clone());
                        st.last = r.last();
                    }
                    if parents {
                        blank.set_parent(&l);
                    }
                    Some(l)
                } else {
                    let a = sjoin(ctx, parents, &l_left, &l_mid.unwrap());
                    let b = sjoin_blank_left(ctx, parents, &blank, &l_inner, r.last());
                    Some(rjoin(ctx, parents, a, b))
                }
            } else {
                feed(ctx, &r, &l_inner).await;
                l.state.lock().last = r.last();
                Some(l)
            }
        }
    } else {
        // mirror image: l is pushed down r's left spine
        init_spine_node(ctx, &l, Dir::Left);
        let (r_inner, r_mid, r_right) = {
            let st = r.state.lock();
            (st.left.clone().unwrap(), st.mid.clone(), st.right.clone().unwrap())
        };
        if r_inner.height() == l.height() {
            done.notify(ctx).await;
            if r_mid.is_none() {
                {
                    let mut st = r.state.lock();
                    st.mid = st.left.take();
                    st.left = Some(l.clone());
                    st.first = l.first();
                }
                if parents {
                    l.set_parent(&r);
                }
                Some(r)
            } else {
                let a = sjoin(ctx, parents, &l, &r_inner);
                let b = sjoin(ctx, parents, &r_mid.clone().unwrap(), &r_right);
                Some(rjoin(ctx, parents, a, b))
            }
        } else {
            {
                let mut q = l.queued.lock();
                q.joined = Some(done);
                q.overflow = None;
            }
            if r_inner.spine() + l.weight() >= r_inner.weight() {
                let blank = TreeNode::new_blank(ctx, parents, r_inner.height());
                l.queued.lock().overflow = Some(blank.clone());
                feed(ctx, &l, &r_inner).await;
                if r_mid.is_none() {
                    {
                        let mut st = r.state.lock();
                        st.mid = Some(blank.clone());
                        st.first = l.first();
                    }
                    if parents {
                        blank.set_parent(&r);
                    }
                    Some(r)
                } else {
                    let a = sjoin_blank_right(ctx, parents, &r_inner, &blank, l.first());
                    let b = sjoin(ctx, parents, &r_mid.unwrap(), &r_right);
                    Some(rjoin(ctx, parents, a, b))
                }
            } else {
                feed(ctx, &l, &r_inner).await;
                r.state.lock().first = l.first();
                Some(r)
            }
        }
    }
}

/// New 2-child node over equal-height strict subtrees.
fn sjoin<K: Item>(ctx: &Ctx, parents: bool, a: &NodeRef<K>, b: &NodeRef<K>) -> NodeRef<K> {
    debug_assert_eq!(a.height(), b.height());
    TreeNode::new_internal(ctx, parents, &[a.clone(), b.clone()])
}

/// 2-child node whose left child is a still-blank overflow target: bounds
/// must be supplied explicitly (the blank will hold the left part of the
/// split of `b`'s old subtree, so its first item is `b`'s current first).
fn sjoin_blank_left<K: Item>(
    ctx: &Ctx,
    parents: bool,
    blank: &NodeRef<K>,
    b: &NodeRef<K>,
    last: Option<K>,
) -> NodeRef<K> {
    let node = TreeNode::new_blank(ctx, parents, b.height() + 1);
    {
        let mut st = node.state.lock();
        st.left = Some(blank.clone());
        st.right = Some(b.clone());
        st.first = b.first();
        st.last = last;
    }
    if parents {
        blank.set_parent(&node);
        b.set_parent(&node);
    }
    node
}

fn sjoin_blank_right<K: Item>(
    ctx: &Ctx,
    parents: bool,
    a: &NodeRef<K>,
    blank: &NodeRef<K>,
    first: Option<K>,
) -> NodeRef<K> {
    let node = TreeNode::new_blank(ctx, parents, a.height() + 1);
    {
        let mut st = node.state.lock();
        st.left = Some(a.clone());
        st.right = Some(blank.clone());
        st.first = first;
        st.last = a.last();
    }
    if parents {
        a.set_parent(&node);
        blank.set_parent(&node);
    }
    node
}

/// Root join of two equal-height trees: fresh 2-child root, both children
/// initialized as spine nodes.
fn rjoin<K: Item>(ctx: &Ctx, parents: bool, a: NodeRef<K>, b: NodeRef<K>) -> NodeRef<K> {
    debug_assert_eq!(a.height(), b.height());
    let j = TreeNode::new_internal(ctx, parents, &[a.clone(), b.clone()]);
    init_spine_node(ctx, &a, Dir::Left);
    init_spine_node(ctx, &b, Dir::Right);
    j
}
