//! Sequential 2-3 tree operations used at the leaves of an access batch:
//! joining slice pieces, and searching/inserting/deleting a single key on the
//! collated part. All structural updates are path-copying, so shared
//! subtrees (and the leaves themselves) are never mutated in place.

use super::node::{Payload, TreeNode};
use crate::runtime::Ctx;
use crate::Item;
use futures::future::BoxFuture;
use std::sync::Arc;

pub(crate) type NodeRef<K> = Arc<TreeNode<K>>;

enum Grow<K> {
    One(NodeRef<K>),
    Two(NodeRef<K>, NodeRef<K>),
}

enum Shrink<K> {
    Same(NodeRef<K>),
    /// the subtree lost a level
    Short(NodeRef<K>),
}

/// Standard join of two 2-3 trees (either may be empty), preserving leaf
/// order; O(height difference) fresh nodes.
pub(crate) async fn seq_join<K: Item>(
    ctx: &Ctx,
    parents: bool,
    l: Option<NodeRef<K>>,
    r: Option<NodeRef<K>>,
) -> Option<NodeRef<K>> {
    match (l, r) {
        (None, x) | (x, None) => x,
        (Some(l), Some(r)) => Some(seq_join_nonempty(ctx, parents, l, r).await),
    }
}

pub(crate) async fn seq_join_nonempty<K: Item>(
    ctx: &Ctx,
    parents: bool,
    l: NodeRef<K>,
    r: NodeRef<K>,
) -> NodeRef<K> {
    ctx.tick().await;
    if l.height() == r.height() {
        return TreeNode::new_internal(ctx, parents, &[l, r]);
    }
    if l.height() > r.height() {
        match join_down_right(ctx, parents, &l, &r).await {
            Grow::One(n) => n,
            Grow::Two(a, b) => TreeNode::new_internal(ctx, parents, &[a, b]),
        }
    } else {
        match join_down_left(ctx, parents, &l, &r).await {
            Grow::One(n) => n,
            Grow::Two(a, b) => TreeNode::new_internal(ctx, parents, &[a, b]),
        }
    }
}

fn join_down_right<'a, K: Item>(
    ctx: &'a Ctx,
    parents: bool,
    v: &'a NodeRef<K>,
    r: &'a NodeRef<K>,
) -> BoxFuture<'a, Grow<K>> {
    Box::pin(async move {
        ctx.tick().await;
        let kids = v.kids();
        let last = kids.last().expect("internal node").clone();
        if last.height() == r.height() {
            return splice_at(ctx, parents, &kids, kids.len() - 1, Grow::Two(last, r.clone()));
        }
        let grown = join_down_right(ctx, parents, &last, r).await;
        splice_at(ctx, parents, &kids, kids.len() - 1, grown)
    })
}

fn join_down_left<'a, K: Item>(
    ctx: &'a Ctx,
    parents: bool,
    l: &'a NodeRef<K>,
    v: &'a NodeRef<K>,
) -> BoxFuture<'a, Grow<K>> {
    Box::pin(async move {
        ctx.tick().await;
        let kids = v.kids();
        let first = kids.first().expect("internal node").clone();
        if first.height() == l.height() {
            return splice_at(ctx, parents, &kids, 0, Grow::Two(l.clone(), first));
        }
        let grown = join_down_left(ctx, parents, l, &first).await;
        splice_at(ctx, parents, &kids, 0, grown)
    })
}

/// Replaces `kids[at]` with the grown result, splitting a 4-child overflow
/// into two 2-child siblings.
fn splice_at<K: Item>(
    ctx: &Ctx,
    parents: bool,
    kids: &[NodeRef<K>],
    at: usize,
    grown: Grow<K>,
) -> Grow<K> {
    let mut new_kids: Vec<NodeRef<K>> = Vec::with_capacity(4);
    for (i, k) in kids.iter().enumerate() {
        if i == at {
            match &grown {
                Grow::One(n) => new_kids.push(n.clone()),
                Grow::Two(a, b) => {
                    new_kids.push(a.clone());
                    new_kids.push(b.clone());
                }
            }
        } else {
            new_kids.push(k.clone());
        }
    }
    if new_kids.len() <= 3 {
        Grow::One(TreeNode::new_internal(ctx, parents, &new_kids))
    } else {
        Grow::Two(
            TreeNode::new_internal(ctx, parents, &new_kids[..2]),
            TreeNode::new_internal(ctx, parents, &new_kids[2..]),
        )
    }
}

/// Descends by `key <= kid.last` and returns the landing leaf (the key is
/// present iff the leaf carries it).
pub(crate) fn find_leaf<K: Item>(t: &NodeRef<K>, key: &K) -> NodeRef<K> {
    let mut v = t.clone();
    while !v.is_leaf() {
        let kids = v.kids();
        let mut chosen = kids.last().expect("internal node").clone();
        for k in &kids {
            if k.last().as_ref().map(|l| key <= l).unwrap_or(false) {
                chosen = k.clone();
                break;
            }
        }
        v = chosen;
    }
    v
}

/// Inserts an absent key; returns the new root and the new leaf.
pub(crate) async fn seq_insert<K: Item>(
    ctx: &Ctx,
    parents: bool,
    t: Option<NodeRef<K>>,
    key: K,
    payload: Payload,
) -> (NodeRef<K>, NodeRef<K>) {
    let leaf = TreeNode::new_leaf(ctx, parents, key.clone(), payload);
    match t {
        None => (leaf.clone(), leaf),
        Some(root) => {
            let grown = insert_rec(ctx, parents, &root, &key, &leaf).await;
            let new_root = match grown {
                Grow::One(n) => n,
                Grow::Two(a, b) => TreeNode::new_internal(ctx, parents, &[a, b]),
            };
            (new_root, leaf)
        }
    }
}

fn insert_rec<'a, K: Item>(
    ctx: &'a Ctx,
    parents: bool,
    v: &'a NodeRef<K>,
    key: &'a K,
    leaf: &'a NodeRef<K>,
) -> BoxFuture<'a, Grow<K>> {
    Box::pin(async move {
        ctx.tick().await;
        if v.is_leaf() {
            let vkey = v.key().expect("leaf");
            debug_assert!(vkey != key, "insert of a present key must be filtered before");
            return if key < vkey {
                Grow::Two(leaf.clone(), v.clone())
            } else {
                Grow::Two(v.clone(), leaf.clone())
            };
        }
        let kids = v.kids();
        let mut at = kids.len() - 1;
        for (i, k) in kids.iter().enumerate() {
            if k.last().as_ref().map(|l| key <= l).unwrap_or(false) {
                at = i;
                break;
            }
        }
        let grown = insert_rec(ctx, parents, &kids[at], key, leaf).await;
        splice_at(ctx, parents, &kids, at, grown)
    })
}

/// Deletes a present key; returns the new root (None when the tree empties).
pub(crate) async fn seq_delete<K: Item>(
    ctx: &Ctx,
    parents: bool,
    t: NodeRef<K>,
    key: &K,
) -> Option<NodeRef<K>> {
    if t.is_leaf() {
        debug_assert_eq!(t.key(), Some(key), "delete of an absent key must be filtered before");
        return None;
    }
    match delete_rec(ctx, parents, &t, key).await {
        Shrink::Same(n) | Shrink::Short(n) => Some(n),
    }
}

fn delete_rec<'a, K: Item>(
    ctx: &'a Ctx,
    parents: bool,
    v: &'a NodeRef<K>,
    key: &'a K,
) -> BoxFuture<'a, Shrink<K>> {
    Box::pin(async move {
        ctx.tick().await;
        let kids = v.kids();
        let mut at = kids.len() - 1;
        for (i, k) in kids.iter().enumerate() {
            if k.last().as_ref().map(|l| key <= l).unwrap_or(false) {
                at = i;
                break;
            }
        }
        let kid = &kids[at];
        if kid.is_leaf() {
            debug_assert_eq!(kid.key(), Some(key), "delete of an absent key must be filtered before");
            let remaining: Vec<NodeRef<K>> =
                kids.iter().enumerate().filter(|(i, _)| *i != at).map(|(_, k)| k.clone()).collect();
            return if remaining.len() >= 2 {
                Shrink::Same(TreeNode::new_internal(ctx, parents, &remaining))
            } else {
                Shrink::Short(remaining[0].clone())
            };
        }
        match delete_rec(ctx, parents, kid, key).await {
            Shrink::Same(n) => {
                let mut new_kids = kids.clone();
                new_kids[at] = n;
                Shrink::Same(TreeNode::new_internal(ctx, parents, &new_kids))
            }
            Shrink::Short(orphan) => {
                // merge the one-level-short orphan with an adjacent sibling
                let (nb_at, orphan_left) = if at == 0 { (1, true) } else { (at - 1, false) };
                let nb = &kids[nb_at];
                let nb_kids = nb.kids();
                if nb_kids.len() == 2 {
                    let merged = if orphan_left {
                        TreeNode::new_internal(ctx, parents, &[orphan, nb_kids[0].clone(), nb_kids[1].clone()])
                    } else {
                        TreeNode::new_internal(ctx, parents, &[nb_kids[0].clone(), nb_kids[1].clone(), orphan])
                    };
                    let mut rest: Vec<NodeRef<K>> = Vec::new();
                    for (i, k) in kids.iter().enumerate() {
                        if i == at {
                            continue;
                        } else if i == nb_at {
                            rest.push(merged.clone());
                        } else {
                            rest.push(k.clone());
                        }
                    }
                    if rest.len() >= 2 {
                        Shrink::Same(TreeNode::new_internal(ctx, parents, &rest))
                    } else {
                        Shrink::Short(merged)
                    }
                } else {
                    // neighbor has 3 children: borrow its closest one
                    let (nb_new, fixed) = if orphan_left {
                        (
                            TreeNode::new_internal(ctx, parents, &nb_kids[1..]),
                            TreeNode::new_internal(ctx, parents, &[orphan, nb_kids[0].clone()]),
                        )
                    } else {
                        (
                            TreeNode::new_internal(ctx, parents, &nb_kids[..2]),
                            TreeNode::new_internal(ctx, parents, &[nb_kids[2].clone(), orphan]),
                        )
                    };
                    let mut new_kids: Vec<NodeRef<K>> = Vec::new();
                    for (i, k) in kids.iter().enumerate() {
                        if i == at {
                            new_kids.push(fixed.clone());
                        } else if i == nb_at {
                            new_kids.push(nb_new.clone());
                        } else {
                            new_kids.push(k.clone());
                        }
                    }
                    Shrink::Same(TreeNode::new_internal(ctx, parents, &new_kids))
                }
            }
        }
    })
}

/// Builds a 2-3 tree of the given items (strictly increasing keys).
pub(crate) fn build_23<K: Item>(
    ctx: &Ctx,
    parents: bool,
    items: &[(K, Payload)],
) -> Option<NodeRef<K>> {
    if items.is_empty() {
        return None;
    }
    let h = (usize::BITS - 1 - items.len().leading_zeros()) as u32; // floor(log2 n)
    Some(build_rec(ctx, parents, items, h))
}

fn build_rec<K: Item>(ctx: &Ctx, parents: bool, items: &[(K, Payload)], h: u32) -> NodeRef<K> {
    let n = items.len();
    if h == 0 {
        debug_assert_eq!(n, 1);
        let (k, p) = &items[0];
        return TreeNode::new_leaf(ctx, parents, k.clone(), *p);
    }
    let third_cap = 3usize.pow(h - 1);
    let c = if n <= 2 * third_cap { 2 } else { 3 };
    let base = n / c;
    let rem = n % c;
    let mut kids = Vec::with_capacity(c);
    let mut off = 0;
    for i in 0..c {
        let sz = base + usize::from(i < rem);
        kids.push(build_rec(ctx, parents, &items[off..off + sz], h - 1));
        off += sz;
    }
    TreeNode::new_internal(ctx, parents, &kids)
}

/// Items of a quiescent tree in leaf order.
pub(crate) fn collect_items<K: Item>(t: &Option<NodeRef<K>>, out: &mut Vec<(K, Payload)>) {
    fn walk<K: Item>(v: &NodeRef<K>, out: &mut Vec<(K, Payload)>) {
        if let Some(l) = &v.leaf {
            out.push((l.key.clone(), l.payload.load(std::sync::atomic::Ordering::Relaxed)));
            return;
        }
        for k in v.kids() {
            walk(&k, out);
        }
    }
    if let Some(r) = t {
        walk(r, out);
    }
}

/// Joins an ordered 2-3 slice into a single tree, shortest to tallest from
/// both ends; O(log k) for slices whose heights are monotone with at most
/// two subtrees per height.
pub(crate) async fn slice_join_23<K: Item>(
    ctx: &Ctx,
    parents: bool,
    parts: &[NodeRef<K>],
) -> Option<NodeRef<K>> {
    let mut acc: Option<NodeRef<K>> = None;
    for p in parts {
        acc = seq_join(ctx, parents, acc, Some(p.clone())).await;
    }
    acc
}

/// Minimal ordered 2-3 slice covering leaf ranks lo..=hi (test support).
pub(crate) fn slice_23<K: Item>(t: &NodeRef<K>, lo: usize, hi: usize) -> Vec<NodeRef<K>> {
    fn leaf_count<K: Item>(v: &NodeRef<K>) -> usize {
        if v.is_leaf() {
            1
        } else {
            v.kids().iter().map(leaf_count).sum()
        }
    }
    fn rec<K: Item>(v: &NodeRef<K>, lo: usize, hi: usize, out: &mut Vec<NodeRef<K>>) {
        let n = leaf_count(v);
        if lo == 0 && hi == n - 1 {
            out.push(v.clone());
            return;
        }
        let mut off = 0;
        for k in v.kids() {
            let kn = leaf_count(&k);
            let (klo, khi) = (off, off + kn - 1);
            if hi >= klo && lo <= khi {
                rec(&k, lo.max(klo) - klo, hi.min(khi) - klo, out);
            }
            off += kn;
        }
    }
    let mut out = Vec::new();
    rec(t, lo, hi, &mut out);
    out
}
