//! Batches: leaf-based height-balanced binary trees (BBTs) carrying items at
//! the leaves, with per-node height, leaf count, and first/last item. Slices,
//! slice joining, and the log-splitting check live here too.
//!
//! The balance rule is the AVL sibling condition |height(left) −
//! height(right)| ≤ 1 at every internal node.

mod node;
mod queue;

pub use node::{Aux, BatchNode};
pub use queue::DedicatedQueue;

use crate::{BatchItem, Error, Item};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// A batch of items stored as a BBT; an empty batch has no root.
pub struct Batch<T> {
    root: Option<Arc<BatchNode<T>>>,
}

impl<T> Clone for Batch<T> {
    fn clone(&self) -> Self {
        Batch { root: self.root.clone() }
    }
}

impl<T> Default for Batch<T> {
    fn default() -> Self {
        Batch { root: None }
    }
}

impl<T: BatchItem> Batch<T> {
    pub fn empty() -> Self {
        Batch { root: None }
    }

    pub fn from_root(root: Option<Arc<BatchNode<T>>>) -> Self {
        Batch { root }
    }

    /// Builds a complete BBT from items in the given (not necessarily
    /// sorted) order.
    pub fn from_items(items: Vec<T>) -> Self {
        if items.is_empty() {
            return Batch { root: None };
        }
        Batch { root: Some(build_complete(&items)) }
    }

    pub fn root(&self) -> Option<&Arc<BatchNode<T>>> {
        self.root.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    pub fn size(&self) -> usize {
        self.root.as_ref().map_or(0, |r| r.size())
    }

    pub fn height(&self) -> u32 {
        self.root.as_ref().map_or(0, |r| r.height())
    }

    /// Items in leaf order.
    pub fn items(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.size());
        if let Some(r) = &self.root {
            collect_items(r, &mut out);
        }
        out
    }

    /// Minimal ordered slice covering leaf ranks `lo..=hi`.
    pub fn slice(&self, lo: usize, hi: usize) -> Result<Slice<T>, Error> {
        let size = self.size();
        if lo > hi || hi >= size {
            return Err(Error::RankRange { lo, hi, size });
        }
        let mut parts = Vec::new();
        collect_slice(self.root.as_ref().unwrap(), lo, hi, &mut parts);
        Ok(Slice { parts })
    }

    /// Samples (or exhausts, for small batches) leaf ranges and checks that
    /// every slice with k leaves has at most 4·log2(k+1) subtrees.
    pub fn check_log_splitting(&self, trials: usize, seed: u64) -> bool {
        match &self.root {
            None => true,
            Some(r) => check_log_splitting_node(r, trials, seed),
        }
    }
}

impl<T: Item> Batch<T> {
    /// Builds a complete BBT (all levels full except possibly the last,
    /// filled left to right) from strictly increasing items.
    pub fn from_sorted(items: Vec<T>) -> Result<Self, Error> {
        for i in 1..items.len() {
            if items[i - 1] >= items[i] {
                return Err(Error::Unsorted(i));
            }
        }
        Ok(Self::from_items(items))
    }

    /// Verifies every BatchNode invariant by full traversal.
    pub fn validate(&self) -> Result<(), Error> {
        if let Some(r) = &self.root {
            validate_node(r)?;
        }
        Ok(())
    }

    /// Additionally checks that leaf items are strictly increasing.
    pub fn validate_sorted(&self) -> Result<(), Error> {
        self.validate()?;
        let items = self.items();
        for i in 1..items.len() {
            if items[i - 1] >= items[i] {
                return Err(Error::Invalid(format!("leaf items not strictly increasing at rank {i}")));
            }
        }
        Ok(())
    }
}

/// An ordered slice: disjoint, pairwise non-sibling subtrees covering
/// consecutive leaves, listed in rightward order.
pub struct Slice<T> {
    parts: Vec<Arc<BatchNode<T>>>,
}

impl<T: BatchItem> Slice<T> {
    pub fn parts(&self) -> &[Arc<BatchNode<T>>] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Joins the slice into a single BBT containing exactly its leaves in
    /// order; O(log(k+1)) sequential node work for a k-leaf slice.
    pub fn join(&self) -> Batch<T> {
        let mut acc: Option<Arc<BatchNode<T>>> = None;
        for p in &self.parts {
            acc = Some(match acc {
                None => p.clone(),
                Some(a) => bbt_join(a, p.clone()),
            });
        }
        Batch { root: acc }
    }
}

/// Joins two BBTs into one, preserving leaf order; path-copying, so the
/// inputs stay valid. Cost O(|height(l) − height(r)| + 1).
pub fn bbt_join<T: BatchItem>(l: Arc<BatchNode<T>>, r: Arc<BatchNode<T>>) -> Arc<BatchNode<T>> {
    let (hl, hr) = (l.height() as i64, r.height() as i64);
    if (hl - hr).abs() <= 1 {
        BatchNode::internal(l, r)
    } else if hl > hr {
        join_taller_left(l, r)
    } else {
        join_taller_right(l, r)
    }
}

// height(l) ≥ height(r) + 2: descend l's right spine
fn join_taller_left<T: BatchItem>(l: Arc<BatchNode<T>>, r: Arc<BatchNode<T>>) -> Arc<BatchNode<T>> {
    let (a, b) = l.children_cloned().expect("taller tree must be internal");
    let t = if b.height() as i64 <= r.height() as i64 + 1 {
        BatchNode::internal(b, r)
    } else {
        join_taller_left(b, r)
    };
    if t.height() <= a.height() + 1 {
        BatchNode::internal(a, t)
    } else {
        // t = a.height + 2: rotate
        let (tl, tr) = t.children_cloned().unwrap();
        if tl.height() <= tr.height() {
            BatchNode::internal(BatchNode::internal(a, tl), tr)
        } else {
            let (tll, tlr) = tl.children_cloned().unwrap();
            BatchNode::internal(BatchNode::internal(a, tll), BatchNode::internal(tlr, tr))
        }
    }
}

// mirror image: height(r) ≥ height(l) + 2
fn join_taller_right<T: BatchItem>(l: Arc<BatchNode<T>>, r: Arc<BatchNode<T>>) -> Arc<BatchNode<T>> {
    let (a, b) = r.children_cloned().expect("taller tree must be internal");
    let t = if a.height() as i64 <= l.height() as i64 + 1 {
        BatchNode::internal(l, a)
    } else {
        join_taller_right(l, a)
    };
    if t.height() <= b.height() + 1 {
        BatchNode::internal(t, b)
    } else {
        let (tl, tr) = t.children_cloned().unwrap();
        if tr.height() <= tl.height() {
            BatchNode::internal(tl, BatchNode::internal(tr, b))
        } else {
            let (trl, trr) = tr.children_cloned().unwrap();
            BatchNode::internal(BatchNode::internal(tl, trl), BatchNode::internal(trr, b))
        }
    }
}

/// Rebuilds `node`'s rightmost leaf with `f` applied to its item
/// (path-copying). Used by merge to combine a duplicate at the boundary.
pub fn replace_last_leaf<T: BatchItem>(
    node: &Arc<BatchNode<T>>,
    f: &dyn Fn(&T) -> T,
) -> Arc<BatchNode<T>> {
    match node.children_cloned() {
        None => BatchNode::leaf(f(node.item().expect("leaf without item"))),
        Some((l, r)) => BatchNode::internal(l, replace_last_leaf(&r, f)),
    }
}

pub(crate) fn build_complete<T: BatchItem>(items: &[T]) -> Arc<BatchNode<T>> {
    debug_assert!(!items.is_empty());
    if items.len() == 1 {
        return BatchNode::leaf(items[0].clone());
    }
    let n = items.len();
    let h = usize::BITS - (n - 1).leading_zeros(); // ceil(log2 n)
    let halfcap = 1usize << (h - 1);
    let left_n = if n >= halfcap + halfcap / 2 { halfcap } else { n - halfcap / 2 };
    BatchNode::internal(build_complete(&items[..left_n]), build_complete(&items[left_n..]))
}

fn collect_items<T: BatchItem>(node: &Arc<BatchNode<T>>, out: &mut Vec<T>) {
    match node.children() {
        None => out.push(node.item().expect("leaf without item").clone()),
        Some((l, r)) => {
            collect_items(l, out);
            collect_items(r, out);
        }
    }
}

fn collect_slice<T: BatchItem>(node: &Arc<BatchNode<T>>, lo: usize, hi: usize, out: &mut Vec<Arc<BatchNode<T>>>) {
    if lo == 0 && hi == node.size() - 1 {
        out.push(node.clone());
        return;
    }
    let (l, r) = node.children().expect("range inside a leaf");
    let ls = l.size();
    if hi < ls {
        collect_slice(l, lo, hi, out);
    } else if lo >= ls {
        collect_slice(r, lo - ls, hi - ls, out);
    } else {
        collect_slice(l, lo, ls - 1, out);
        collect_slice(r, 0, hi - ls, out);
    }
}

fn validate_node<T: Item>(node: &Arc<BatchNode<T>>) -> Result<(T, T), Error> {
    match node.children() {
        None => {
            let item = node.item().ok_or_else(|| Error::Invalid("leaf without item".into()))?;
            if node.height() != 0 || node.size() != 1 {
                return Err(Error::Invalid("leaf with nonzero height or size != 1".into()));
            }
            match node.bounds() {
                Some((f, l)) if f == item && l == item => {}
                _ => return Err(Error::Invalid("leaf first/last do not match its item".into())),
            }
            Ok((item.clone(), item.clone()))
        }
        Some((l, r)) => {
            let (lf, ll) = validate_node(l)?;
            let (rf, rl) = validate_node(r)?;
            let _ = (ll, rf);
            if node.height() != 1 + l.height().max(r.height()) {
                return Err(Error::Invalid(format!("bad height at node of size {}", node.size())));
            }
            if (l.height() as i64 - r.height() as i64).abs() > 1 {
                return Err(Error::Invalid(format!(
                    "height imbalance {} vs {} at node of size {}",
                    l.height(),
                    r.height(),
                    node.size()
                )));
            }
            if node.size() != l.size() + r.size() {
                return Err(Error::Invalid("size mismatch".into()));
            }
            match node.bounds() {
                Some((f, la)) if *f == lf && *la == rl => {}
                _ => return Err(Error::Invalid("first/last do not agree with leftmost/rightmost leaf".into())),
            }
            Ok((lf, rl))
        }
    }
}

/// Log-splitting check over a raw node (usable on non-Batch fixture trees).
pub fn check_log_splitting_node<T: BatchItem>(root: &Arc<BatchNode<T>>, trials: usize, seed: u64) -> bool {
    let n = root.size();
    let check = |lo: usize, hi: usize| -> bool {
        let mut parts = Vec::new();
        collect_slice(root, lo, hi, &mut parts);
        let k = (hi - lo + 1) as f64;
        parts.len() as f64 <= 4.0 * (k + 1.0).log2()
    };
    if n <= 1024 {
        for lo in 0..n {
            for hi in lo..n {
                if !check(lo, hi) {
                    return false;
                }
            }
        }
        true
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let lo = rng.gen_range(0..n);
            let hi = rng.gen_range(lo..n);
            if !check(lo, hi) {
                return false;
            }
        }
        true
    }
}
