//! The batch-parallel 2-3 tree: spine-structure arithmetic, unsorted batch
//! search, sorted batch access, reverse-indexing, and batch joining of whole
//! instances.

mod access;
mod execute;
mod joinin;
mod node;
mod reverse;
mod seq;
mod spine;
mod usearch;
mod validate;

pub use access::{
    coalesce, route_results, AccessBatch, AccessPlan, AccessResult, EffAccess, EffOutcome,
    ItemHandle, PresentEff, RawAccess, RawOp,
};
pub use node::{Dir, Payload, TreeNode};
pub use spine::{join_spines, join_spines_any, lspine, rspine, JoinShape};
pub use usearch::SearchTagged;
pub use validate::ValidationReport;

use crate::batch::Batch;
use crate::batch_ops::balance;
use crate::runtime::{Barrier, Ctx};
use crate::{Error, Item};
use parking_lot::Mutex;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// A batch-parallel 2-3 tree instance. One batch operation at a time per
/// instance; operations parallelize internally through the runtime.
pub struct PTree<K> {
    inner: Arc<PTreeInner<K>>,
}

impl<K> Clone for PTree<K> {
    fn clone(&self) -> Self {
        PTree { inner: self.inner.clone() }
    }
}

struct PTreeInner<K> {
    root: Mutex<Option<Arc<TreeNode<K>>>>,
    size: AtomicUsize,
    /// parent pointers + marked flags are maintained only when enabled
    /// (required for reverse-indexing, incompatible with persistence)
    parents: bool,
}

impl<K: Item> PTree<K> {
    pub fn empty(parents: bool) -> Self {
        PTree {
            inner: Arc::new(PTreeInner {
                root: Mutex::new(None),
                size: AtomicUsize::new(0),
                parents,
            }),
        }
    }

    /// Builds a finished tree from strictly increasing keyed items.
    pub fn from_sorted(ctx: &Ctx, items: Vec<(K, Payload)>, parents: bool) -> Result<Self, Error> {
        for i in 1..items.len() {
            if items[i - 1].0 >= items[i].0 {
                return Err(Error::Unsorted(i));
            }
        }
        let n = items.len();
        let root = seq::build_23(ctx, parents, &items);
        if let Some(r) = &root {
            validate::set_initial_spines(r);
        }
        let t = PTree {
            inner: Arc::new(PTreeInner {
                root: Mutex::new(root),
                size: AtomicUsize::new(n),
                parents,
            }),
        };
        Ok(t)
    }

    pub fn from_sorted_keys(ctx: &Ctx, keys: Vec<K>, parents: bool) -> Result<Self, Error> {
        Self::from_sorted(ctx, keys.into_iter().map(|k| (k, 0)).collect(), parents)
    }

    /// Builds a finished tree from a sorted batch.
    pub fn from_sorted_batch(ctx: &Ctx, b: &Batch<K>, parents: bool) -> Result<Self, Error> {
        Self::from_sorted(ctx, b.items().into_iter().map(|k| (k, 0)).collect(), parents)
    }

    pub fn is_empty(&self) -> bool {
        self.inner.root.lock().is_none()
    }

    pub fn size(&self) -> usize {
        self.inner.size.load(Ordering::Relaxed)
    }

    pub fn height(&self) -> u32 {
        self.inner.root.lock().as_ref().map_or(0, |r| r.height())
    }

    pub fn parents_enabled(&self) -> bool {
        self.inner.parents
    }

    pub(crate) fn root(&self) -> Option<Arc<TreeNode<K>>> {
        self.inner.root.lock().clone()
    }

    /// Items in leaf order (sorted for sorted instances).
    pub fn items(&self) -> Vec<(K, Payload)> {
        let mut out = Vec::with_capacity(self.size());
        seq::collect_items(&self.root(), &mut out);
        out
    }

    pub fn keys(&self) -> Vec<K> {
        self.items().into_iter().map(|(k, _)| k).collect()
    }

    /// Performs a coalesced access batch on this instance (destructive: the
    /// tree is rebuilt around the accesses). Results land in the plan's
    /// slots; route them with [`route_results`].
    pub async fn execute(&self, ctx: &Ctx, plan: &AccessPlan<K>) {
        if plan.is_empty() {
            return;
        }
        let old_root = self.inner.root.lock().take();
        let new_root =
            execute::execute_on_root(ctx, old_root, plan, self.inner.parents, false).await;
        *self.inner.root.lock() = new_root;
        let delta = plan.size_delta();
        let size = self.inner.size.load(Ordering::Relaxed) as i64 + delta;
        self.inner.size.store(size as usize, Ordering::Relaxed);
    }

    /// Persistent variant: the original instance is left observably
    /// unchanged and the result is returned as a new instance sharing
    /// interior structure. Requires parent tracking to be off.
    pub async fn execute_persistent(&self, ctx: &Ctx, plan: &AccessPlan<K>) -> PTree<K> {
        assert!(!self.inner.parents, "persistent accesses require parent tracking to be off");
        let old_root = self.root();
        let old_size = self.size() as i64;
        if plan.is_empty() {
            return self.clone();
        }
        let new_root = execute::execute_on_root(ctx, old_root, plan, false, true).await;
        let size = (old_size + plan.size_delta()) as usize;
        PTree {
            inner: Arc::new(PTreeInner {
                root: Mutex::new(new_root),
                size: AtomicUsize::new(size),
                parents: false,
            }),
        }
    }

    /// Searches an unsorted batch of items, tagging each with its result and
    /// (when found) a direct handle. The tree is not modified.
    pub async fn usearch(&self, ctx: &Ctx, items: &Batch<K>) -> Batch<SearchTagged<K>> {
        usearch::usearch(ctx, self.root(), items).await
    }

    /// Sorted batch of the items behind an unsorted batch of live handles.
    /// Requires parent tracking; all marked flags are cleared on return.
    pub async fn reverse_index(&self, ctx: &Ctx, handles: &Batch<ItemHandle<K>>) -> Batch<K> {
        assert!(self.inner.parents, "reverse-indexing requires parent tracking");
        reverse::reverse_index(ctx, self.root(), handles).await
    }

    /// Joins whole instances (possibly unsorted) into one tree whose leaf
    /// sequence is the concatenation of the inputs'. Inputs are consumed.
    pub async fn batch_join_instances(ctx: &Ctx, instances: &[PTree<K>]) -> PTree<K> {
        let parents = instances.first().map_or(false, |t| t.inner.parents);
        let barriers: Arc<Mutex<Vec<Barrier>>> = Arc::new(Mutex::new(Vec::new()));
        let roots: Vec<Option<Arc<TreeNode<K>>>> =
            instances.iter().map(|t| t.inner.root.lock().take()).collect();
        let total: usize = instances.iter().map(|t| t.size()).sum();
        for t in instances {
            t.inner.size.store(0, Ordering::Relaxed);
        }
        for r in roots.iter().flatten() {
            joinin::init_spines(ctx, r);
        }
        let root = join_list(ctx, parents, &roots, barriers.clone()).await;
        let bs: Vec<Barrier> = std::mem::take(&mut *barriers.lock());
        for b in bs {
            b.wait(ctx).await;
        }
        PTree {
            inner: Arc::new(PTreeInner {
                root: Mutex::new(root),
                size: AtomicUsize::new(total),
                parents,
            }),
        }
    }

    /// Copy with the left and right spines deep-copied and everything else
    /// shared; pipelined joins on the copy cannot touch this instance.
    pub fn spine_snapshot(&self, ctx: &Ctx) -> PTree<K> {
        let root = self.root().map(|r| {
            let s = execute::snapshot_spines(ctx, &r);
            validate::set_initial_spines(&s);
            s
        });
        PTree {
            inner: Arc::new(PTreeInner {
                root: Mutex::new(root),
                size: AtomicUsize::new(self.size()),
                parents: false,
            }),
        }
    }

    /// Full structural validation; `sorted` additionally demands strictly
    /// increasing leaf items.
    pub fn validate(&self, sorted: bool) -> ValidationReport {
        validate::validate(&self.root(), self.size(), sorted)
    }

    /// Sorted item list as CSV (header `item`, one key per row).
    pub fn serialize_csv(&self) -> String {
        let mut s = String::from("item\n");
        for (k, _) in self.items() {
            s.push_str(&format!("{k:?}\n"));
        }
        s
    }

    pub fn debug_dump(&self) -> String {
        validate::debug_dump(&self.root())
    }

    /// The tree's items as a complete sorted batch (the BBT view used when an
    /// instance serves as an input batch elsewhere).
    pub async fn items_as_batch(&self, ctx: &Ctx) -> Batch<K> {
        match self.root() {
            None => Batch::empty(),
            Some(r) => {
                let raw = reverse::binarize(&r);
                balance(ctx, &Batch::from_root(Some(raw))).await
            }
        }
    }

    /// Corrupts one spine field (test support for validator negative
    /// controls).
    pub fn corrupt_spine_for_test(&self) -> bool {
        let Some(root) = self.root() else { return false };
        let kids = root.kids();
        if let Some(c) = kids.last() {
            if !c.is_leaf() {
                let mut st = c.state.lock();
                st.spine ^= 1;
                return true;
            }
        }
        false
    }
}

fn join_list<'a, K: Item>(
    ctx: &'a Ctx,
    parents: bool,
    roots: &'a [Option<Arc<TreeNode<K>>>],
    barriers: Arc<Mutex<Vec<Barrier>>>,
) -> futures::future::BoxFuture<'a, Option<Arc<TreeNode<K>>>> {
    Box::pin(async move {
        match roots.len() {
            0 => None,
            1 => roots[0].clone(),
            n => {
                let (l, r) = roots.split_at(n / 2);
                let done = Barrier::new(ctx);
                barriers.lock().push(done.clone());
                let ctx2 = ctx.clone();
                let lb = barriers.clone();
                let lroots: Vec<_> = l.to_vec();
                let h = ctx
                    .fork(async move { join_list(&ctx2, parents, &lroots, lb).await })
                    .await;
                let rres = join_list(ctx, parents, r, barriers.clone()).await;
                let lres = h.join(ctx).await;
                joinin::join23(ctx, parents, lres, rres, done).await
            }
        }
    })
}

/// Builds a 2-3 tree of the given height with seeded random child counts and
/// consecutive integer keys starting at `first_key` (test support: exercises
/// shapes the deterministic builder never produces).
pub fn random_shape_tree(ctx: &Ctx, seed: u64, height: u32, first_key: i64) -> PTree<i64> {
    use rand::Rng;
    use rand::SeedableRng;
    fn rec(
        ctx: &Ctx,
        rng: &mut rand_chacha::ChaCha8Rng,
        height: u32,
        next_key: &mut i64,
    ) -> Arc<TreeNode<i64>> {
        if height == 0 {
            let k = *next_key;
            *next_key += 1;
            return TreeNode::new_leaf(ctx, false, k, 0);
        }
        let c = if rng.gen_bool(0.5) { 2 } else { 3 };
        let kids: Vec<_> = (0..c).map(|_| rec(ctx, rng, height - 1, next_key)).collect();
        TreeNode::new_internal(ctx, false, &kids)
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut next_key = first_key;
    let root = rec(ctx, &mut rng, height, &mut next_key);
    validate::set_initial_spines(&root);
    let size = (next_key - first_key) as usize;
    PTree {
        inner: Arc::new(PTreeInner {
            root: Mutex::new(Some(root)),
            size: AtomicUsize::new(size),
            parents: false,
        }),
    }
}

/// Structural signature (heights, child counts, keys) for tree-shape
/// comparisons in tests.
pub fn shape_signature<K: Item>(t: &PTree<K>) -> String {
    fn rec<K: Item>(v: &Arc<TreeNode<K>>, out: &mut String) {
        if v.is_leaf() {
            out.push_str(&format!("{:?},", v.key().unwrap()));
            return;
        }
        out.push_str(&format!("({}h{}", v.kids().len(), v.height()));
        for k in v.kids() {
            rec(&k, out);
        }
        out.push(')');
    }
    let mut s = String::new();
    match t.root() {
        None => s.push_str("empty"),
        Some(r) => rec(&r, &mut s),
    }
    s
}

/// Root access for oracle code in tests.
pub fn root_of<K: Item>(t: &PTree<K>) -> Option<Arc<TreeNode<K>>> {
    t.root()
}

/// Wraps a raw root into an instance handle (test support); size and spine
/// fields are recomputed.
pub fn wrap_root_for_test<K: Item>(root: Option<Arc<TreeNode<K>>>) -> PTree<K> {
    let mut items = Vec::new();
    seq::collect_items(&root, &mut items);
    if let Some(r) = &root {
        validate::set_initial_spines(r);
    }
    PTree {
        inner: Arc::new(PTreeInner {
            root: Mutex::new(root),
            size: AtomicUsize::new(items.len()),
            parents: false,
        }),
    }
}

/// Number of nodes reachable in `t`.
pub fn node_count<K: Item>(t: &PTree<K>) -> usize {
    fn rec<K: Item>(v: &Arc<TreeNode<K>>) -> usize {
        1 + v.kids().iter().map(rec).sum::<usize>()
    }
    t.root().map_or(0, |r| rec(&r))
}

/// Number of nodes of `a` shared (by identity) with nodes of `b`.
pub fn shared_node_count<K: Item>(a: &PTree<K>, b: &PTree<K>) -> usize {
    fn collect<K: Item>(v: &Arc<TreeNode<K>>, out: &mut std::collections::HashSet<*const TreeNode<K>>) {
        out.insert(Arc::as_ptr(v));
        for k in v.kids() {
            collect(&k, out);
        }
    }
    let mut sa = std::collections::HashSet::new();
    let mut sb = std::collections::HashSet::new();
    if let Some(r) = a.root() {
        collect(&r, &mut sa);
    }
    if let Some(r) = b.root() {
        collect(&r, &mut sb);
    }
    sa.intersection(&sb).count()
}

/// Joins an ordered slice of 2-3 subtrees into a single tree (shortest to
/// tallest from each end).
pub async fn slice_join_23<K: Item>(
    ctx: &Ctx,
    parts: &[Arc<TreeNode<K>>],
) -> Option<Arc<TreeNode<K>>> {
    seq::slice_join_23(ctx, false, parts).await
}

/// Minimal ordered 2-3 slice of `t` covering leaf ranks lo..=hi.
pub fn slice_23<K: Item>(t: &PTree<K>, lo: usize, hi: usize) -> Vec<Arc<TreeNode<K>>> {
    match t.root() {
        None => Vec::new(),
        Some(r) => seq::slice_23(&r, lo, hi),
    }
}

/// Sequential join of two trees (the textbook algorithm); exposed for use as
/// a test oracle against the pipelined join.
pub async fn seq_join_trees<K: Item>(
    ctx: &Ctx,
    l: Option<Arc<TreeNode<K>>>,
    r: Option<Arc<TreeNode<K>>>,
) -> Option<Arc<TreeNode<K>>> {
    seq::seq_join(ctx, false, l, r).await
}

/// Spine structures of a root recomputed from scratch (oracle support).
pub fn spines_by_definition<K: Item>(t: &PTree<K>) -> Option<(u64, u64)> {
    t.root().map(|r| {
        (validate::spine_by_definition(&r, true), validate::spine_by_definition(&r, false))
    })
}

/// Drives the pipelined join of two finished instances to quiescence and
/// returns the joined instance (consumes both).
pub async fn join_instances<K: Item>(ctx: &Ctx, l: &PTree<K>, r: &PTree<K>) -> PTree<K> {
    PTree::batch_join_instances(ctx, &[l.clone(), r.clone()]).await
}
