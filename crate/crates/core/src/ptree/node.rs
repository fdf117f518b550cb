//! 2-3 tree nodes. A node is a leaf (carrying an item and a payload word) or
//! an internal node with two or three children, all of height one less.
//! Spine nodes additionally carry a spine-structure integer, an inbox of
//! queued trees, and a reactivatable join-in procedure; a tree that is being
//! joined in carries its overflow target and completion barrier.

use crate::batch::DedicatedQueue;
use crate::runtime::{Barrier, Ctx, NonBlockingLock, Reactivation};
use crate::Item;
use parking_lot::Mutex;
use std::sync::atomic::{AtomicI64, AtomicU32, Ordering};
use std::sync::{Arc, Weak};

/// Payload word attached to every item.
pub type Payload = i64;

pub struct LeafData<K> {
    pub key: K,
    pub payload: AtomicI64,
}

/// Join direction of a spine node: `Left` nodes sit on left spines and join
/// queued trees in on their left, `Right` symmetrically.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Dir {
    Left,
    Right,
}

pub(crate) struct JoinAux<K> {
    pub inbox: DedicatedQueue<Arc<TreeNode<K>>>,
    pub joinin: Reactivation,
    pub dir: Dir,
}

pub(crate) struct QueuedState<K> {
    pub overflow: Option<Arc<TreeNode<K>>>,
    pub joined: Option<Barrier>,
}

impl<K> Default for QueuedState<K> {
    fn default() -> Self {
        QueuedState { overflow: None, joined: None }
    }
}

pub(crate) struct NodeState<K> {
    pub left: Option<Arc<TreeNode<K>>>,
    pub mid: Option<Arc<TreeNode<K>>>,
    pub right: Option<Arc<TreeNode<K>>>,
    pub spine: u64,
    pub first: Option<K>,
    pub last: Option<K>,
    pub parent: Weak<TreeNode<K>>,
}

impl<K> Default for NodeState<K> {
    fn default() -> Self {
        NodeState { left: None, mid: None, right: None, spine: 0, first: None, last: None, parent: Weak::new() }
    }
}

pub struct TreeNode<K> {
    height: u32,
    parents_tracked: bool,
    pub(crate) leaf: Option<LeafData<K>>,
    pub(crate) state: Mutex<NodeState<K>>,
    pub(crate) join_aux: Mutex<Option<JoinAux<K>>>,
    pub(crate) queued: Mutex<QueuedState<K>>,
    /// reverse-indexing mark (present when the tree tracks parents)
    pub(crate) marked: Option<NonBlockingLock>,
    /// mark of the virtual binary node over (mid, right) of a 3-child node;
    /// keeps tracing at two probes per flag exactly as in the binary view
    pub(crate) marked2: Option<NonBlockingLock>,
    pub(crate) probe_count: AtomicU32,
    pub(crate) probe_count2: AtomicU32,
    /// barriers of joins pending below this node during reverse-indexing
    pub(crate) rev_done: Mutex<Vec<Barrier>>,
}

impl<K: Item> TreeNode<K> {
    pub(crate) fn new_leaf(ctx: &Ctx, parents: bool, key: K, payload: Payload) -> Arc<Self> {
        let node = Arc::new(TreeNode {
            height: 0,
            parents_tracked: parents,
            leaf: Some(LeafData { key: key.clone(), payload: AtomicI64::new(payload) }),
            state: Mutex::new(NodeState {
                first: Some(key.clone()),
                last: Some(key),
                ..NodeState::default()
            }),
            join_aux: Mutex::new(None),
            queued: Mutex::new(QueuedState::default()),
            marked: parents.then(|| NonBlockingLock::with_class(ctx, crate::runtime::CellClass::Mark)),
            marked2: parents.then(|| NonBlockingLock::with_class(ctx, crate::runtime::CellClass::Mark)),
            probe_count: AtomicU32::new(0),
            probe_count2: AtomicU32::new(0),
            rev_done: Mutex::new(Vec::new()),
        });
        node
    }

    /// A blank node of fixed height, to be filled by a later overflow.
    pub(crate) fn new_blank(ctx: &Ctx, parents: bool, height: u32) -> Arc<Self> {
        debug_assert!(height >= 1);
        Arc::new(TreeNode {
            height,
            parents_tracked: parents,
            leaf: None,
            state: Mutex::new(NodeState::default()),
            join_aux: Mutex::new(None),
            queued: Mutex::new(QueuedState::default()),
            marked: parents.then(|| NonBlockingLock::with_class(ctx, crate::runtime::CellClass::Mark)),
            marked2: parents.then(|| NonBlockingLock::with_class(ctx, crate::runtime::CellClass::Mark)),
            probe_count: AtomicU32::new(0),
            probe_count2: AtomicU32::new(0),
            rev_done: Mutex::new(Vec::new()),
        })
    }

    /// Internal node over 2 or 3 equal-height children.
    pub(crate) fn new_internal(
        ctx: &Ctx,
        parents: bool,
        kids: &[Arc<TreeNode<K>>],
    ) -> Arc<Self> {
        debug_assert!(kids.len() == 2 || kids.len() == 3);
        let height = kids[0].height + 1;
        debug_assert!(kids.iter().all(|k| k.height + 1 == height), "children must share one height");
        let node = Self::new_blank_any(ctx, parents, height);
        node.fill(kids);
        node
    }

    fn new_blank_any(ctx: &Ctx, parents: bool, height: u32) -> Arc<Self> {
        Arc::new(TreeNode {
            height,
            parents_tracked: parents,
            leaf: None,
            state: Mutex::new(NodeState::default()),
            join_aux: Mutex::new(None),
            queued: Mutex::new(QueuedState::default()),
            marked: parents.then(|| NonBlockingLock::with_class(ctx, crate::runtime::CellClass::Mark)),
            marked2: parents.then(|| NonBlockingLock::with_class(ctx, crate::runtime::CellClass::Mark)),
            probe_count: AtomicU32::new(0),
            probe_count2: AtomicU32::new(0),
            rev_done: Mutex::new(Vec::new()),
        })
    }

    /// Writes children (and derived bounds) into this node.
    pub(crate) fn fill(self: &Arc<Self>, kids: &[Arc<TreeNode<K>>]) {
        debug_assert!(kids.len() == 2 || kids.len() == 3);
        let first = kids[0].first();
        let last = kids[kids.len() - 1].last();
        {
            let mut st = self.state.lock();
            st.left = Some(kids[0].clone());
            st.mid = if kids.len() == 3 { Some(kids[1].clone()) } else { None };
            st.right = Some(kids[kids.len() - 1].clone());
            st.first = first;
            st.last = last;
        }
        if self.parents_tracked {
            for k in kids {
                k.set_parent(self);
            }
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn weight(&self) -> u64 {
        1u64 << self.height
    }

    pub fn is_leaf(&self) -> bool {
        self.leaf.is_some()
    }

    pub fn key(&self) -> Option<&K> {
        self.leaf.as_ref().map(|l| &l.key)
    }

    pub fn payload(&self) -> Option<Payload> {
        self.leaf.as_ref().map(|l| l.payload.load(Ordering::Relaxed))
    }

    pub fn set_payload(&self, p: Payload) {
        self.leaf.as_ref().expect("payload on internal node").payload.store(p, Ordering::Relaxed);
    }

    pub(crate) fn parents_tracked(&self) -> bool {
        self.parents_tracked
    }

    pub(crate) fn set_parent(&self, p: &Arc<TreeNode<K>>) {
        self.state.lock().parent = Arc::downgrade(p);
    }

    pub(crate) fn parent(&self) -> Option<Arc<TreeNode<K>>> {
        self.state.lock().parent.upgrade()
    }

    pub fn first(&self) -> Option<K> {
        self.state.lock().first.clone()
    }

    pub fn last(&self) -> Option<K> {
        self.state.lock().last.clone()
    }

    pub(crate) fn spine(&self) -> u64 {
        self.state.lock().spine
    }

    /// Children in order (2 or 3 entries; empty for leaves and blanks).
    pub(crate) fn kids(&self) -> Vec<Arc<TreeNode<K>>> {
        let st = self.state.lock();
        let mut v = Vec::with_capacity(3);
        if let Some(l) = &st.left {
            v.push(l.clone());
        }
        if let Some(m) = &st.mid {
            v.push(m.clone());
        }
        if let Some(r) = &st.right {
            v.push(r.clone());
        }
        v
    }
}
