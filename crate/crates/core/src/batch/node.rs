//! Batch tree nodes and their per-operation auxiliary state.

use super::DedicatedQueue;
use crate::runtime::{Barrier, Reactivation};
use crate::BatchItem;
use parking_lot::Mutex;
use std::sync::Arc;
use std::sync::OnceLock;

/// Per-operation pipeline state, allocated in an operation's preprocessing
/// phase and released when it finishes.
pub struct Aux<T> {
    /// number of filtered items in this subtree
    pub count: usize,
    /// half-open filtered-rank interval [rstart, rend)
    pub rstart: usize,
    pub rend: usize,
    pub q1: Option<DedicatedQueue<Arc<BatchNode<T>>>>,
    pub q2: Option<DedicatedQueue<Arc<BatchNode<T>>>>,
    pub pushdown: Option<Reactivation>,
    pub done: Option<Barrier>,
}

impl<T> Default for Aux<T> {
    fn default() -> Self {
        Aux { count: 0, rstart: 0, rend: 0, q1: None, q2: None, pushdown: None, done: None }
    }
}

/// One node of a batch tree. Items live only at leaves; `first`/`last` are
/// the first and last item of the subtree (set once the subtree's items are
/// known — blank output trees fill them during collation).
pub struct BatchNode<T> {
    height: u32,
    size: usize,
    children: Option<(Arc<BatchNode<T>>, Arc<BatchNode<T>>)>,
    item: OnceLock<T>,
    bounds: OnceLock<(T, T)>,
    pub(crate) aux: Mutex<Option<Aux<T>>>,
}

impl<T: BatchItem> BatchNode<T> {
    pub fn leaf(item: T) -> Arc<Self> {
        let node = BatchNode {
            height: 0,
            size: 1,
            children: None,
            item: OnceLock::new(),
            bounds: OnceLock::new(),
            aux: Mutex::new(None),
        };
        node.item.set(item.clone()).ok().expect("fresh leaf");
        node.bounds.set((item.clone(), item)).ok().expect("fresh leaf");
        Arc::new(node)
    }

    /// A leaf with no item yet (blank output trees, dummy markers).
    pub fn blank_leaf() -> Arc<Self> {
        Arc::new(BatchNode {
            height: 0,
            size: 1,
            children: None,
            item: OnceLock::new(),
            bounds: OnceLock::new(),
            aux: Mutex::new(None),
        })
    }

    /// Internal node over two subtrees; derives height/size and, when both
    /// children know their bounds, first/last.
    pub fn internal(left: Arc<Self>, right: Arc<Self>) -> Arc<Self> {
        let node = BatchNode {
            height: 1 + left.height.max(right.height),
            size: left.size + right.size,
            children: None,
            item: OnceLock::new(),
            bounds: OnceLock::new(),
            aux: Mutex::new(None),
        };
        if let (Some((f, _)), Some((_, l))) = (left.bounds.get(), right.bounds.get()) {
            node.bounds.set((f.clone(), l.clone())).ok().expect("fresh node");
        }
        let mut node = node;
        node.children = Some((left, right));
        Arc::new(node)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn children(&self) -> Option<(&Arc<Self>, &Arc<Self>)> {
        self.children.as_ref().map(|(l, r)| (l, r))
    }

    pub fn children_cloned(&self) -> Option<(Arc<Self>, Arc<Self>)> {
        self.children.clone()
    }

    pub fn item(&self) -> Option<&T> {
        self.item.get()
    }

    /// Writes the item of a blank leaf (push-down phase of filtering).
    pub fn set_item(&self, item: T) {
        self.item.set(item).ok().expect("item already set");
    }

    pub fn bounds(&self) -> Option<(&T, &T)> {
        self.bounds.get().map(|(f, l)| (f, l))
    }

    pub fn first(&self) -> &T {
        &self.bounds.get().expect("bounds not computed yet").0
    }

    pub fn last(&self) -> &T {
        &self.bounds.get().expect("bounds not computed yet").1
    }

    /// Records first/last once they are known (collating phase).
    pub fn set_bounds(&self, first: T, last: T) {
        self.bounds.set((first, last)).ok().expect("bounds already set");
    }

    pub(crate) fn with_aux<R>(&self, f: impl FnOnce(&mut Aux<T>) -> R) -> R {
        let mut g = self.aux.lock();
        f(g.as_mut().expect("operation state not initialized on this node"))
    }

    /// Like `with_aux` but tolerates already-released state.
    pub(crate) fn try_aux<R>(&self, f: impl FnOnce(&mut Aux<T>) -> R) -> Option<R> {
        let mut g = self.aux.lock();
        g.as_mut().map(f)
    }

    pub(crate) fn clear_aux(&self) {
        *self.aux.lock() = None;
    }
}
