//! Dedicated queue: a non-blocking FIFO over a singly chained node sequence,
//! correct under at most one concurrent pusher plus one concurrent popper.
//! Every pointer in the chain is an RMW cell, so the recorded backend
//! accounts its contention (at most two parties touch any one cell).

use crate::runtime::{Cell, CellClass, Ctx};
use std::sync::Arc;

struct ChainNode<V> {
    value: Cell<Option<V>>,
    next: Cell<Option<Arc<ChainNode<V>>>>,
}

impl<V: Clone + Send + Sync + 'static> ChainNode<V> {
    fn new(ctx: &Ctx) -> Arc<Self> {
        Arc::new(ChainNode {
            value: Cell::new(ctx, CellClass::Queue, None),
            next: Cell::new(ctx, CellClass::Queue, None),
        })
    }
}

/// Single-producer single-consumer FIFO of shared references.
pub struct DedicatedQueue<V> {
    ctx: Ctx,
    head: Cell<Arc<ChainNode<V>>>,
    tail: Cell<Arc<ChainNode<V>>>,
}

impl<V> Clone for DedicatedQueue<V> {
    fn clone(&self) -> Self {
        DedicatedQueue { ctx: self.ctx.clone(), head: self.head.clone(), tail: self.tail.clone() }
    }
}

impl<V: Clone + Send + Sync + 'static> DedicatedQueue<V> {
    pub fn new(ctx: &Ctx) -> Self {
        let sentinel = ChainNode::new(ctx);
        DedicatedQueue {
            ctx: ctx.clone(),
            head: Cell::new(ctx, CellClass::Queue, sentinel.clone()),
            tail: Cell::new(ctx, CellClass::Queue, sentinel),
        }
    }

    /// Appends `x`. Must not race with another push.
    pub async fn push(&self, x: V) {
        let w = ChainNode::new(&self.ctx);
        let t = self.tail.read().await;
        t.value.write(Some(x)).await;
        t.next.write(Some(w.clone())).await;
        self.tail.write(w).await;
    }

    /// Removes and returns the front element, or `None` if the queue is empty
    /// at the linearization point (the read of `head.next`). Must not race
    /// with another pop.
    pub async fn pop(&self) -> Option<V> {
        let h = self.head.read().await;
        let next = h.next.read().await?;
        self.head.write(next).await;
        let v = h.value.read().await;
        debug_assert!(v.is_some(), "chain node published without a value");
        v
    }

    /// Out-of-band emptiness check for validators; not a queue operation and
    /// not part of the simulated protocol.
    pub fn debug_is_empty(&self) -> bool {
        self.head.peek().next.peek().is_none()
    }
}
