//! Synchronization primitives built on RMW cells: non-blocking locks,
//! single-waiter barriers, and reactivation wrappers.

use super::{Cell, CellClass, Ctx, TaskRef};
use futures::future::BoxFuture;
use parking_lot::Mutex;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

/// Non-blocking lock over a boolean cell. `try_lock` never blocks; at most
/// one acquire succeeds between consecutive releases.
pub struct NonBlockingLock {
    held: Cell<bool>,
}

impl NonBlockingLock {
    pub fn new(ctx: &Ctx) -> Self {
        NonBlockingLock { held: Cell::new(ctx, CellClass::LockFlag, false) }
    }

    pub fn with_class(ctx: &Ctx, class: CellClass) -> Self {
        NonBlockingLock { held: Cell::new(ctx, class, false) }
    }

    /// Returns true iff the caller acquired the lock.
    pub async fn try_lock(&self) -> bool {
        !self.held.test_and_set().await
    }

    /// Releases the lock. Unlocking an unheld lock is a contract violation.
    pub async fn unlock(&self) {
        let prior = self.held.write(false).await;
        debug_assert!(prior, "unlock of a lock that is not held");
    }

    /// Reads the flag without acquiring.
    pub async fn is_held(&self) -> bool {
        self.held.read().await
    }
}

struct BarrierState {
    cond: Cell<bool>,
    pass: Cell<bool>,
    waiter: Cell<Option<TaskRef>>,
    // distance/node of the notify step, for the wait->notify DAG edge on the
    // non-suspending path
    notify_edge: Mutex<(u64, Option<u64>)>,
    waits: AtomicU32,
    notifies: AtomicU32,
}

/// Single-waiter single-notifier barrier. `wait` returns only after `notify`
/// has executed; a `notify` that precedes the `wait` lets it pass without
/// suspension.
#[derive(Clone)]
pub struct Barrier {
    s: Arc<BarrierState>,
}

impl Barrier {
    pub fn new(ctx: &Ctx) -> Self {
        Barrier {
            s: Arc::new(BarrierState {
                cond: Cell::new(ctx, CellClass::BarrierFlag, false),
                pass: Cell::new(ctx, CellClass::BarrierFlag, false),
                waiter: Cell::new(ctx, CellClass::BarrierFlag, None),
                notify_edge: Mutex::new((0, None)),
                waits: AtomicU32::new(0),
                notifies: AtomicU32::new(0),
            }),
        }
    }

    pub async fn wait(&self, ctx: &Ctx) {
        let w = self.s.waits.fetch_add(1, Ordering::Relaxed);
        debug_assert_eq!(w, 0, "barrier waited on by two tasks at once");
        self.s.waiter.write(Some(ctx.self_ref())).await;
        if !self.s.pass.test_and_set().await {
            ctx.suspend().await;
        } else {
            let (d, n) = *self.s.notify_edge.lock();
            ctx.order_after(d, n);
        }
        self.s.waits.fetch_sub(1, Ordering::Relaxed);
    }

    pub async fn notify(&self, ctx: &Ctx) {
        let k = self.s.notifies.fetch_add(1, Ordering::Relaxed);
        debug_assert_eq!(k, 0, "barrier notified by more than one task");
        self.s.cond.write(true).await;
        *self.s.notify_edge.lock() = (ctx.current_dist(), ctx.current_node());
        if self.s.pass.test_and_set().await {
            let t = self.s.waiter.read().await.expect("pass set but no waiter recorded");
            ctx.resume(&t).await;
        }
    }

    /// Returns the condition flag (true once `notify` has executed its write).
    pub async fn notified(&self) -> bool {
        self.s.cond.read().await
    }
}

struct ReactState {
    count: Cell<i64>,
    body: Box<dyn Fn(Ctx) -> BoxFuture<'static, ()> + Send + Sync>,
    // model-level dependency edges: a run starts no earlier than the last
    // reactivate call and the end of the previous run
    edge: Mutex<ReactEdge>,
}

#[derive(Default)]
struct ReactEdge {
    react_dist: u64,
    react_node: Option<u64>,
    run_end_dist: u64,
    run_end_node: Option<u64>,
}

/// Reactivation wrapper around an inputless procedure: runs never overlap,
/// every reactivation is followed by a complete run that starts no earlier
/// than it, and the number of runs never exceeds the number of reactivations.
#[derive(Clone)]
pub struct Reactivation {
    s: Arc<ReactState>,
}

impl Reactivation {
    pub fn new<F>(ctx: &Ctx, body: F) -> Self
    where
        F: Fn(Ctx) -> BoxFuture<'static, ()> + Send + Sync + 'static,
    {
        Reactivation {
            s: Arc::new(ReactState {
                count: Cell::new(ctx, CellClass::ReactCounter, 0),
                body: Box::new(body),
                edge: Mutex::new(ReactEdge::default()),
            }),
        }
    }

    pub async fn reactivate(&self, ctx: &Ctx) {
        self.record_react_edge(ctx);
        let prior = self.s.count.fetch_add(1).await;
        // the FAA step above is the reactivate instruction proper
        self.record_react_edge(ctx);
        if prior == 0 {
            let state = self.s.clone();
            let ctx2 = ctx.clone();
            let _runner = ctx
                .fork(async move {
                    loop {
                        state.count.write(1).await;
                        {
                            let e = state.edge.lock();
                            ctx2.order_after(e.react_dist, e.react_node);
                            ctx2.order_after(e.run_end_dist, e.run_end_node);
                        }
                        (state.body)(ctx2.clone()).await;
                        {
                            let mut e = state.edge.lock();
                            e.run_end_dist = ctx2.current_dist();
                            e.run_end_node = ctx2.current_node();
                        }
                        if self_decrement(&state).await <= 1 {
                            break;
                        }
                    }
                })
                .await;
        }
    }

    fn record_react_edge(&self, ctx: &Ctx) {
        let mut e = self.s.edge.lock();
        let d = ctx.current_dist();
        if d > e.react_dist {
            e.react_dist = d;
            e.react_node = ctx.current_node();
        }
    }
}

async fn self_decrement(state: &Arc<ReactState>) -> i64 {
    state.count.fetch_add(-1).await
}
