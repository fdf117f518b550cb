//! Atomic read-modify-write cells.
//!
//! All cross-task shared mutation in this crate flows through `Cell`s. On the
//! recorded backend every RMW is FIFO-queued per cell and serviced one per
//! simulated time step, so its DAG weight equals its queue rank at arrival;
//! a cell's observed value sequence is the linearization in service order.

use super::recorded::Sim;
use super::{BackendHandle, Ctx};
use parking_lot::Mutex;
use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::task::{Context, Poll};

/// Accounting class of a cell, used to group contention statistics.
#[derive(Clone, Copy, PartialEq, Eq, Debug, PartialOrd, Ord)]
#[repr(u8)]
pub enum CellClass {
    /// Head/tail/link cells of dedicated (SPSC) queues.
    Queue = 0,
    /// `marked` flags probed by reverse-indexing traces.
    Mark = 1,
    /// Reactivation-wrapper counters.
    ReactCounter = 2,
    /// Barrier condition and pass flags.
    BarrierFlag = 3,
    /// Non-blocking lock flags.
    LockFlag = 4,
    /// Everything else.
    Plain = 5,
}

struct CellInner<T> {
    value: Mutex<T>,
    id: u32,
    sim: Option<Arc<Sim>>,
}

/// A shared memory cell supporting atomic read/write/test-and-set/
/// fetch-and-add/compare-and-swap.
pub struct Cell<T> {
    inner: Arc<CellInner<T>>,
}

impl<T> Clone for Cell<T> {
    fn clone(&self) -> Self {
        Cell { inner: self.inner.clone() }
    }
}

impl<T: Clone + Send + 'static> Cell<T> {
    pub fn new(ctx: &Ctx, class: CellClass, value: T) -> Self {
        let (id, sim) = match &ctx.backend {
            BackendHandle::Recorded(sim) => (sim.new_cell(class), Some(sim.clone())),
            BackendHandle::Real(_) => (0, None),
        };
        Cell { inner: Arc::new(CellInner { value: Mutex::new(value), id, sim }) }
    }

    async fn rmw<R: Send>(&self, op: impl FnOnce(&mut T) -> R + Send) -> R {
        RmwFut { cell: self.inner.clone(), op: Some(op), registered: false }.await
    }

    /// Atomic read; returns the value at the service point.
    pub async fn read(&self) -> T {
        self.rmw(|v| v.clone()).await
    }

    /// Out-of-band read for validators and debug dumps; bypasses the queued
    /// protocol and costs nothing in the simulated model.
    pub fn peek(&self) -> T {
        self.inner.value.lock().clone()
    }

    /// Atomic write; returns the prior value.
    pub async fn write(&self, new: T) -> T {
        self.rmw(move |v| std::mem::replace(v, new)).await
    }
}

impl<T: Clone + Send + PartialEq + 'static> Cell<T> {
    /// Atomic compare-and-swap; returns the prior value.
    pub async fn compare_and_swap(&self, expect: T, new: T) -> T {
        self.rmw(move |v| {
            let prior = v.clone();
            if prior == expect {
                *v = new;
            }
            prior
        })
        .await
    }
}

impl Cell<i64> {
    /// Atomic fetch-and-add; returns the prior value.
    pub async fn fetch_add(&self, k: i64) -> i64 {
        self.rmw(move |v| {
            let prior = *v;
            *v += k;
            prior
        })
        .await
    }
}

impl Cell<bool> {
    /// Atomic test-and-set; returns the prior value.
    pub async fn test_and_set(&self) -> bool {
        self.rmw(|v| std::mem::replace(v, true)).await
    }
}

struct RmwFut<T, F> {
    cell: Arc<CellInner<T>>,
    op: Option<F>,
    registered: bool,
}

impl<T, F> Unpin for RmwFut<T, F> {}

impl<T, F, R> Future for RmwFut<T, F>
where
    F: FnOnce(&mut T) -> R + Send,
    R: Send,
    T: Send,
{
    type Output = R;

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<R> {
        let this = &mut *self;
        match &this.cell.sim {
            Some(sim) => {
                if !this.registered {
                    this.registered = true;
                    sim.enqueue_rmw(this.cell.id);
                    Poll::Pending
                } else {
                    // woken, hence serviced: apply in service order
                    let op = this.op.take().expect("rmw polled after completion");
                    let mut v = this.cell.value.lock();
                    Poll::Ready(op(&mut v))
                }
            }
            None => {
                let op = this.op.take().expect("rmw polled after completion");
                let mut v = this.cell.value.lock();
                Poll::Ready(op(&mut v))
            }
        }
    }
}
