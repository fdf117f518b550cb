//! Task-execution runtime used by every batch operation in this crate.
//!
//! Programs are written as futures against a [`Ctx`] handle that exposes the
//! multithreading primitives (fork/join/suspend/resume), atomic RMW [`Cell`]s,
//! and the synchronization objects built on them ([`NonBlockingLock`],
//! [`Barrier`], [`Reactivation`]). Two interchangeable backends execute them:
//!
//! * [`RecordedRt`] — a deterministic single-driver simulator of a greedy
//!   scheduler. Every primitive call is one weighted step of an execution DAG;
//!   RMW requests on a cell are FIFO-queued and serviced one per simulated
//!   time step, so a request's weight is its queue rank at arrival. The run
//!   yields an [`ExecutionRecord`] with work, span, and per-cell contention.
//! * [`RealRt`] — a plain thread pool for wall-clock measurements. Cells are
//!   ordinary mutex-protected values and primitives complete immediately.

mod cell;
mod metrics;
mod real;
mod record;
mod recorded;
mod sync;

pub use cell::{Cell, CellClass};
pub use metrics::{Metrics, MetricsSnapshot};
pub use real::RealRt;
pub use record::{CellTraceEntry, ClassStats, DagLog, DagNode, ExecutionRecord};
pub use recorded::RecordedRt;
pub use sync::{Barrier, NonBlockingLock, Reactivation};

use futures::future::BoxFuture;
use parking_lot::{Condvar, Mutex};
use std::cell::RefCell;
use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::task::{Context, Poll};

use real::RealTask;
use recorded::Sim;

/// Default step budget for recorded runs; exceeding it aborts the run with a
/// diagnostic, which guards against livelocked protocols.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

#[derive(Clone)]
pub(crate) enum BackendHandle {
    Recorded(Arc<Sim>),
    Real(Arc<real::Pool>),
}

/// Handle through which a running task reaches its backend.
///
/// Cloning is cheap; every forked task receives (a clone of) the same `Ctx`.
#[derive(Clone)]
pub struct Ctx {
    pub(crate) backend: BackendHandle,
    metrics: Arc<Metrics>,
}

/// Opaque, clonable identity of a spawned task, usable as a resume target.
#[derive(Clone)]
pub enum TaskRef {
    Recorded(u32),
    Real(Arc<RealTask>),
}

impl std::fmt::Debug for TaskRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskRef::Recorded(id) => write!(f, "TaskRef::Recorded({id})"),
            TaskRef::Real(_) => write!(f, "TaskRef::Real"),
        }
    }
}

thread_local! {
    static CURRENT: RefCell<Option<TaskRef>> = const { RefCell::new(None) };
}

pub(crate) fn current_task() -> TaskRef {
    CURRENT.with(|c| c.borrow().clone().expect("runtime primitive used outside a running task"))
}

pub(crate) fn set_current(t: Option<TaskRef>) {
    CURRENT.with(|c| *c.borrow_mut() = t);
}

/// Shared result slot between a task and the handle joining it.
pub(crate) struct JoinShared<T> {
    pub(crate) m: Mutex<JoinInner<T>>,
    pub(crate) cv: Condvar,
}

pub(crate) struct JoinInner<T> {
    pub(crate) result: Option<T>,
    pub(crate) done: bool,
    pub(crate) done_dist: u64,
    pub(crate) done_node: Option<u64>,
    pub(crate) waiter: Option<TaskRef>,
    pub(crate) waker: Option<std::task::Waker>,
}

impl<T> JoinShared<T> {
    pub(crate) fn new() -> Arc<Self> {
        Arc::new(JoinShared {
            m: Mutex::new(JoinInner {
                result: None,
                done: false,
                done_dist: 0,
                done_node: None,
                waiter: None,
                waker: None,
            }),
            cv: Condvar::new(),
        })
    }
}

/// Handle to a forked task. `join` consumes the handle, so a task is joinable
/// exactly once by construction.
pub struct TaskHandle<T> {
    shared: Arc<JoinShared<T>>,
    task: TaskRef,
}

impl<T> TaskHandle<T> {
    /// Identity of the underlying task (usable with [`Ctx::resume`]).
    pub fn task_ref(&self) -> TaskRef {
        self.task.clone()
    }
}

impl<T: Send + 'static> TaskHandle<T> {
    /// Waits until the task's final step has executed and returns its result.
    pub async fn join(self, ctx: &Ctx) -> T {
        JoinFut { ctx: ctx.clone(), shared: self.shared, registered: false }.await
    }
}

impl Ctx {
    pub(crate) fn new(backend: BackendHandle, metrics: Arc<Metrics>) -> Self {
        Ctx { backend, metrics }
    }

    /// Instrumentation counters shared by every task of this runtime.
    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.metrics
    }

    /// Forks `fut` as a new task and returns a handle joinable exactly once.
    pub async fn fork<T, F>(&self, fut: F) -> TaskHandle<T>
    where
        T: Send + 'static,
        F: Future<Output = T> + Send + 'static,
    {
        let shared = JoinShared::new();
        let sh = shared.clone();
        let wrapped: BoxFuture<'static, ()> = Box::pin(async move {
            let out = fut.await;
            let mut g = sh.m.lock();
            g.result = Some(out);
            // done flag, dist and waiter wakeup are the backend's job.
            drop(g);
        });
        let task = ForkFut { ctx: self.clone(), wrapped: Some((wrapped, ForkDone::new(&shared))), registered: false }.await;
        TaskHandle { shared, task }
    }

    /// One unit-weight step; charges sequential work the simulator cannot
    /// otherwise see (loop iterations between primitive calls).
    pub async fn tick(&self) {
        TickFut { ctx: self.clone(), registered: false }.await
    }

    /// Reference to the currently running task.
    pub fn self_ref(&self) -> TaskRef {
        current_task()
    }

    /// Suspends the current task until another task resumes it. A resume that
    /// races ahead of the suspension is not lost.
    pub async fn suspend(&self) {
        SuspendFut { ctx: self.clone(), registered: false }.await
    }

    /// Resumes a (possibly about-to-be) suspended task.
    pub async fn resume(&self, t: &TaskRef) {
        ResumeFut { ctx: self.clone(), target: t.clone(), registered: false }.await
    }

    /// Current simulated time (recorded backend; 0 otherwise).
    pub fn now(&self) -> u64 {
        match &self.backend {
            BackendHandle::Recorded(sim) => sim.now(),
            BackendHandle::Real(_) => 0,
        }
    }

    /// Weighted DAG distance of the current task's latest executed step
    /// (recorded backend; 0 otherwise).
    pub fn current_dist(&self) -> u64 {
        match &self.backend {
            BackendHandle::Recorded(sim) => match current_task() {
                TaskRef::Recorded(id) => sim.task_dist(id),
                TaskRef::Real(_) => 0,
            },
            BackendHandle::Real(_) => 0,
        }
    }

    /// Maximum weighted path seen so far in this run (recorded backend).
    pub fn span_so_far(&self) -> u64 {
        match &self.backend {
            BackendHandle::Recorded(sim) => sim.span_so_far(),
            BackendHandle::Real(_) => 0,
        }
    }

    /// Declares that the current task's next step depends on a DAG node with
    /// the given distance/id. This records the model-level dependency edges of
    /// barriers and reactivation runs that the cell protocol alone does not
    /// capture.
    pub fn order_after(&self, dist: u64, node: Option<u64>) {
        if let BackendHandle::Recorded(sim) = &self.backend {
            if let TaskRef::Recorded(id) = current_task() {
                sim.order_after(id, dist, node);
            }
        }
    }

    /// Id of the DAG node currently being executed (recorded backend).
    pub fn current_node(&self) -> Option<u64> {
        match &self.backend {
            BackendHandle::Recorded(sim) => match current_task() {
                TaskRef::Recorded(id) => Some(sim.task_node(id)),
                TaskRef::Real(_) => None,
            },
            BackendHandle::Real(_) => None,
        }
    }
}

/// Callback the backend invokes when a forked task's body has finished:
/// publishes completion (and, on the recorded backend, the final step's
/// dist/node) and wakes any waiting joiner.
pub(crate) struct ForkDone {
    f: Box<dyn Fn(u64, Option<u64>) -> Option<TaskRef> + Send + Sync>,
}

impl ForkDone {
    fn new<T: Send + 'static>(shared: &Arc<JoinShared<T>>) -> Self {
        let sh = shared.clone();
        ForkDone {
            f: Box::new(move |dist, node| {
                let mut g = sh.m.lock();
                g.done = true;
                g.done_dist = dist;
                g.done_node = node;
                if let Some(w) = g.waker.take() {
                    w.wake();
                }
                sh.cv.notify_all();
                g.waiter.take()
            }),
        }
    }

    pub(crate) fn complete(&self, dist: u64, node: Option<u64>) -> Option<TaskRef> {
        (self.f)(dist, node)
    }
}

// ---------------------------------------------------------------------------
// Primitive futures. On the recorded backend each follows the two-phase
// protocol: the first poll registers the step and returns Pending; the engine
// later schedules the task, and the second poll performs the effect. On the
// real backend effects are immediate where possible.
// ---------------------------------------------------------------------------

struct ForkFut {
    ctx: Ctx,
    wrapped: Option<(BoxFuture<'static, ()>, ForkDone)>,
    registered: bool,
}

impl Future for ForkFut {
    type Output = TaskRef;

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<TaskRef> {
        let this = &mut *self;
        match &this.ctx.backend {
            BackendHandle::Recorded(sim) => {
                if !this.registered {
                    this.registered = true;
                    sim.schedule_self_next();
                    Poll::Pending
                } else {
                    let (fut, done) = this.wrapped.take().expect("fork polled after completion");
                    Poll::Ready(TaskRef::Recorded(sim.spawn(fut, done)))
                }
            }
            BackendHandle::Real(pool) => {
                let _ = cx;
                let (fut, done) = this.wrapped.take().expect("fork polled after completion");
                Poll::Ready(TaskRef::Real(pool.spawn(fut, done)))
            }
        }
    }
}

struct JoinFut<T> {
    ctx: Ctx,
    shared: Arc<JoinShared<T>>,
    registered: bool,
}

impl<T: Send + 'static> Future for JoinFut<T> {
    type Output = T;

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<T> {
        let this = &mut *self;
        match &this.ctx.backend {
            BackendHandle::Recorded(sim) => {
                if !this.registered {
                    this.registered = true;
                    let me = match current_task() {
                        TaskRef::Recorded(id) => id,
                        TaskRef::Real(_) => unreachable!(),
                    };
                    let mut g = this.shared.m.lock();
                    if g.done {
                        sim.order_after(me, g.done_dist, g.done_node);
                        drop(g);
                        sim.schedule_self_next();
                    } else {
                        assert!(g.waiter.is_none(), "task joined twice");
                        g.waiter = Some(TaskRef::Recorded(me));
                        sim.mark_join_wait(me);
                    }
                    Poll::Pending
                } else {
                    let mut g = this.shared.m.lock();
                    let out = g.result.take().expect("task joined twice");
                    Poll::Ready(out)
                }
            }
            BackendHandle::Real(_) => {
                let mut g = this.shared.m.lock();
                if g.done {
                    Poll::Ready(g.result.take().expect("task joined twice"))
                } else {
                    g.waker = Some(cx.waker().clone());
                    Poll::Pending
                }
            }
        }
    }
}

struct TickFut {
    ctx: Ctx,
    registered: bool,
}

impl Future for TickFut {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        let this = &mut *self;
        match &this.ctx.backend {
            BackendHandle::Recorded(sim) => {
                if !this.registered {
                    this.registered = true;
                    sim.schedule_self_next();
                    Poll::Pending
                } else {
                    Poll::Ready(())
                }
            }
            BackendHandle::Real(_) => Poll::Ready(()),
        }
    }
}

struct SuspendFut {
    ctx: Ctx,
    registered: bool,
}

impl Future for SuspendFut {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<()> {
        let this = &mut *self;
        match &this.ctx.backend {
            BackendHandle::Recorded(sim) => {
                if !this.registered {
                    this.registered = true;
                    sim.park_self();
                    Poll::Pending
                } else {
                    Poll::Ready(())
                }
            }
            BackendHandle::Real(_) => {
                let me = match current_task() {
                    TaskRef::Real(t) => t,
                    TaskRef::Recorded(_) => unreachable!(),
                };
                if me.try_consume_permit(cx.waker()) {
                    Poll::Ready(())
                } else {
                    Poll::Pending
                }
            }
        }
    }
}

struct ResumeFut {
    ctx: Ctx,
    target: TaskRef,
    registered: bool,
}

impl Future for ResumeFut {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        let this = &mut *self;
        match &this.ctx.backend {
            BackendHandle::Recorded(sim) => {
                if !this.registered {
                    this.registered = true;
                    sim.schedule_self_next();
                    Poll::Pending
                } else {
                    match &this.target {
                        TaskRef::Recorded(id) => sim.grant_permit(*id),
                        TaskRef::Real(_) => panic!("resume target from a different backend"),
                    }
                    Poll::Ready(())
                }
            }
            BackendHandle::Real(_) => {
                match &this.target {
                    TaskRef::Real(t) => t.grant_permit(),
                    TaskRef::Recorded(_) => panic!("resume target from a different backend"),
                }
                Poll::Ready(())
            }
        }
    }
}
