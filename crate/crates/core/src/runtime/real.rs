//! Real parallel backend: a fixed pool of worker threads polling boxed task
//! futures. No step accounting; used for throughput/wall-clock measurements.

use super::{set_current, BackendHandle, Ctx, ForkDone, Metrics, TaskRef};
use futures::future::BoxFuture;
use parking_lot::{Condvar, Mutex};
use std::collections::VecDeque;
use std::panic::AssertUnwindSafe;
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering};
use std::sync::Arc;
use std::task::{Context, Poll, Wake, Waker};

const IDLE: u8 = 0;
const QUEUED: u8 = 1;
const RUNNING: u8 = 2;
const RUNNING_NOTIFIED: u8 = 3;

pub struct RealTask {
    fut: Mutex<Option<BoxFuture<'static, ()>>>,
    done: Mutex<Option<ForkDone>>,
    state: AtomicU8,
    park: Mutex<Park>,
    pool: Mutex<Option<Arc<Pool>>>,
}

#[derive(Default)]
struct Park {
    permits: u32,
    waker: Option<Waker>,
}

impl RealTask {
    /// Consumes a pending resume permit, or registers the waker and parks.
    pub(crate) fn try_consume_permit(&self, waker: &Waker) -> bool {
        let mut p = self.park.lock();
        if p.permits > 0 {
            p.permits -= 1;
            true
        } else {
            p.waker = Some(waker.clone());
            false
        }
    }

    pub(crate) fn grant_permit(&self) {
        let waker = {
            let mut p = self.park.lock();
            p.permits += 1;
            p.waker.take()
        };
        if let Some(w) = waker {
            w.wake();
        }
    }
}

impl Wake for RealTask {
    fn wake(self: Arc<Self>) {
        loop {
            let s = self.state.load(Ordering::Acquire);
            match s {
                IDLE => {
                    if self.state.compare_exchange(IDLE, QUEUED, Ordering::AcqRel, Ordering::Acquire).is_ok() {
                        let pool = self.pool.lock().clone();
                        if let Some(pool) = pool {
                            pool.enqueue(self.clone());
                        }
                        return;
                    }
                }
                RUNNING => {
                    if self.state.compare_exchange(RUNNING, RUNNING_NOTIFIED, Ordering::AcqRel, Ordering::Acquire).is_ok() {
                        return;
                    }
                }
                _ => return,
            }
        }
    }
}

pub struct Pool {
    queue: Mutex<VecDeque<Arc<RealTask>>>,
    cv: Condvar,
    shutdown: AtomicBool,
    panic_msg: Mutex<Option<String>>,
    root_done: Mutex<bool>,
    root_cv: Condvar,
}

impl Pool {
    fn enqueue(&self, t: Arc<RealTask>) {
        self.queue.lock().push_back(t);
        self.cv.notify_one();
    }

    pub(crate) fn spawn(self: &Arc<Self>, fut: BoxFuture<'static, ()>, done: ForkDone) -> Arc<RealTask> {
        let task = Arc::new(RealTask {
            fut: Mutex::new(Some(fut)),
            done: Mutex::new(Some(done)),
            state: AtomicU8::new(QUEUED),
            park: Mutex::new(Park::default()),
            pool: Mutex::new(Some(self.clone())),
        });
        self.enqueue(task.clone());
        task
    }

    fn worker(self: Arc<Self>) {
        loop {
            let task = {
                let mut q = self.queue.lock();
                loop {
                    if self.shutdown.load(Ordering::Acquire) {
                        return;
                    }
                    if let Some(t) = q.pop_front() {
                        break t;
                    }
                    self.cv.wait(&mut q);
                }
            };
            self.poll_task(task);
        }
    }

    fn poll_task(self: &Arc<Self>, task: Arc<RealTask>) {
        task.state.store(RUNNING, Ordering::Release);
        let waker = Waker::from(task.clone());
        let mut cx = Context::from_waker(&waker);
        let mut guard = task.fut.lock();
        let Some(fut) = guard.as_mut() else { return };
        set_current(Some(TaskRef::Real(task.clone())));
        let poll = std::panic::catch_unwind(AssertUnwindSafe(|| fut.as_mut().poll(&mut cx)));
        set_current(None);
        match poll {
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "task panicked".to_string());
                *guard = None;
                drop(guard);
                *self.panic_msg.lock() = Some(msg);
                *self.root_done.lock() = true;
                self.root_cv.notify_all();
            }
            Ok(Poll::Ready(())) => {
                *guard = None;
                drop(guard);
                let done = task.done.lock().take();
                if let Some(done) = done {
                    done.complete(0, None);
                }
                *task.pool.lock() = None;
            }
            Ok(Poll::Pending) => {
                drop(guard);
                loop {
                    let s = task.state.load(Ordering::Acquire);
                    if s == RUNNING_NOTIFIED {
                        if task
                            .state
                            .compare_exchange(RUNNING_NOTIFIED, QUEUED, Ordering::AcqRel, Ordering::Acquire)
                            .is_ok()
                        {
                            self.enqueue(task.clone());
                            break;
                        }
                    } else if task
                        .state
                        .compare_exchange(RUNNING, IDLE, Ordering::AcqRel, Ordering::Acquire)
                        .is_ok()
                    {
                        break;
                    }
                }
            }
        }
    }
}

/// Real parallel runtime over `threads` OS worker threads.
pub struct RealRt {
    pool: Arc<Pool>,
    metrics: Arc<Metrics>,
    handles: Vec<std::thread::JoinHandle<()>>,
}

impl RealRt {
    pub fn new(threads: usize) -> Self {
        assert!(threads >= 1);
        let pool = Arc::new(Pool {
            queue: Mutex::new(VecDeque::new()),
            cv: Condvar::new(),
            shutdown: AtomicBool::new(false),
            panic_msg: Mutex::new(None),
            root_done: Mutex::new(false),
            root_cv: Condvar::new(),
        });
        let handles = (0..threads)
            .map(|_| {
                let p = pool.clone();
                std::thread::spawn(move || p.worker())
            })
            .collect();
        RealRt { pool, metrics: Arc::new(Metrics::default()), handles }
    }

    pub fn ctx(&self) -> Ctx {
        Ctx::new(BackendHandle::Real(self.pool.clone()), self.metrics.clone())
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.metrics
    }

    /// Runs `f` to completion on the pool and returns its value.
    pub fn run<T, F, Fut>(&self, f: F) -> T
    where
        T: Send + 'static,
        F: FnOnce(Ctx) -> Fut,
        Fut: std::future::Future<Output = T> + Send + 'static,
    {
        let ctx = self.ctx();
        let result: Arc<Mutex<Option<T>>> = Arc::new(Mutex::new(None));
        let res2 = result.clone();
        let pool = self.pool.clone();
        *pool.root_done.lock() = false;
        let fut = f(ctx);
        let p2 = pool.clone();
        let root: BoxFuture<'static, ()> = Box::pin(async move {
            let out = fut.await;
            *res2.lock() = Some(out);
            *p2.root_done.lock() = true;
            p2.root_cv.notify_all();
        });
        let done = ForkDone::new(&JoinSharedDummy::new());
        pool.spawn(root, done);
        let mut g = pool.root_done.lock();
        while !*g {
            pool.root_cv.wait(&mut g);
        }
        drop(g);
        if let Some(msg) = pool.panic_msg.lock().take() {
            panic!("real backend task panicked: {msg}");
        }
        let out = result.lock().take().expect("root produced no result");
        out
    }
}

impl Drop for RealRt {
    fn drop(&mut self) {
        self.pool.shutdown.store(true, Ordering::Release);
        self.pool.cv.notify_all();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

// ForkDone demands a JoinShared; the root task's completion is tracked by the
// pool condvar instead, so give it a throwaway slot.
struct JoinSharedDummy;

impl JoinSharedDummy {
    fn new() -> Arc<super::JoinShared<()>> {
        super::JoinShared::new()
    }
}
