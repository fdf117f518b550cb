//! Deterministic recorded backend: a single driver thread simulates a greedy
//! scheduler with seeded tie-breaking over the ready set, services one queued
//! RMW request per memory cell per time step, and accumulates the execution
//! DAG's work and span incrementally.

use super::record::{CellTraceEntry, ClassStats, DagLog, DagNode, ExecutionRecord};
use super::{current_task, set_current, BackendHandle, CellClass, Ctx, ForkDone, Metrics, TaskRef, DEFAULT_STEP_BUDGET};
use futures::future::BoxFuture;
use futures::task::noop_waker;
use parking_lot::Mutex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::future::Future;
use std::sync::Arc;
use std::task::{Context, Poll};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Phase {
    Ready,
    Running,
    CellWait,
    JoinWait,
    Parked,
    Done,
}

struct TaskSlot {
    fut: Option<BoxFuture<'static, ()>>,
    done: Option<ForkDone>,
    phase: Phase,
    dist: u64,
    last_node: u64,
    next_weight: u64,
    extra_dep: u64,
    extra_parent: Option<u64>,
    spawn_parent: Option<u64>,
    permits: u32,
    permit_dist: u64,
    permit_node: Option<u64>,
}

#[derive(Clone, Copy)]
struct Req {
    task: u32,
    arrival: u64,
}

struct CellSim {
    class: CellClass,
    // inline space for the common uncontended / two-party cases
    q0: Option<Req>,
    q1: Option<Req>,
    spill: Vec<Req>,
    qlen: u32,
    max_qlen: u32,
    total: u64,
    in_active: bool,
}

impl CellSim {
    fn push(&mut self, r: Req) {
        match self.qlen {
            0 => self.q0 = Some(r),
            1 => self.q1 = Some(r),
            _ => self.spill.push(r),
        }
        self.qlen += 1;
        self.total += 1;
        self.max_qlen = self.max_qlen.max(self.qlen);
    }

    fn pop(&mut self) -> Option<Req> {
        let head = self.q0.take()?;
        self.q0 = self.q1.take();
        if !self.spill.is_empty() {
            self.q1 = Some(self.spill.remove(0));
        }
        self.qlen -= 1;
        Some(head)
    }
}

pub(crate) struct SimState {
    tasks: Vec<TaskSlot>,
    ready: Vec<u32>,
    cells: Vec<CellSim>,
    active_cells: Vec<u32>,
    time: u64,
    work: u64,
    span: u64,
    nodes: u64,
    live: usize,
    procs: usize,
    budget: u64,
    rng: ChaCha8Rng,
    record_dag: bool,
    dag_nodes: Vec<DagNode>,
    cell_trace: Vec<CellTraceEntry>,
}

pub struct Sim {
    pub(crate) s: Mutex<SimState>,
}

impl Sim {
    pub(crate) fn now(&self) -> u64 {
        self.s.lock().time
    }

    pub(crate) fn span_so_far(&self) -> u64 {
        self.s.lock().span
    }

    pub(crate) fn task_dist(&self, id: u32) -> u64 {
        self.s.lock().tasks[id as usize].dist
    }

    pub(crate) fn task_node(&self, id: u32) -> u64 {
        self.s.lock().tasks[id as usize].last_node
    }

    pub(crate) fn order_after(&self, id: u32, dist: u64, node: Option<u64>) {
        let mut s = self.s.lock();
        let slot = &mut s.tasks[id as usize];
        if dist > slot.extra_dep {
            slot.extra_dep = dist;
            slot.extra_parent = node;
        }
    }

    fn current_id() -> u32 {
        match current_task() {
            TaskRef::Recorded(id) => id,
            TaskRef::Real(_) => panic!("recorded primitive polled in real task"),
        }
    }

    /// Schedules the current task to run again at the next time step.
    pub(crate) fn schedule_self_next(&self) {
        let id = Self::current_id();
        let mut s = self.s.lock();
        s.tasks[id as usize].phase = Phase::Ready;
        s.ready.push(id);
    }

    pub(crate) fn mark_join_wait(&self, id: u32) {
        self.s.lock().tasks[id as usize].phase = Phase::JoinWait;
    }

    /// Parks the current task unless a resume permit is already pending.
    pub(crate) fn park_self(&self) {
        let id = Self::current_id();
        let mut s = self.s.lock();
        let slot = &mut s.tasks[id as usize];
        if slot.permits > 0 {
            slot.permits -= 1;
            let (d, n) = (slot.permit_dist, slot.permit_node);
            if d > slot.extra_dep {
                slot.extra_dep = d;
                slot.extra_parent = n;
            }
            slot.phase = Phase::Ready;
            s.ready.push(id);
        } else {
            slot.phase = Phase::Parked;
        }
    }

    /// Grants a resume permit to `target`, waking it if parked. The edge from
    /// the resume step is carried on the permit.
    pub(crate) fn grant_permit(&self, target: u32) {
        let me = Self::current_id();
        let mut s = self.s.lock();
        let (d, n) = {
            let my = &s.tasks[me as usize];
            (my.dist, Some(my.last_node))
        };
        let slot = &mut s.tasks[target as usize];
        if slot.phase == Phase::Parked {
            if d > slot.extra_dep {
                slot.extra_dep = d;
                slot.extra_parent = n;
            }
            slot.phase = Phase::Ready;
            s.ready.push(target);
        } else {
            slot.permits += 1;
            if d > slot.permit_dist {
                slot.permit_dist = d;
                slot.permit_node = n;
            }
        }
    }

    /// Spawns a task whose first step depends on the current (forking) step.
    pub(crate) fn spawn(&self, fut: BoxFuture<'static, ()>, done: ForkDone) -> u32 {
        let me = Self::current_id();
        let mut s = self.s.lock();
        let (pd, pn) = {
            let my = &s.tasks[me as usize];
            (my.dist, my.last_node)
        };
        let id = s.tasks.len() as u32;
        s.tasks.push(TaskSlot {
            fut: Some(fut),
            done: Some(done),
            phase: Phase::Ready,
            dist: pd,
            last_node: 0,
            next_weight: 1,
            extra_dep: 0,
            extra_parent: None,
            spawn_parent: Some(pn),
            permits: 0,
            permit_dist: 0,
            permit_node: None,
        });
        s.live += 1;
        s.ready.push(id);
        id
    }

    /// Registers a new cell and returns its id.
    pub(crate) fn new_cell(&self, class: CellClass) -> u32 {
        let mut s = self.s.lock();
        let id = s.cells.len() as u32;
        s.cells.push(CellSim {
            class,
            q0: None,
            q1: None,
            spill: Vec::new(),
            qlen: 0,
            max_qlen: 0,
            total: 0,
            in_active: false,
        });
        id
    }

    /// Enqueues an RMW request by the current task on `cell`.
    pub(crate) fn enqueue_rmw(&self, cell: u32) {
        let id = Self::current_id();
        let mut s = self.s.lock();
        let time = s.time;
        let c = &mut s.cells[cell as usize];
        c.push(Req { task: id, arrival: time });
        if !c.in_active {
            c.in_active = true;
            s.active_cells.push(cell);
        }
        s.tasks[id as usize].phase = Phase::CellWait;
    }

    fn build_record(&self, base: (u64, u64, u64, u64), result_span: u64) -> ExecutionRecord {
        let s = self.s.lock();
        let (work0, nodes0, steps0, tasks0) = base;
        let mut by_class: Vec<ClassStats> = Vec::new();
        for c in &s.cells {
            let entry = by_class.iter_mut().find(|e| e.class == c.class);
            let e = match entry {
                Some(e) => e,
                None => {
                    by_class.push(ClassStats { class: c.class, cells: 0, requests: 0, max_queue: 0 });
                    by_class.last_mut().unwrap()
                }
            };
            e.cells += 1;
            e.requests += c.total;
            e.max_queue = e.max_queue.max(c.max_qlen as u64);
        }
        by_class.sort_by_key(|e| e.class as u8);
        ExecutionRecord {
            work: s.work - work0,
            span: result_span,
            steps: s.time - steps0,
            tasks: s.tasks.len() as u64 - tasks0,
            nodes: s.nodes - nodes0,
            cell_stats: by_class,
            dag: if s.record_dag {
                Some(DagLog { nodes: s.dag_nodes.clone(), cell_trace: s.cell_trace.clone() })
            } else {
                None
            },
        }
    }
}

/// Deterministic recorded runtime. Construct once per experiment; objects
/// (trees, cells) built in one `run` stay valid for later runs on the same
/// runtime, and cell contention statistics accumulate across them.
pub struct RecordedRt {
    sim: Arc<Sim>,
    metrics: Arc<Metrics>,
}

impl RecordedRt {
    pub fn new(seed: u64, processors: usize) -> Self {
        assert!(processors >= 1, "need at least one processor");
        RecordedRt {
            sim: Arc::new(Sim {
                s: Mutex::new(SimState {
                    tasks: Vec::new(),
                    ready: Vec::new(),
                    cells: Vec::new(),
                    active_cells: Vec::new(),
                    time: 0,
                    work: 0,
                    span: 0,
                    nodes: 0,
                    live: 0,
                    procs: processors,
                    budget: DEFAULT_STEP_BUDGET,
                    rng: ChaCha8Rng::seed_from_u64(seed),
                    record_dag: false,
                    dag_nodes: Vec::new(),
                    cell_trace: Vec::new(),
                }),
            }),
            metrics: Arc::new(Metrics::default()),
        }
    }

    /// Overrides the step budget (diagnostic abort threshold).
    pub fn with_step_budget(self, budget: u64) -> Self {
        self.sim.s.lock().budget = budget;
        self
    }

    /// Enables full DAG and cell-trace capture (memory-heavy; small runs only).
    pub fn record_dag(&self, on: bool) {
        self.sim.s.lock().record_dag = on;
    }

    pub fn ctx(&self) -> Ctx {
        Ctx::new(BackendHandle::Recorded(self.sim.clone()), self.metrics.clone())
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.metrics
    }

    /// Runs `f` to completion under the simulated greedy scheduler and
    /// returns its value together with the run's [`ExecutionRecord`].
    ///
    /// Deterministic: same runtime seed, processor count, and run sequence
    /// give bit-identical records and schedules.
    pub fn run<T, F, Fut>(&self, f: F) -> (T, ExecutionRecord)
    where
        T: Send + 'static,
        F: FnOnce(Ctx) -> Fut,
        Fut: Future<Output = T> + Send + 'static,
    {
        let ctx = self.ctx();
        let result: Arc<Mutex<Option<T>>> = Arc::new(Mutex::new(None));
        let res2 = result.clone();
        let fut = f(ctx);
        let root: BoxFuture<'static, ()> = Box::pin(async move {
            let out = fut.await;
            *res2.lock() = Some(out);
        });

        let base;
        {
            let mut s = self.sim.s.lock();
            assert!(s.live == 0, "run() while a previous run is still active");
            base = (s.work, s.nodes, s.time, s.tasks.len() as u64);
            // Fresh run: distances restart from zero. Tasks from earlier runs
            // are all done, so slots can be dropped wholesale.
            s.tasks.clear();
            s.ready.clear();
            let id = 0u32;
            s.tasks.push(TaskSlot {
                fut: Some(root),
                done: None,
                phase: Phase::Ready,
                dist: 0,
                last_node: 0,
                next_weight: 1,
                extra_dep: 0,
                extra_parent: None,
                spawn_parent: None,
                permits: 0,
                permit_dist: 0,
                permit_node: None,
            });
            s.live = 1;
            s.ready.push(id);
        }
        let span_base = {
            let mut s = self.sim.s.lock();
            s.span = 0;
            0u64
        };
        let _ = span_base;

        self.drive();

        let value = result.lock().take().expect("root task did not produce a result");
        let span = self.sim.s.lock().span;
        let record = self.sim.build_record((base.0, base.1, base.2, base.3), span);
        (value, record)
    }

    fn drive(&self) {
        let waker = noop_waker();
        let mut chosen: Vec<u32> = Vec::new();
        loop {
            // --- pick up to `procs` ready tasks for this time step ---
            {
                let mut s = self.sim.s.lock();
                if s.live == 0 {
                    break;
                }
                if s.time >= s.budget {
                    panic!(
                        "recorded run exceeded step budget ({} steps): live={} ready={} — likely livelock",
                        s.budget, s.live, s.ready.len()
                    );
                }
                s.time += 1;
                if s.ready.is_empty() && s.active_cells.is_empty() {
                    let parked = s.tasks.iter().filter(|t| t.phase == Phase::Parked).count();
                    let joinw = s.tasks.iter().filter(|t| t.phase == Phase::JoinWait).count();
                    panic!(
                        "recorded run deadlocked: live={} parked={} join-waiting={}",
                        s.live, parked, joinw
                    );
                }
                let k = s.procs.min(s.ready.len());
                // seeded partial Fisher-Yates: tie-breaks both which ready
                // steps run this step and their within-step service order
                let len = s.ready.len();
                for i in 0..k {
                    let j = i + s.rng.gen_range(0..len - i);
                    s.ready.swap(i, j);
                }
                chosen.clear();
                chosen.extend(s.ready.drain(0..k));
            }

            // --- execute one step of each chosen task ---
            for &id in &chosen {
                let mut fut = {
                    let mut s = self.sim.s.lock();
                    let nodes = s.nodes;
                    let record_dag = s.record_dag;
                    let slot = &mut s.tasks[id as usize];
                    debug_assert_eq!(slot.phase, Phase::Ready);
                    slot.phase = Phase::Running;
                    let weight = slot.next_weight;
                    slot.next_weight = 1;
                    let node_id = nodes + 1;
                    let prog_parent = if slot.spawn_parent.is_none() && node_id != 1 && slot.last_node != 0 {
                        Some(slot.last_node)
                    } else {
                        None
                    };
                    let spawn_parent = slot.spawn_parent.take();
                    let extra_parent = slot.extra_parent.take();
                    let dist = slot.dist.max(slot.extra_dep) + weight;
                    slot.extra_dep = 0;
                    slot.dist = dist;
                    slot.last_node = node_id;
                    s.nodes = node_id;
                    s.work += weight;
                    if dist > s.span {
                        s.span = dist;
                    }
                    if record_dag {
                        s.dag_nodes.push(DagNode {
                            id: node_id,
                            weight,
                            parents: [prog_parent, extra_parent, spawn_parent],
                        });
                    }
                    s.tasks[id as usize].fut.take().expect("scheduled task has no future")
                };

                set_current(Some(TaskRef::Recorded(id)));
                let mut cx = Context::from_waker(&waker);
                let poll = fut.as_mut().poll(&mut cx);
                set_current(None);

                let mut s = self.sim.s.lock();
                match poll {
                    Poll::Pending => {
                        let slot = &mut s.tasks[id as usize];
                        debug_assert_ne!(
                            slot.phase,
                            Phase::Running,
                            "task returned Pending without registering a primitive"
                        );
                        slot.fut = Some(fut);
                    }
                    Poll::Ready(()) => {
                        let (dist, node) = {
                            let slot = &mut s.tasks[id as usize];
                            slot.phase = Phase::Done;
                            (slot.dist, Some(slot.last_node))
                        };
                        s.live -= 1;
                        let done = s.tasks[id as usize].done.take();
                        drop(s);
                        // completion callback may wake a joiner
                        if let Some(done) = done {
                            if let Some(TaskRef::Recorded(waiter)) = done.complete(dist, node) {
                                let mut s = self.sim.s.lock();
                                let w = &mut s.tasks[waiter as usize];
                                debug_assert_eq!(w.phase, Phase::JoinWait);
                                if dist > w.extra_dep {
                                    w.extra_dep = dist;
                                    w.extra_parent = node;
                                }
                                w.phase = Phase::Ready;
                                s.ready.push(waiter);
                            }
                        }
                    }
                }
            }

            // --- service one queued RMW request per active cell ---
            {
                let mut s = self.sim.s.lock();
                let time = s.time;
                let record_dag = s.record_dag;
                let mut i = 0;
                while i < s.active_cells.len() {
                    let cid = s.active_cells[i];
                    let (req, now_empty, class) = {
                        let c = &mut s.cells[cid as usize];
                        let req = c.pop().expect("active cell with empty queue");
                        (req, c.qlen == 0, c.class)
                    };
                    let weight = time - req.arrival + 1;
                    if record_dag {
                        s.cell_trace.push(CellTraceEntry {
                            cell: cid as u64,
                            class,
                            task: req.task as u64,
                            arrival: req.arrival,
                            service: time,
                        });
                    }
                    {
                        let slot = &mut s.tasks[req.task as usize];
                        debug_assert_eq!(slot.phase, Phase::CellWait);
                        slot.phase = Phase::Ready;
                        slot.next_weight = weight;
                    }
                    s.ready.push(req.task);
                    if now_empty {
                        s.cells[cid as usize].in_active = false;
                        s.active_cells.swap_remove(i);
                    } else {
                        i += 1;
                    }
                }
            }
        }
    }
}
