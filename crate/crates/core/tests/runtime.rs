//! Runtime contract tests: fork/join, RMW cells under the queued-contention
//! model, locks, barriers, reactivation wrappers, and the recorded engine's
//! work/span/determinism guarantees.

use pipetree::runtime::{Barrier, Cell, CellClass, Ctx, NonBlockingLock, Reactivation, RecordedRt};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;

#[test]
fn fork_noop_join_completes() {
    let rt = RecordedRt::new(1, 2);
    let (out, _) = rt.run(|ctx| async move {
        let h = ctx.fork(async move { 41 }).await;
        h.join(&ctx).await + 1
    });
    assert_eq!(out, 42);
}

#[test]
fn fork_eight_incrementers_sums_to_eight() {
    // oracle: sequential sum of eight increments is 8
    for seed in 0..10 {
        let rt = RecordedRt::new(seed, 4);
        let (total, _) = rt.run(|ctx| async move {
            let cell = Cell::new(&ctx, CellClass::Plain, 0i64);
            let mut handles = Vec::new();
            for _ in 0..8 {
                let c = cell.clone();
                handles.push(ctx.fork(async move { c.fetch_add(1).await }).await);
            }
            for h in handles {
                h.join(&ctx).await;
            }
            cell.read().await
        });
        assert_eq!(total, 8);
    }
}

#[test]
fn nested_fork_completes() {
    let rt = RecordedRt::new(7, 3);
    let (out, _) = rt.run(|ctx| async move {
        let ctx2 = ctx.clone();
        let a = ctx
            .fork(async move {
                let b = ctx2.fork(async move { 5 }).await;
                b.join(&ctx2).await * 2
            })
            .await;
        a.join(&ctx).await
    });
    assert_eq!(out, 10);
}

#[test]
fn read_fresh_cell_is_zero() {
    let rt = RecordedRt::new(0, 1);
    let (v, _) = rt.run(|ctx| async move { Cell::new(&ctx, CellClass::Plain, 0i64).read().await });
    assert_eq!(v, 0);
}

#[test]
fn concurrent_fetch_adds_linearize() {
    // oracle: both service orders give priors {0,1} and final 2
    let mut seen_orders = std::collections::HashSet::new();
    for seed in 0..20 {
        let rt = RecordedRt::new(seed, 2);
        let ((p1, p2, fin), _) = rt.run(|ctx| async move {
            let cell = Cell::new(&ctx, CellClass::Plain, 0i64);
            let (c1, c2) = (cell.clone(), cell.clone());
            let (x1, x2) = (ctx.clone(), ctx.clone());
            // compensating ticks align both requests on one time step
            let h1 = ctx
                .fork(async move {
                    x1.tick().await;
                    x1.tick().await;
                    c1.fetch_add(1).await
                })
                .await;
            let h2 = ctx
                .fork(async move {
                    x2.tick().await;
                    c2.fetch_add(1).await
                })
                .await;
            let p1 = h1.join(&ctx).await;
            let p2 = h2.join(&ctx).await;
            (p1, p2, cell.read().await)
        });
        assert_eq!(fin, 2);
        let mut priors = [p1, p2];
        priors.sort();
        assert_eq!(priors, [0, 1]);
        seen_orders.insert((p1, p2));
    }
    assert!(seen_orders.len() >= 2, "seeds should explore both service orders");
}

#[test]
fn test_and_set_returns_prior() {
    let rt = RecordedRt::new(0, 1);
    let ((a, b), _) = rt.run(|ctx| async move {
        let c = Cell::new(&ctx, CellClass::Plain, false);
        (c.test_and_set().await, c.test_and_set().await)
    });
    assert!(!a);
    assert!(b);
}

#[test]
fn try_lock_basics() {
    let rt = RecordedRt::new(0, 1);
    let ((a, b, c), _) = rt.run(|ctx| async move {
        let l = NonBlockingLock::new(&ctx);
        let a = l.try_lock().await;
        let b = l.try_lock().await;
        l.unlock().await;
        let c = l.try_lock().await;
        (a, b, c)
    });
    assert!(a);
    assert!(!b);
    assert!(c);
}

#[test]
fn concurrent_try_lock_exactly_one_winner() {
    for seed in 0..20 {
        let rt = RecordedRt::new(seed, 2);
        let ((a, b), _) = rt.run(|ctx| async move {
            let l = Arc::new(NonBlockingLock::new(&ctx));
            let (l1, l2) = (l.clone(), l.clone());
            let h1 = ctx.fork(async move { l1.try_lock().await }).await;
            let h2 = ctx.fork(async move { l2.try_lock().await }).await;
            (h1.join(&ctx).await, h2.join(&ctx).await)
        });
        assert!(a ^ b, "exactly one task must win the lock");
    }
}

#[test]
#[should_panic(expected = "unlock of a lock that is not held")]
fn double_unlock_asserts() {
    let rt = RecordedRt::new(0, 1);
    rt.run(|ctx| async move {
        let l = NonBlockingLock::new(&ctx);
        assert!(l.try_lock().await);
        l.unlock().await;
        l.unlock().await;
    });
}

#[test]
fn barrier_notify_then_wait_passes() {
    let rt = RecordedRt::new(0, 2);
    let (notified_before, _) = rt.run(|ctx| async move {
        let b = Barrier::new(&ctx);
        let before = b.notified().await;
        b.notify(&ctx).await;
        b.wait(&ctx).await;
        assert!(b.notified().await);
        before
    });
    assert!(!notified_before);
}

#[test]
fn barrier_wait_then_notify_resumes() {
    for seed in 0..20 {
        let rt = RecordedRt::new(seed, 2);
        let (ok, _) = rt.run(|ctx| async move {
            let b = Barrier::new(&ctx);
            let b2 = b.clone();
            let ctx2 = ctx.clone();
            let flag = Arc::new(AtomicU32::new(0));
            let f2 = flag.clone();
            let waiter = ctx
                .fork(async move {
                    b2.wait(&ctx2).await;
                    // by the barrier contract the notify already executed
                    f2.load(Ordering::SeqCst) == 1
                })
                .await;
            for _ in 0..seed % 5 {
                ctx.tick().await;
            }
            flag.store(1, Ordering::SeqCst);
            b.notify(&ctx).await;
            waiter.join(&ctx).await
        });
        assert!(ok, "wait returned before notify");
    }
}

#[test]
fn reactivation_single_run() {
    let rt = RecordedRt::new(0, 2);
    let runs = Arc::new(AtomicU64::new(0));
    let r2 = runs.clone();
    rt.run(move |ctx| async move {
        let r3 = r2.clone();
        let w = Reactivation::new(&ctx, move |_ctx| {
            let r = r3.clone();
            Box::pin(async move {
                r.fetch_add(1, Ordering::SeqCst);
            })
        });
        w.reactivate(&ctx).await;
        // drain: run happens before the recorded run finishes
    });
    assert_eq!(runs.load(Ordering::SeqCst), 1);
}

#[test]
fn reactivation_no_overlap_and_bounded_runs() {
    for seed in [1u64, 9, 23] {
        let rt = RecordedRt::new(seed, 8);
        let runs = Arc::new(AtomicU64::new(0));
        let occupancy = Arc::new(AtomicU32::new(0));
        let (last_react_time, _) = {
            let runs = runs.clone();
            let occupancy = occupancy.clone();
            rt.run(move |ctx| async move {
                let runs2 = runs.clone();
                let occ = occupancy.clone();
                let w = Reactivation::new(&ctx, move |ctx| {
                    let runs3 = runs2.clone();
                    let occ = occ.clone();
                    Box::pin(async move {
                        let o = occ.fetch_add(1, Ordering::SeqCst);
                        assert_eq!(o, 0, "reactivation body runs overlapped");
                        ctx.tick().await;
                        ctx.tick().await;
                        occ.fetch_sub(1, Ordering::SeqCst);
                        runs3.fetch_add(1, Ordering::SeqCst);
                    })
                });
                let mut handles = Vec::new();
                for _ in 0..100 {
                    let w2 = w.clone();
                    let c2 = ctx.clone();
                    handles.push(ctx.fork(async move { w2.reactivate(&c2).await }).await);
                }
                for h in handles {
                    h.join(&ctx).await;
                }
                ctx.now()
            })
        };
        let total = runs.load(Ordering::SeqCst);
        assert!(total >= 1 && total <= 100, "runs {total} out of range");
        let _ = last_react_time;
    }
}

#[test]
fn sequential_loop_work_equals_span() {
    let rt = RecordedRt::new(0, 4);
    let n = 100u64;
    let (_, rec) = rt.run(|ctx| async move {
        for _ in 0..n {
            ctx.tick().await;
        }
    });
    // root start step + n ticks
    assert_eq!(rec.work, rec.span);
    assert!(rec.work >= n && rec.work <= n + 2);
}

#[test]
fn balanced_fork_tree_has_log_span() {
    fn tree(ctx: Ctx, depth: u32) -> futures::future::BoxFuture<'static, ()> {
        Box::pin(async move {
            if depth == 0 {
                ctx.tick().await;
                return;
            }
            let c2 = ctx.clone();
            let h = ctx.fork(async move { tree(c2.clone(), depth - 1).await }).await;
            tree(ctx.clone(), depth - 1).await;
            h.join(&ctx).await;
        })
    }
    let rt = RecordedRt::new(3, 64);
    let depth = 8u32; // 256 leaves
    let (_, rec) = rt.run(move |ctx| tree(ctx, depth));
    let leaves = 1u64 << depth;
    assert!(rec.work >= leaves && rec.work <= 8 * leaves, "work {} not Θ(n)", rec.work);
    assert!(
        rec.span as u32 >= depth && rec.span <= 8 * (depth as u64 + 1),
        "span {} not Θ(log n)",
        rec.span
    );
}

#[test]
fn recorded_runs_are_deterministic() {
    let run = |seed| {
        let rt = RecordedRt::new(seed, 3);
        rt.run(|ctx| async move {
            let cell = Cell::new(&ctx, CellClass::Plain, 0i64);
            let mut hs = Vec::new();
            for i in 0..16 {
                let c = cell.clone();
                hs.push(ctx.fork(async move { c.fetch_add(i).await }).await);
            }
            let mut priors = Vec::new();
            for h in hs {
                priors.push(h.join(&ctx).await);
            }
            (priors, cell.read().await)
        })
    };
    let (va, ra) = run(11);
    let (vb, rb) = run(11);
    assert_eq!(va, vb, "same seed must give identical results");
    assert_eq!(ra, rb, "same seed must give bit-identical records");
    let (vc, _) = run(12);
    assert_eq!(va.1, vc.1, "different seeds still agree on the final value");
}

#[test]
fn cell_service_order_is_a_linearization() {
    // priors of n concurrent FAA(1) on one cell, sorted by service time, must
    // replay as 0,1,2,...,n-1
    let rt = RecordedRt::new(5, 8);
    rt.record_dag(true);
    let n = 12i64;
    let (priors, rec) = rt.run(|ctx| async move {
        let cell = Cell::new(&ctx, CellClass::Plain, 0i64);
        let mut hs = Vec::new();
        for _ in 0..n {
            let c = cell.clone();
            hs.push(ctx.fork(async move { c.fetch_add(1).await }).await);
        }
        let mut priors = Vec::new();
        for h in hs {
            priors.push(h.join(&ctx).await);
        }
        priors
    });
    let dag = rec.dag.as_ref().expect("dag capture enabled");
    // the contended cell is the one with n requests
    let mut per_cell: std::collections::HashMap<u64, Vec<(u64, u64)>> = Default::default();
    for e in &dag.cell_trace {
        per_cell.entry(e.cell).or_default().push((e.service, e.task));
    }
    let faa_cell = per_cell.values_mut().find(|v| v.len() == n as usize).expect("faa cell trace");
    faa_cell.sort();
    // task ids are assigned in fork order: task k (1-based child) did prior[k-1]
    for (rank, (_, task)) in faa_cell.iter().enumerate() {
        let prior = priors[*task as usize - 1];
        assert_eq!(prior, rank as i64, "service order must replay sequentially");
    }
    // cross-check incremental work/span against the captured DAG
    let (w, s) = rec.recompute_from_dag().unwrap();
    assert_eq!((w, s), (rec.work, rec.span));
}

#[test]
fn contention_weights_count_queue_rank() {
    // n concurrent RMWs on one cell: the run's span must reflect the queue
    // (last serviced request has weight ~n), and max contention equals n
    let n = 16u64;
    let rt = RecordedRt::new(2, 32);
    let (_, rec) = rt.run(|ctx| async move {
        let cell = Cell::new(&ctx, CellClass::Plain, 0i64);
        let mut hs = Vec::new();
        for i in 0..n {
            let c = cell.clone();
            let x = ctx.clone();
            hs.push(
                ctx.fork(async move {
                    // staggered spawn + compensating ticks = simultaneous arrival
                    for _ in 0..(n - i) {
                        x.tick().await;
                    }
                    c.fetch_add(1).await
                })
                .await,
            );
        }
        for h in hs {
            h.join(&ctx).await;
        }
    });
    assert!(rec.span >= n, "span {} must include the FIFO wait", rec.span);
    assert_eq!(rec.max_contention(CellClass::Plain), n);
}

#[test]
#[should_panic(expected = "step budget")]
fn step_budget_aborts_runaway_programs() {
    let rt = RecordedRt::new(0, 1).with_step_budget(1000);
    rt.run(|ctx| async move {
        loop {
            ctx.tick().await;
        }
    });
}

#[test]
fn real_backend_runs_programs() {
    let rt = pipetree::runtime::RealRt::new(4);
    let total = rt.run(|ctx| async move {
        let cell = Cell::new(&ctx, CellClass::Plain, 0i64);
        let mut hs = Vec::new();
        for _ in 0..64 {
            let c = cell.clone();
            hs.push(ctx.fork(async move { c.fetch_add(1).await }).await);
        }
        for h in hs {
            h.join(&ctx).await;
        }
        cell.read().await
    });
    assert_eq!(total, 64);
}

#[test]
fn real_backend_barrier_and_lock() {
    let rt = pipetree::runtime::RealRt::new(4);
    for _ in 0..50 {
        let ok = rt.run(|ctx| async move {
            let b = Barrier::new(&ctx);
            let b2 = b.clone();
            let ctx2 = ctx.clone();
            let waiter = ctx
                .fork(async move {
                    b2.wait(&ctx2).await;
                    b2.notified().await
                })
                .await;
            b.notify(&ctx).await;
            waiter.join(&ctx).await
        });
        assert!(ok);
    }
}
