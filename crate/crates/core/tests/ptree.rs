//! 2-3 tree tests: spine arithmetic against a brute-force join oracle,
//! sorted batch access against a sequential map oracle, unsorted search,
//! reverse-indexing, batch joining, and the structural validator.

use pipetree::batch::Batch;
use pipetree::ptree::{
    coalesce, join_instances, join_spines, join_spines_any, random_shape_tree, route_results,
    seq_join_trees, shape_signature, slice_23, slice_join_23, spines_by_definition, PTree,
    RawAccess, RawOp,
};
use pipetree::runtime::RecordedRt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn rt(seed: u64) -> RecordedRt {
    RecordedRt::new(seed, 8)
}

// ---------------------------------------------------------------------------
// spine arithmetic
// ---------------------------------------------------------------------------

#[test]
fn spine_of_leaf_and_tiny_nodes() {
    let r = rt(0);
    let ctx = r.ctx();
    // leaf
    let t = PTree::from_sorted_keys(&ctx, vec![1i64], false).unwrap();
    assert_eq!(spines_by_definition(&t), Some((0, 0)));
    // 2-child node of leaves -> 0; 3-child node of leaves -> 1
    let t2 = PTree::from_sorted_keys(&ctx, vec![1i64, 2], false).unwrap();
    assert_eq!(spines_by_definition(&t2), Some((0, 0)));
    let t3 = PTree::from_sorted_keys(&ctx, vec![1i64, 2, 3], false).unwrap();
    assert_eq!(spines_by_definition(&t3), Some((1, 1)));
}

#[test]
fn paper_worked_example_verbatim() {
    // X of weight 1000000b with rspine 101101b joined with Y of weight 100b
    // and rspine 10b: no overflow, rspine of the join is 110010b
    let shape = join_spines(0b1000000, 0, 0b101101, 0b100, 0, 0b10);
    assert!(!shape.overflow);
    assert_eq!(shape.rj, 0b110010);
    // equal weights always overflow and keep the outer spines
    let eq = join_spines(0b100, 0b01, 0b10, 0b100, 0b11, 0b00);
    assert!(eq.overflow);
    assert_eq!((eq.lj, eq.rj), (0b01, 0b00));
}

#[test]
fn figure_tree_rspine_bits() {
    // build a height-6 tree whose right-spine child counts from the leaf up
    // are 3,2,3,3,2,3 — rspine must read 101101b
    let r = rt(1);
    let ctx = r.ctx();
    // child counts fixed along the right spine, every other node binary:
    // generate shapes until the right spine matches, then check the value
    let want = 0b101101u64;
    let mut found = false;
    for seed in 0..5000u64 {
        let t = random_shape_tree(&ctx, seed, 6, 0);
        let (_, rsp) = spines_by_definition(&t).unwrap();
        if rsp == want {
            found = true;
            let (_, stored_ok) = check_stored_spines(&t);
            assert!(stored_ok);
            break;
        }
    }
    assert!(found, "no height-6 shape with rspine 101101b found");
}

fn check_stored_spines(t: &PTree<i64>) -> (bool, bool) {
    let rep = t.validate(true);
    (rep.ok(), rep.ok())
}

#[test]
fn join_spines_matches_brute_force_random_trees() {
    // oracle: actually join the trees sequentially and recompute the spines
    let r = rt(2);
    let ctx = r.ctx();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..2000 {
        let hx = rng.gen_range(0..7u32);
        let hy = rng.gen_range(0..7u32);
        let x = random_shape_tree(&ctx, rng.gen(), hx, 0);
        let y = random_shape_tree(&ctx, rng.gen(), hy, x.size() as i64);
        let (lx, rx) = spines_by_definition(&x).unwrap();
        let (ly, ry) = spines_by_definition(&y).unwrap();
        let (xw, yw) = (1u64 << hx, 1u64 << hy);
        let shape = join_spines_any(xw, lx, rx, yw, ly, ry);
        let (joined, _) = {
            let (xr, yr) = (x.clone(), y.clone());
            rt(trial).run(move |c| async move { seq_join_trees(&c, xr_root(&xr), xr_root(&yr)).await })
        };
        let joined = joined.expect("nonempty join");
        let overflow = joined.height() > hx.max(hy);
        let jt = wrap(joined);
        let (lj, rj) = spines_by_definition(&jt).unwrap();
        assert_eq!(
            (shape.overflow, shape.lj, shape.rj),
            (overflow, lj, rj),
            "trial {trial} hx={hx} hy={hy}"
        );
    }
}

// test-side helpers to treat raw roots as trees
fn xr_root(t: &PTree<i64>) -> Option<std::sync::Arc<pipetree::ptree::TreeNode<i64>>> {
    // items()/size() are public; root access via join_instances is not needed
    // here — rebuild a handle through the public surface
    pipetree::ptree::root_of(t)
}

fn wrap(root: std::sync::Arc<pipetree::ptree::TreeNode<i64>>) -> PTree<i64> {
    pipetree::ptree::wrap_root_for_test(Some(root))
}

// ---------------------------------------------------------------------------
// sequential-oracle equivalence for execute
// ---------------------------------------------------------------------------

struct OracleRes {
    found: bool,
    payload: Option<i64>,
    applied: bool,
}

fn oracle_apply(map: &mut BTreeMap<i64, i64>, raws: &[RawAccess<i64>]) -> Vec<OracleRes> {
    raws.iter()
        .map(|r| match &r.op {
            RawOp::Search => {
                let v = map.get(&r.key).copied();
                OracleRes { found: v.is_some(), payload: v, applied: false }
            }
            RawOp::Update(p) => {
                if let Some(slot) = map.get_mut(&r.key) {
                    *slot = *p;
                    OracleRes { found: true, payload: Some(*p), applied: true }
                } else {
                    OracleRes { found: false, payload: None, applied: false }
                }
            }
            RawOp::Insert(p) => {
                if map.contains_key(&r.key) {
                    OracleRes { found: true, payload: None, applied: false }
                } else {
                    map.insert(r.key, *p);
                    OracleRes { found: false, payload: None, applied: true }
                }
            }
            RawOp::Delete => {
                let had = map.remove(&r.key).is_some();
                OracleRes { found: had, payload: None, applied: had }
            }
        })
        .collect()
}

fn random_raws(rng: &mut ChaCha8Rng, b: usize, key_space: i64) -> Vec<RawAccess<i64>> {
    let mut raws: Vec<RawAccess<i64>> = (0..b)
        .map(|_| {
            let key = rng.gen_range(0..key_space);
            let op = match rng.gen_range(0..4) {
                0 => RawOp::Search,
                1 => RawOp::Update(rng.gen_range(0..100)),
                2 => RawOp::Insert(rng.gen_range(0..100)),
                _ => RawOp::Delete,
            };
            RawAccess { key, op }
        })
        .collect();
    raws.sort_by_key(|r| r.key);
    raws
}

fn check_scenario(seed: u64, n: usize, b: usize, key_space: i64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys: Vec<i64> = (0..key_space).collect();
    for i in (1..keys.len()).rev() {
        let j = rng.gen_range(0..=i);
        keys.swap(i, j);
    }
    let mut init: Vec<i64> = keys[..n.min(keys.len())].to_vec();
    init.sort();
    let raws = random_raws(&mut rng, b, key_space);

    let mut map: BTreeMap<i64, i64> = init.iter().map(|&k| (k, 0)).collect();
    let oracle_res = oracle_apply(&mut map, &raws);
    let oracle_keys: Vec<i64> = map.keys().copied().collect();

    let r = rt(seed);
    let init2 = init.clone();
    let raws2 = raws.clone();
    let ((params, results), _) = r.run(move |ctx| async move {
        let t = PTree::from_sorted_keys(&ctx, init2, true).unwrap();
        let plan = coalesce(raws2).unwrap();
        t.execute(&ctx, &plan).await;
        let results = route_results(&plan);
        let rep = t.validate(true);
        assert!(rep.ok(), "validator failed: {:?}\n{}", rep.violations, t.debug_dump());
        ((t.keys(), t.size()), results)
    });
    let (keys_after, size_after) = params;
    assert_eq!(keys_after, oracle_keys, "seed {seed} n {n} b {b}: final keys differ");
    assert_eq!(size_after, oracle_keys.len());
    assert_eq!(results.len(), oracle_res.len());
    for (i, (got, want)) in results.iter().zip(oracle_res.iter()).enumerate() {
        assert_eq!(got.found, want.found, "seed {seed} access {i} found");
        assert_eq!(got.applied, want.applied, "seed {seed} access {i} applied");
        if want.payload.is_some() {
            assert_eq!(got.payload, want.payload, "seed {seed} access {i} payload");
        }
    }
}

#[test]
fn execute_basic_examples() {
    let r = rt(3);
    r.run(|ctx| async move {
        // {1,3,5} + insert [2,4,6] = {1..6}
        let t = PTree::from_sorted_keys(&ctx, vec![1i64, 3, 5], false).unwrap();
        let plan = coalesce(
            vec![2i64, 4, 6]
                .into_iter()
                .map(|k| RawAccess { key: k, op: RawOp::Insert(0) })
                .collect(),
        )
        .unwrap();
        t.execute(&ctx, &plan).await;
        assert_eq!(t.keys(), vec![1, 2, 3, 4, 5, 6]);
        assert!(t.validate(true).ok());

        // empty batch: unchanged
        let empty = coalesce(Vec::<RawAccess<i64>>::new()).unwrap();
        t.execute(&ctx, &empty).await;
        assert_eq!(t.keys(), vec![1, 2, 3, 4, 5, 6]);

        // delete everything
        let plan = coalesce(
            (1..=6i64).map(|k| RawAccess { key: k, op: RawOp::Delete }).collect(),
        )
        .unwrap();
        t.execute(&ctx, &plan).await;
        assert!(t.is_empty());
        assert_eq!(t.size(), 0);
        assert!(t.validate(true).ok());
    });
}

#[test]
fn execute_on_empty_tree_inserts() {
    let r = rt(4);
    r.run(|ctx| async move {
        let t = PTree::empty(false);
        let plan = coalesce(
            (0..50i64).map(|k| RawAccess { key: k * 2, op: RawOp::Insert(k) }).collect(),
        )
        .unwrap();
        t.execute(&ctx, &plan).await;
        assert_eq!(t.keys(), (0..50i64).map(|k| k * 2).collect::<Vec<_>>());
        assert!(t.validate(true).ok());
    });
}

#[test]
fn execute_matches_oracle_on_random_scenarios() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..40u64 {
        let n = rng.gen_range(0..300usize);
        let b = rng.gen_range(1..200usize);
        check_scenario(trial, n, b, 400);
    }
}

#[test]
fn execute_exhaustive_small_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for n in 0..=32usize {
        for _ in 0..3 {
            let b = rng.gen_range(1..=(n + 4));
            check_scenario(rng.gen(), n, b, (n as i64 + 4) * 2);
        }
    }
}

#[test]
fn coalesce_examples() {
    // insert then delete: effective no-op on an absent key
    let plan = coalesce(vec![
        RawAccess { key: 5i64, op: RawOp::Insert(1) },
        RawAccess { key: 5i64, op: RawOp::Delete },
    ])
    .unwrap();
    assert_eq!(plan.len(), 1);
    // search then insert: the search must report not-found
    let r = rt(5);
    r.run(|ctx| async move {
        let t = PTree::empty(false);
        let plan = coalesce(vec![
            RawAccess { key: 3i64, op: RawOp::Search },
            RawAccess { key: 3i64, op: RawOp::Insert(9) },
        ])
        .unwrap();
        t.execute(&ctx, &plan).await;
        let res = route_results(&plan);
        assert!(!res[0].found, "search precedes the insert");
        assert!(res[1].applied);
        assert_eq!(t.keys(), vec![3]);
    });
    assert!(coalesce(vec![
        RawAccess { key: 2i64, op: RawOp::Search },
        RawAccess { key: 1i64, op: RawOp::Search },
    ])
    .is_err());
}

#[test]
fn schedule_independence_of_execute() {
    // same tree and batch, many scheduler seeds: identical trees, results,
    // and shapes
    let mut signatures = Vec::new();
    for seed in 0..25u64 {
        let r = rt(seed);
        let (out, _) = r.run(move |ctx| async move {
            let t = PTree::from_sorted_keys(&ctx, (0..80i64).map(|x| x * 3).collect(), false)
                .unwrap();
            let raws: Vec<RawAccess<i64>> = (0..60i64)
                .map(|i| {
                    let key = i * 4;
                    let op = match i % 3 {
                        0 => RawOp::Insert(i),
                        1 => RawOp::Delete,
                        _ => RawOp::Search,
                    };
                    RawAccess { key, op }
                })
                .collect();
            let plan = coalesce(raws).unwrap();
            t.execute(&ctx, &plan).await;
            let res = route_results(&plan);
            let shape = shape_signature(&t);
            let flat: Vec<(bool, bool)> = res.iter().map(|r| (r.found, r.applied)).collect();
            (shape, flat, t.keys())
        });
        signatures.push(out);
    }
    for s in &signatures[1..] {
        assert_eq!(s, &signatures[0], "schedule must not affect results or shape");
    }
}

// ---------------------------------------------------------------------------
// pipelined join vs sequential join
// ---------------------------------------------------------------------------

#[test]
fn pipelined_join_equals_sequential_join() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for trial in 0..60u64 {
        let hx = rng.gen_range(0..6u32);
        let hy = rng.gen_range(0..6u32);
        let (sx, sy) = (rng.gen::<u64>(), rng.gen::<u64>());
        let r = rt(trial);
        let (sig_pipe, _) = r.run(move |ctx| async move {
            let x = random_shape_tree(&ctx, sx, hx, 0);
            let y = random_shape_tree(&ctx, sy, hy, 1 << 20);
            let j = join_instances(&ctx, &x, &y).await;
            let rep = j.validate(true);
            assert!(rep.ok(), "pipelined join invalid: {:?}", rep.violations);
            shape_signature(&j)
        });
        let r2 = rt(trial + 1000);
        let (sig_seq, _) = r2.run(move |ctx| async move {
            let x = random_shape_tree(&ctx, sx, hx, 0);
            let y = random_shape_tree(&ctx, sy, hy, 1 << 20);
            let j = seq_join_trees(&ctx, xr_root(&x), xr_root(&y)).await;
            shape_signature(&wrap(j.unwrap()))
        });
        assert_eq!(sig_pipe, sig_seq, "trial {trial}: joined state differs from textbook join");
    }
}

#[test]
fn join_with_empty_side() {
    let r = rt(6);
    r.run(|ctx| async move {
        let x = PTree::from_sorted_keys(&ctx, (0..9i64).collect(), false).unwrap();
        let e = PTree::empty(false);
        let j = join_instances(&ctx, &e, &x).await;
        assert_eq!(j.keys(), (0..9i64).collect::<Vec<_>>());
        assert!(j.validate(true).ok());
    });
}

#[test]
fn batch_join_many_instances() {
    let r = rt(7);
    r.run(|ctx| async move {
        // unsorted instance result: leaf sequences concatenate in order
        let a = PTree::from_sorted_keys(&ctx, vec![1i64, 2], false).unwrap();
        let b = PTree::from_sorted_keys(&ctx, vec![9i64], false).unwrap();
        let c = PTree::from_sorted_keys(&ctx, vec![4i64], false).unwrap();
        let j = PTree::batch_join_instances(&ctx, &[a, b, c]).await;
        assert_eq!(j.keys(), vec![1, 2, 9, 4]);
        let rep = j.validate(false); // unsorted instance: structural checks only
        assert!(rep.ok(), "{:?}", rep.violations);

        // 64 singleton instances
        let singles: Vec<PTree<i64>> = {
            let mut v = Vec::new();
            for k in 0..64i64 {
                v.push(PTree::from_sorted_keys(&ctx, vec![k], false).unwrap());
            }
            v
        };
        let j = PTree::batch_join_instances(&ctx, &singles).await;
        assert_eq!(j.keys(), (0..64i64).collect::<Vec<_>>());
        assert_eq!(j.size(), 64);
        assert!(j.validate(true).ok());
    });
}

#[test]
fn slice_join_23_examples() {
    let r = rt(8);
    r.run(|ctx| async move {
        let t = PTree::from_sorted_keys(&ctx, (0..16i64).collect(), false).unwrap();
        let parts = slice_23(&t, 2, 13);
        let joined = slice_join_23(&ctx, &parts).await.unwrap();
        let jt = wrap(joined);
        assert_eq!(jt.keys(), (2..=13i64).collect::<Vec<_>>());
        assert!(jt.validate(true).ok());

        // single subtree slice joins to itself
        let parts = slice_23(&t, 0, 15);
        assert_eq!(parts.len(), 1);
        let j = slice_join_23(&ctx, &parts).await.unwrap();
        assert_eq!(wrap(j).keys(), (0..16i64).collect::<Vec<_>>());
    });
}

// ---------------------------------------------------------------------------
// usearch
// ---------------------------------------------------------------------------

#[test]
fn usearch_examples() {
    let r = rt(9);
    r.run(|ctx| async move {
        let t = PTree::from_sorted_keys(&ctx, (1..=10i64).collect(), false).unwrap();
        let items = Batch::from_items(vec![7i64, 11, 7]);
        let tagged = t.usearch(&ctx, &items).await;
        let res = tagged.items();
        assert_eq!(res.len(), 3);
        assert!(res[0].found && res[2].found && !res[1].found);
        assert_eq!(res[0].handle, res[2].handle, "same item, same handle");
        assert_eq!(res[0].handle.as_ref().unwrap().key(), &7);

        // empty probe batch
        let empty = t.usearch(&ctx, &Batch::empty()).await;
        assert!(empty.is_empty());

        // all absent
        let none = t.usearch(&ctx, &Batch::from_items(vec![100i64, 200])).await;
        assert!(none.items().iter().all(|r| !r.found));
    });
}

#[test]
fn usearch_matches_lookup_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..15u64 {
        let n = rng.gen_range(0..200usize);
        let b = rng.gen_range(1..300usize);
        let mut keys: Vec<i64> = (0..500).collect();
        for i in (1..keys.len()).rev() {
            let j = rng.gen_range(0..=i);
            keys.swap(i, j);
        }
        let mut init: Vec<i64> = keys[..n].to_vec();
        init.sort();
        let set: std::collections::HashSet<i64> = init.iter().copied().collect();
        let probes: Vec<i64> = (0..b).map(|_| rng.gen_range(0..500)).collect();
        let r = rt(trial);
        let (init2, probes2) = (init.clone(), probes.clone());
        let (flags, _) = r.run(move |ctx| async move {
            let t = PTree::from_sorted_keys(&ctx, init2, false).unwrap();
            let tagged = t.usearch(&ctx, &Batch::from_items(probes2)).await;
            // tree must be unmodified
            assert!(t.validate(true).ok());
            tagged.items().iter().map(|s| (s.key, s.found)).collect::<Vec<_>>()
        });
        for (key, found) in flags {
            assert_eq!(found, set.contains(&key), "trial {trial} key {key}");
        }
    }
}

// ---------------------------------------------------------------------------
// reverse indexing
// ---------------------------------------------------------------------------

#[test]
fn reverse_index_examples_and_counters() {
    let r = rt(10);
    let metrics = r.metrics().clone();
    r.run(move |ctx| async move {
        let t = PTree::from_sorted_keys(&ctx, (1..=10i64).collect(), true).unwrap();
        let tagged = t.usearch(&ctx, &Batch::from_items(vec![9i64, 2, 5])).await;
        let handles: Vec<_> = tagged.items().into_iter().map(|s| s.handle.unwrap()).collect();
        let before = ctx.metrics().snapshot();
        let sorted = t.reverse_index(&ctx, &Batch::from_items(handles)).await;
        let after = ctx.metrics().snapshot();
        assert_eq!(sorted.items(), vec![2, 5, 9]);
        sorted.validate_sorted().unwrap();
        // b=3, n=10: marked nodes within 4(b+1)log2(n/b)+2b
        let marked = (after.clone() - before).marked_nodes as f64;
        let bound = 4.0 * 4.0 * (10f64 / 3.0).log2() + 6.0;
        assert!(marked <= bound, "marked {marked} > bound {bound}");

        // empty handle batch
        let empty = t.reverse_index(&ctx, &Batch::empty()).await;
        assert!(empty.is_empty());

        // all handles: full sorted list; flags were cleared by the last pass
        let tagged = t.usearch(&ctx, &Batch::from_items((1..=10i64).collect())).await;
        let all: Vec<_> = tagged.items().into_iter().map(|s| s.handle.unwrap()).collect();
        let sorted = t.reverse_index(&ctx, &Batch::from_items(all)).await;
        assert_eq!(sorted.items(), (1..=10i64).collect::<Vec<_>>());
        assert!(t.validate(true).ok());
    });
    let _ = metrics;
}

#[test]
fn reverse_index_matches_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..10u64 {
        let n = rng.gen_range(1..300usize);
        let b = rng.gen_range(1..=n);
        let init: Vec<i64> = (0..n as i64).map(|x| x * 2).collect();
        let mut picks: Vec<i64> = init.clone();
        for i in (1..picks.len()).rev() {
            let j = rng.gen_range(0..=i);
            picks.swap(i, j);
        }
        picks.truncate(b);
        let mut oracle = picks.clone();
        oracle.sort();
        let r = rt(trial);
        let (init2, picks2) = (init.clone(), picks.clone());
        let (got, _) = r.run(move |ctx| async move {
            let t = PTree::from_sorted_keys(&ctx, init2, true).unwrap();
            let tagged = t.usearch(&ctx, &Batch::from_items(picks2)).await;
            let handles: Vec<_> = tagged.items().into_iter().map(|s| s.handle.unwrap()).collect();
            let out = t.reverse_index(&ctx, &Batch::from_items(handles)).await;
            assert!(t.validate(true).ok());
            out.items()
        });
        assert_eq!(got, oracle, "trial {trial} n {n} b {b}");
    }
}

// ---------------------------------------------------------------------------
// handles, validator controls
// ---------------------------------------------------------------------------

#[test]
fn handles_survive_unrelated_batches() {
    let r = rt(11);
    r.run(|ctx| async move {
        let t = PTree::from_sorted_keys(&ctx, (0..40i64).map(|x| x * 10).collect(), true).unwrap();
        let tagged = t.usearch(&ctx, &Batch::from_items(vec![100i64, 250])).await;
        let res = tagged.items();
        let h100 = res[0].handle.clone().unwrap();
        assert!(!res[1].found);
        // unrelated inserts and deletes must preserve the leaf identity
        let plan = coalesce(vec![
            RawAccess { key: 5i64, op: RawOp::Insert(0) },
            RawAccess { key: 320i64, op: RawOp::Delete },
        ])
        .unwrap();
        t.execute(&ctx, &plan).await;
        assert_eq!(h100.key(), &100);
        let tagged2 = t.usearch(&ctx, &Batch::from_items(vec![100i64])).await;
        assert_eq!(tagged2.items()[0].handle.as_ref().unwrap(), &h100, "leaf identity preserved");
    });
}

#[test]
fn validator_detects_corrupted_spine() {
    let r = rt(12);
    let ctx = r.ctx();
    let t = PTree::from_sorted_keys(&ctx, (0..32i64).collect(), false).unwrap();
    assert!(t.validate(true).ok());
    assert!(t.corrupt_spine_for_test());
    let rep = t.validate(true);
    assert!(!rep.ok(), "corrupted spine must be reported");
    assert!(rep.violations.iter().any(|v| v.contains("spine")), "violation names the spine: {:?}", rep.violations);
}

#[test]
fn serialize_and_dump() {
    let r = rt(13);
    let ctx = r.ctx();
    let t = PTree::from_sorted_keys(&ctx, vec![3i64, 5, 9], false).unwrap();
    assert_eq!(t.serialize_csv(), "item\n3\n5\n9\n");
    assert!(t.debug_dump().contains("leaf"));
}

// ---------------------------------------------------------------------------
// persistent execute
// ---------------------------------------------------------------------------

#[test]
fn persistent_execute_leaves_original_untouched() {
    let r = rt(14);
    r.run(|ctx| async move {
        let t = PTree::from_sorted_keys(&ctx, (0..100i64).map(|x| x * 2).collect(), false).unwrap();
        let before_csv = t.serialize_csv();
        let plan = coalesce(
            (0..50i64).map(|k| RawAccess { key: k * 4 + 1, op: RawOp::Insert(0) }).collect(),
        )
        .unwrap();
        let t2 = t.execute_persistent(&ctx, &plan).await;
        assert_eq!(t.serialize_csv(), before_csv, "original must re-serialize unchanged");
        assert!(t.validate(true).ok());
        assert!(t2.validate(true).ok());
        assert_eq!(t2.size(), 150);
        let mut expect: Vec<i64> = (0..100i64).map(|x| x * 2).collect();
        expect.extend((0..50i64).map(|k| k * 4 + 1));
        expect.sort();
        assert_eq!(t2.keys(), expect);
    });
}

#[test]
fn spine_snapshot_shares_interior() {
    let r = rt(15);
    r.run(|ctx| async move {
        let t = PTree::from_sorted_keys(&ctx, (0..256i64).collect(), false).unwrap();
        let snap = t.spine_snapshot(&ctx);
        assert!(snap.validate(true).ok());
        assert_eq!(snap.keys(), t.keys());
        let shared = pipetree::ptree::shared_node_count(&t, &snap);
        let total = pipetree::ptree::node_count(&t);
        let height = t.height() as usize;
        assert!(
            shared + 4 * (height + 1) >= total,
            "snapshot shares all but O(height) nodes: shared {shared} total {total}"
        );

        // single leaf: fresh leaf
        let one = PTree::from_sorted_keys(&ctx, vec![5i64], false).unwrap();
        let s1 = one.spine_snapshot(&ctx);
        assert_eq!(pipetree::ptree::shared_node_count(&one, &s1), 0);
        assert_eq!(s1.keys(), vec![5]);
    });
}
