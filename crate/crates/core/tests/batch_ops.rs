//! Pipelined batch operations against sequential oracles.

use pipetree::batch::{Batch, BatchNode};
use pipetree::batch_ops::{balance, filter, join_batches, merge, merge_sort, partition};
use pipetree::runtime::RecordedRt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rt(seed: u64) -> RecordedRt {
    RecordedRt::new(seed, 8)
}

#[test]
fn filter_keep_even() {
    let r = rt(0);
    let (out, _) = r.run(|ctx| async move {
        let b = Batch::from_items(vec![5i64, 2, 8, 1]);
        filter(&ctx, &b, |x: &i64| x % 2 == 0).await
    });
    out.validate().unwrap();
    assert_eq!(out.items(), vec![2, 8]);
}

#[test]
fn filter_none_and_all() {
    let r = rt(1);
    let ((none, all), _) = r.run(|ctx| async move {
        let b = Batch::from_items((0..33i64).collect());
        let none = filter(&ctx, &b, |_: &i64| false).await;
        let all = filter(&ctx, &b, |_: &i64| true).await;
        (none, all)
    });
    assert!(none.is_empty());
    assert_eq!(all.items(), (0..33i64).collect::<Vec<_>>());
    all.validate().unwrap();
}

#[test]
fn filter_matches_sequential_oracle_many_sizes_and_seeds() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let n = rng.gen_range(1..400usize);
        let items: Vec<i64> = (0..n).map(|_| rng.gen_range(-50..50)).collect();
        let m = rng.gen_range(2..7i64);
        let oracle: Vec<i64> = items.iter().copied().filter(|x| x % m == 0).collect();
        let r = rt(seed);
        let items2 = items.clone();
        let (out, _) = r.run(move |ctx| async move {
            let b = Batch::from_items(items2);
            filter(&ctx, &b, move |x: &i64| x % m == 0).await
        });
        out.validate().unwrap();
        assert_eq!(out.items(), oracle, "seed {seed} n {n}");
    }
}

#[test]
fn balance_straightens_a_path_tree() {
    // right-path tree of 9 leaves
    let mut node = BatchNode::leaf(8i64);
    for k in (0..8i64).rev() {
        node = BatchNode::internal(BatchNode::leaf(k), node);
    }
    let r = rt(2);
    let (out, _) = r.run(move |ctx| async move {
        balance(&ctx, &Batch::from_root(Some(node))).await
    });
    out.validate().unwrap();
    assert_eq!(out.items(), (0..9i64).collect::<Vec<_>>());
    assert_eq!(out.height(), 4); // complete 9-leaf tree
}

#[test]
fn balance_identity_on_complete_tree_and_single_leaf() {
    let r = rt(3);
    let ((a, b), _) = r.run(|ctx| async move {
        let t = Batch::from_sorted((0..16i64).collect()).unwrap();
        let a = balance(&ctx, &t).await;
        let s = Batch::from_sorted(vec![7i64]).unwrap();
        let b = balance(&ctx, &s).await;
        (a, b)
    });
    assert_eq!(a.items(), (0..16i64).collect::<Vec<_>>());
    assert_eq!(b.items(), vec![7]);
}

#[test]
fn partition_basic_example() {
    let r = rt(4);
    let (parts, _) = r.run(|ctx| async move {
        let t = Batch::from_sorted((1..=10i64).collect()).unwrap();
        let p = Batch::from_sorted(vec![3i64, 7]).unwrap();
        partition(&ctx, &t, &p).await
    });
    assert_eq!(parts.len(), 3);
    assert_eq!(parts[0].items(), vec![1, 2, 3]);
    assert_eq!(parts[1].items(), vec![4, 5, 6, 7]);
    assert_eq!(parts[2].items(), vec![8, 9, 10]);
    for p in &parts {
        p.validate_sorted().unwrap();
    }
}

#[test]
fn partition_empty_input_and_empty_pivots() {
    let r = rt(5);
    let ((empty_t, no_pivots), _) = r.run(|ctx| async move {
        let t = Batch::<i64>::empty();
        let p = Batch::from_sorted(vec![3i64, 7]).unwrap();
        let a = partition(&ctx, &t, &p).await;
        let t2 = Batch::from_sorted((0..9i64).collect()).unwrap();
        let b = partition(&ctx, &t2, &Batch::empty()).await;
        (a, b)
    });
    assert_eq!(empty_t.len(), 3);
    assert!(empty_t.iter().all(|b| b.is_empty()));
    assert_eq!(no_pivots.len(), 1);
    assert_eq!(no_pivots[0].items(), (0..9i64).collect::<Vec<_>>());
}

#[test]
fn partition_matches_scan_oracle() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
        let n = rng.gen_range(0..300usize);
        let k = rng.gen_range(0..40usize);
        let mut items: Vec<i64> = (0..1000).collect();
        partial_shuffle(&mut items, &mut rng);
        let mut t_items: Vec<i64> = items[..n].to_vec();
        t_items.sort();
        let mut p_items: Vec<i64> = items[n..n + k].to_vec();
        p_items.sort();
        // sequential scan oracle
        let mut oracle: Vec<Vec<i64>> = vec![Vec::new(); k + 1];
        for &x in &t_items {
            let idx = p_items.iter().position(|&p| x <= p).unwrap_or(k);
            oracle[idx].push(x);
        }
        let r = rt(seed);
        let (t2, p2) = (t_items.clone(), p_items.clone());
        let (parts, _) = r.run(move |ctx| async move {
            let t = Batch::from_sorted(t2).unwrap();
            let p = Batch::from_sorted(p2).unwrap();
            partition(&ctx, &t, &p).await
        });
        assert_eq!(parts.len(), k + 1);
        for (i, part) in parts.iter().enumerate() {
            part.validate().unwrap();
            assert_eq!(part.items(), oracle[i], "seed {seed} part {i}");
        }
    }
}

fn partial_shuffle(v: &mut [i64], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

#[test]
fn join_batches_concatenates() {
    let r = rt(6);
    let (out, _) = r.run(|ctx| async move {
        let parts = vec![
            Batch::from_sorted(vec![1i64, 2]).unwrap(),
            Batch::empty(),
            Batch::from_sorted(vec![3i64]).unwrap(),
        ];
        join_batches(&ctx, &Batch::from_items(parts)).await
    });
    out.validate().unwrap();
    assert_eq!(out.items(), vec![1, 2, 3]);
}

#[test]
fn join_batches_all_empty_and_single() {
    let r = rt(7);
    let ((a, b), _) = r.run(|ctx| async move {
        let parts: Vec<Batch<i64>> = vec![Batch::empty(), Batch::empty()];
        let a = join_batches(&ctx, &Batch::from_items(parts)).await;
        let one = vec![Batch::from_sorted(vec![4i64, 9]).unwrap()];
        let b = join_batches(&ctx, &Batch::from_items(one)).await;
        (a, b)
    });
    assert!(a.is_empty());
    assert_eq!(b.items(), vec![4, 9]);
    b.validate().unwrap();
}

#[test]
fn merge_basic_and_duplicates() {
    let r = rt(8);
    let ((m1, m2, m3), _) = r.run(|ctx| async move {
        let a = Batch::from_sorted(vec![1i64, 3, 5]).unwrap();
        let b = Batch::from_sorted(vec![2i64, 3, 4]).unwrap();
        let m1 = merge(&ctx, &a, &b, |x, _| *x).await;
        let m2 = merge(&ctx, &Batch::empty(), &b, |x, _| *x).await;
        let a7 = Batch::from_sorted(vec![7i64]).unwrap();
        let b7 = Batch::from_sorted(vec![7i64]).unwrap();
        let m3 = merge(&ctx, &a7, &b7, |x, _| *x).await;
        (m1, m2, m3)
    });
    assert_eq!(m1.items(), vec![1, 2, 3, 4, 5]);
    m1.validate_sorted().unwrap();
    assert_eq!(m2.items(), vec![2, 3, 4]);
    assert_eq!(m3.items(), vec![7]);
}

#[test]
fn merge_matches_sequential_oracle() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 900);
        let na = rng.gen_range(0..200usize);
        let nb = rng.gen_range(0..200usize);
        let mut pool: Vec<i64> = (0..600).collect();
        partial_shuffle(&mut pool, &mut rng);
        let mut a: Vec<i64> = pool[..na].to_vec();
        a.sort();
        let mut pool2: Vec<i64> = (0..600).collect();
        partial_shuffle(&mut pool2, &mut rng);
        let mut b: Vec<i64> = pool2[..nb].to_vec();
        b.sort();
        let mut oracle: Vec<i64> = a.iter().chain(b.iter()).copied().collect();
        oracle.sort();
        oracle.dedup();
        let r = rt(seed);
        let (a2, b2) = (a.clone(), b.clone());
        let (m, _) = r.run(move |ctx| async move {
            let ba = Batch::from_sorted(a2).unwrap();
            let bb = Batch::from_sorted(b2).unwrap();
            merge(&ctx, &ba, &bb, |x, _| *x).await
        });
        m.validate_sorted().unwrap();
        assert_eq!(m.items(), oracle, "seed {seed} na {na} nb {nb}");
    }
}

#[test]
fn merge_sort_small_and_oracle() {
    let r = rt(9);
    let ((s1, s2), _) = r.run(|ctx| async move {
        let b = Batch::from_items(vec![3i64, 1, 2]);
        let s1 = merge_sort(&ctx, &b, |x, _| *x).await;
        let sorted = Batch::from_items((0..20i64).collect());
        let s2 = merge_sort(&ctx, &sorted, |x, _| *x).await;
        (s1, s2)
    });
    assert_eq!(s1.items(), vec![1, 2, 3]);
    assert_eq!(s2.items(), (0..20i64).collect::<Vec<_>>());

    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1300);
        let n = rng.gen_range(1..300usize);
        let items: Vec<i64> = (0..n).map(|_| rng.gen_range(-100..100)).collect();
        let mut oracle = items.clone();
        oracle.sort();
        oracle.dedup();
        let r = rt(seed);
        let items2 = items.clone();
        let (out, _) = r.run(move |ctx| async move {
            merge_sort(&ctx, &Batch::from_items(items2), |x, _| *x).await
        });
        out.validate_sorted().unwrap();
        assert_eq!(out.items(), oracle, "seed {seed}");
    }
}

#[test]
fn merge_sort_reverse_sorted_span_bound() {
    // recorded span of sorting n reverse-sorted items stays within
    // C·(log2 n)^2
    let n = 1024usize;
    let r = RecordedRt::new(0, 1024);
    let items: Vec<i64> = (0..n as i64).rev().collect();
    let (out, rec) = r.run(move |ctx| async move {
        merge_sort(&ctx, &Batch::from_items(items), |x, _| *x).await
    });
    assert_eq!(out.items(), (0..n as i64).collect::<Vec<_>>());
    let log2 = (n as f64).log2();
    let bound = 60.0 * log2 * log2;
    assert!(
        (rec.span as f64) <= bound,
        "merge-sort span {} exceeds C(log n)^2 = {bound}",
        rec.span
    );
}
