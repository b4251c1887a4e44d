use super::*;
use crate::error::Error;
use crate::store::{full_scan, Attribute};
use crate::workload::{generate_dataset, DatasetSpec, ValueDistribution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Duration;

fn uniform_table(n: usize, dims: usize, hi: u64, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<u64>> = (0..dims)
        .map(|_| (0..n).map(|_| rng.gen_range(0..hi)).collect())
        .collect();
    let attrs = (0..dims).map(|i| Attribute::int(format!("d{i}"))).collect();
    Table::from_columns(attrs, cols)
}

fn skewed_table(n: usize, seed: u64) -> Table {
    let spec = DatasetSpec {
        rows: n,
        distributions: vec![
            ValueDistribution::Lognormal { mu: 10.0, sigma: 2.0 },
            ValueDistribution::Zipf { s: 1.2, k: 200 },
            ValueDistribution::Uniform { lo: 0, hi: 1 << 30 },
        ],
        seed,
    };
    generate_dataset(&spec).unwrap()
}

fn random_queries(table: &Table, count: usize, seed: u64) -> Vec<Query> {
    let d = table.attr_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sorted: Vec<Vec<u64>> = Vec::new();
    for attr in 0..d {
        let mut v: Vec<u64> = table.column(attr).iter().collect();
        v.sort_unstable();
        sorted.push(v);
    }
    let n = table.row_count();
    (0..count)
        .map(|_| {
            let mut q = if rng.gen_bool(0.5) {
                Query::count(d)
            } else {
                Query::sum(d, rng.gen_range(0..d))
            };
            let filtered = rng.gen_range(1..=d);
            let mut attrs: Vec<usize> = (0..d).collect();
            attrs.shuffle(&mut rng);
            for &attr in attrs.iter().take(filtered) {
                if rng.gen_bool(0.15) {
                    let v = sorted[attr][rng.gen_range(0..n)];
                    q = q.with_range(attr, v, v);
                } else {
                    let width = rng.gen_range(0.001..0.2f64);
                    let start = rng.gen_range(0.0..1.0 - width);
                    let lo = sorted[attr][(start * (n - 1) as f64) as usize];
                    let hi = sorted[attr][((start + width) * (n - 1) as f64) as usize];
                    q = q.with_range(attr, lo, hi.max(lo));
                }
            }
            q
        })
        .collect()
}

fn check_against_oracle(index: &dyn MultiDimIndex, table: &Table, queries: &[Query]) {
    for (i, q) in queries.iter().enumerate() {
        let (got, stats) = index.execute(q).unwrap();
        let expect = full_scan(table, q).unwrap();
        assert_eq!(got, expect, "{} query {i}", index.name());
        assert!(
            stats.points_scanned >= got.rows,
            "{} scanned fewer points than it matched",
            index.name()
        );
    }
}

#[test]
fn all_baselines_agree_with_full_scan_on_uniform_data() {
    let table = uniform_table(40_000, 3, 1 << 30, 101);
    let queries = random_queries(&table, 120, 102);
    let order = vec![0usize, 1, 2];
    let indexes: Vec<Box<dyn MultiDimIndex>> = vec![
        Box::new(FullScanIndex::new(table.clone())),
        Box::new(ClusteredIndex::build(&table, 0, 512)),
        Box::new(ZOrderIndex::build(&table, order.clone(), 512)),
        Box::new(UbTree::build(&table, order.clone(), 512)),
        Box::new(Hyperoctree::build(&table, 512).unwrap()),
        Box::new(KdTree::build(&table, order.clone(), 512)),
        Box::new(GridFile::build(&table, 512, Duration::from_secs(60)).unwrap()),
    ];
    for index in &indexes {
        check_against_oracle(index.as_ref(), &table, &queries);
    }
}

#[test]
fn all_baselines_agree_with_full_scan_on_skewed_data() {
    let table = skewed_table(30_000, 103);
    let queries = random_queries(&table, 80, 104);
    let order = vec![2usize, 0, 1];
    let indexes: Vec<Box<dyn MultiDimIndex>> = vec![
        Box::new(ClusteredIndex::build(&table, 2, 256)),
        Box::new(ZOrderIndex::build(&table, order.clone(), 1024)),
        Box::new(UbTree::build(&table, order.clone(), 1024)),
        Box::new(Hyperoctree::build(&table, 1024).unwrap()),
        Box::new(KdTree::build(&table, order.clone(), 1024)),
        Box::new(GridFile::build(&table, 1024, Duration::from_secs(60)).unwrap()),
    ];
    for index in &indexes {
        check_against_oracle(index.as_ref(), &table, &queries);
    }
}

#[test]
fn ubtree_never_scans_more_than_zorder() {
    let table = uniform_table(50_000, 4, 1 << 24, 105);
    let queries = random_queries(&table, 150, 106);
    let order = vec![3usize, 1, 0, 2];
    let z = ZOrderIndex::build(&table, order.clone(), 512);
    let ub = UbTree::build(&table, order, 512);
    let mut some_jump_saved = false;
    for q in &queries {
        let (_, zs) = z.execute(q).unwrap();
        let (_, us) = ub.execute(q).unwrap();
        assert!(
            us.points_scanned <= zs.points_scanned,
            "ubtree {} > zorder {}",
            us.points_scanned,
            zs.points_scanned
        );
        if us.points_scanned < zs.points_scanned {
            some_jump_saved = true;
        }
    }
    assert!(some_jump_saved, "skip-ahead never saved anything");
}

#[test]
fn clustered_without_sort_attr_scans_everything() {
    let table = uniform_table(10_000, 2, 1 << 20, 107);
    let index = ClusteredIndex::build(&table, 0, 128);
    let q = Query::count(2).with_range(1, 0, 1 << 19);
    let (res, stats) = index.execute(&q).unwrap();
    assert_eq!(stats.points_scanned, 10_000);
    assert_eq!(res, full_scan(&table, &q).unwrap());
    // With the sort attribute filtered the scan narrows.
    let q2 = Query::count(2).with_range(0, 0, 1 << 10);
    let (res2, stats2) = index.execute(&q2).unwrap();
    assert_eq!(res2, full_scan(&table, &q2).unwrap());
    assert_eq!(stats2.points_scanned, res2.rows);
}

#[test]
fn octree_small_input_is_one_leaf() {
    let table = uniform_table(100, 3, 1000, 108);
    let tree = Hyperoctree::build(&table, 512).unwrap();
    assert_eq!(tree.build_stats().pages, 1);
    assert_eq!(tree.build_stats().depth, 0);
}

#[test]
fn octree_leaves_respect_page_size_and_tile_rows() {
    let table = uniform_table(20_000, 3, 1 << 28, 109);
    let tree = Hyperoctree::build(&table, 256).unwrap();
    let mut covered = vec![false; 20_000];
    for (s, e) in tree.leaf_ranges() {
        assert!(e - s <= 256, "leaf of {} rows", e - s);
        for slot in &mut covered[s..e] {
            assert!(!*slot, "row covered twice");
            *slot = true;
        }
    }
    assert!(covered.iter().all(|&c| c));
}

#[test]
fn kdtree_on_power_of_two_distinct_points_is_balanced() {
    // 2^k distinct values per dimension, page size 1: every split is an
    // exact halving, so the tree has depth k.
    let k = 7u32;
    let n = 1usize << k;
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut a: Vec<u64> = (0..n as u64).collect();
    let mut b: Vec<u64> = (0..n as u64).map(|v| v * 3 + 1).collect();
    a.shuffle(&mut rng);
    b.shuffle(&mut rng);
    let table = Table::from_columns(
        vec![Attribute::int("a"), Attribute::int("b")],
        vec![a, b],
    );
    let tree = KdTree::build(&table, vec![0, 1], 1);
    assert_eq!(tree.depth(), k);
    let leaves = tree.leaf_ranges();
    assert_eq!(leaves.len(), n);
    assert!(leaves.iter().all(|(s, e)| e - s == 1));
}

#[test]
fn kdtree_drops_constant_dimensions() {
    let table = Table::from_columns(
        vec![Attribute::int("const"), Attribute::int("x")],
        vec![vec![7; 4096], (0..4096).collect()],
    );
    let tree = KdTree::build(&table, vec![0, 1], 64);
    // Splitting only on x still has to terminate and stay page-bounded.
    for (s, e) in tree.leaf_ranges() {
        assert!(e - s <= 64);
    }
    let q = Query::count(2).with_range(1, 100, 900);
    let (res, _) = tree.execute(&q).unwrap();
    assert_eq!(res, full_scan(&table, &q).unwrap());
}

#[test]
fn kdtree_leaves_tile_rows() {
    let table = skewed_table(15_000, 111);
    let tree = KdTree::build(&table, vec![0, 1, 2], 128);
    let mut covered = vec![false; 15_000];
    for (s, e) in tree.leaf_ranges() {
        assert!(e - s <= 128);
        for slot in &mut covered[s..e] {
            assert!(!*slot);
            *slot = true;
        }
    }
    assert!(covered.iter().all(|&c| c));
}

#[test]
fn gridfile_buckets_stay_page_bounded_on_uniform_data() {
    let table = uniform_table(20_000, 2, 1 << 20, 112);
    let gf = GridFile::build(&table, 256, Duration::from_secs(60)).unwrap();
    let mut covered = vec![false; 20_000];
    for (s, e) in gf.bucket_ranges() {
        assert!(e - s <= 256, "bucket of {} rows", e - s);
        for slot in &mut covered[s..e] {
            assert!(!*slot);
            *slot = true;
        }
    }
    assert!(covered.iter().all(|&c| c));
}

#[test]
fn gridfile_build_budget_aborts() {
    let table = uniform_table(50_000, 3, 1 << 30, 113);
    match GridFile::build(&table, 64, Duration::from_nanos(1)) {
        Err(Error::BuildBudget(msg)) => assert!(msg.contains("grid file")),
        other => panic!("expected a budget abort, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn quantizer_clamps_and_orders() {
    let table = uniform_table(5000, 2, 1 << 20, 114);
    let quant = Quantizer::fit(&table, 10);
    let col: Vec<u64> = table.column(0).iter().collect();
    let min = *col.iter().min().unwrap();
    let max = *col.iter().max().unwrap();
    assert_eq!(quant.bucket(0, min), 0);
    assert_eq!(quant.bucket(0, 0), 0);
    assert_eq!(quant.bucket(0, max), 1023);
    assert_eq!(quant.bucket(0, u64::MAX), 1023);
    let mid = min + (max - min) / 2;
    let b = quant.bucket(0, mid);
    assert!((b as i64 - 512).abs() < 8, "midpoint bucket {b}");
    for (a, b) in [(min, mid), (mid, max)] {
        assert!(quant.bucket(0, a) <= quant.bucket(0, b));
    }
}

#[test]
fn empty_filter_queries_work_everywhere() {
    let table = uniform_table(5000, 2, 1 << 16, 115);
    let q = Query::count(2);
    let order = vec![0usize, 1];
    let indexes: Vec<Box<dyn MultiDimIndex>> = vec![
        Box::new(FullScanIndex::new(table.clone())),
        Box::new(ClusteredIndex::build(&table, 1, 64)),
        Box::new(ZOrderIndex::build(&table, order.clone(), 256)),
        Box::new(UbTree::build(&table, order.clone(), 256)),
        Box::new(Hyperoctree::build(&table, 256).unwrap()),
        Box::new(KdTree::build(&table, order, 256)),
        Box::new(GridFile::build(&table, 256, Duration::from_secs(60)).unwrap()),
    ];
    for index in &indexes {
        let (res, _) = index.execute(&q).unwrap();
        assert_eq!(res.rows, 5000, "{}", index.name());
    }
}

#[test]
fn out_of_domain_queries_return_empty() {
    let table = uniform_table(5000, 2, 1000, 116);
    let q = Query::count(2).with_range(0, 5_000_000, 6_000_000);
    let order = vec![0usize, 1];
    let indexes: Vec<Box<dyn MultiDimIndex>> = vec![
        Box::new(ClusteredIndex::build(&table, 0, 64)),
        Box::new(ZOrderIndex::build(&table, order.clone(), 256)),
        Box::new(UbTree::build(&table, order.clone(), 256)),
        Box::new(Hyperoctree::build(&table, 256).unwrap()),
        Box::new(KdTree::build(&table, order, 256)),
        Box::new(GridFile::build(&table, 256, Duration::from_secs(60)).unwrap()),
    ];
    for index in &indexes {
        let (res, stats) = index.execute(&q).unwrap();
        assert_eq!(res.rows, 0, "{}", index.name());
        assert_eq!(stats.points_scanned, 0, "{}", index.name());
    }
}
