use super::*;
use crate::store::{full_scan, AggregateKind, Attribute};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

fn uniform_table(n: usize, dims: usize, hi: u64, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<u64>> = (0..dims)
        .map(|_| (0..n).map(|_| rng.gen_range(0..hi)).collect())
        .collect();
    let attrs = (0..dims).map(|i| Attribute::int(format!("d{i}"))).collect();
    Table::from_columns(attrs, cols)
}

fn random_query(table: &Table, rng: &mut ChaCha8Rng, hi: u64) -> Query {
    let dims = table.attr_count();
    let mut q = if rng.gen_bool(0.5) {
        Query::count(dims)
    } else {
        Query::sum(dims, rng.gen_range(0..dims))
    };
    let filtered = rng.gen_range(1..=dims);
    let mut chosen: Vec<usize> = (0..dims).collect();
    use rand::seq::SliceRandom;
    chosen.shuffle(rng);
    for &attr in chosen.iter().take(filtered) {
        let width = rng.gen_range(1..hi / 2);
        let lo = rng.gen_range(0..hi - width);
        q = q.with_range(attr, lo, lo + width);
    }
    q
}

#[test]
fn cell_formula_matches_hand_computation() {
    // dim0 domain [0, 9], 5 columns: value 7 lands in floor(7/10*5) = 3.
    let table = Table::from_columns(
        vec![Attribute::int("x"), Attribute::int("y")],
        vec![(0..10).collect(), (0..10).collect()],
    );
    let layout = Layout::new(vec![0, 1], vec![5], false);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    assert_eq!(index.cell_of(&[7, 0]).coords, vec![3]);
    assert_eq!(index.cell_of(&[0, 0]).coords, vec![0]);
    assert_eq!(index.cell_of(&[9, 0]).coords, vec![4]);
}

#[test]
fn build_matches_brute_force_sort_order() {
    // Two attributes, columns over x, sorted by y inside each column.
    let n = 5000;
    let table = uniform_table(n, 2, 1000, 3);
    let layout = Layout::new(vec![0, 1], vec![5], false);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let mut expect: Vec<(u64, u64, u32)> = (0..n)
        .map(|row| {
            let x = table.value(0, row);
            let col = (x as u128 * 5 / 1000) as u64;
            (col.min(4), table.value(1, row), row as u32)
        })
        .collect();
    expect.sort_unstable();
    for (phys, &(_, y, orig)) in expect.iter().enumerate() {
        assert_eq!(index.table().value(1, phys), y);
        assert_eq!(index.permutation()[orig as usize] as usize, phys);
    }
}

#[test]
fn degenerate_grid_is_a_plain_sort() {
    let n = 2000;
    let table = uniform_table(n, 3, 100_000, 7);
    let layout = Layout::new(vec![0, 1, 2], vec![1, 1], false);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let mut sorted: Vec<u64> = (0..n).map(|r| table.value(2, r)).collect();
    sorted.sort_unstable();
    for (i, v) in sorted.iter().enumerate() {
        assert_eq!(index.table().value(2, i), *v);
    }
    assert_eq!(index.cell_table().cells(), 1);
}

#[test]
fn every_row_lands_in_its_cell() {
    for flattened in [false, true] {
        let table = uniform_table(20_000, 3, 1 << 32, 11);
        let layout = Layout::new(vec![2, 0, 1], vec![7, 4], flattened);
        let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
        for row in (0..20_000).step_by(13) {
            let cell = index.cell_of_physical_row(row);
            let (s, e) = index.cell_table().range(cell);
            assert!(s <= row && row < e, "row {row} outside cell {cell}");
        }
        // The permutation is a bijection.
        let mut seen = vec![false; 20_000];
        for &p in index.permutation() {
            assert!(!seen[p as usize]);
            seen[p as usize] = true;
        }
    }
}

#[test]
fn projection_matches_brute_force_cell_intersection() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let hi = 1u64 << 20;
    let table = uniform_table(30_000, 3, hi, 23);
    for flattened in [false, true] {
        let layout = Layout::new(vec![0, 1, 2], vec![6, 9], flattened);
        let index = GridIndex::build(&table, layout.clone(), GridConfig::default()).unwrap();
        for _ in 0..200 {
            let q = random_query(&table, &mut rng, hi);
            let projected = index.project(&q);
            // Oracle: test every cell's coordinate rectangle directly.
            let mut expect = Vec::new();
            for c0 in 0..6u64 {
                for c1 in 0..9u64 {
                    let ok = [c0, c1].iter().enumerate().all(|(g, &comp)| {
                        let attr = layout.grid_dims()[g];
                        match q.filters[attr] {
                            None => true,
                            Some((lo, hi_f)) => {
                                let (dmin, dmax) = index.bucketing()[g].domain();
                                if hi_f < dmin || lo > dmax {
                                    return false;
                                }
                                let c = layout.column_counts[g];
                                let a = index.bucketing()[g].bucket(lo.max(dmin), c);
                                let b = index.bucketing()[g].bucket(hi_f.min(dmax), c);
                                comp >= a && comp <= b
                            }
                        }
                    });
                    let linear = c0 * 9 + c1;
                    if ok && index.cell_table().population(linear) > 0 {
                        expect.push(linear);
                    }
                }
            }
            let got: Vec<u64> = projected.iter().map(|(c, _)| c.linear).collect();
            assert_eq!(got, expect);
        }
    }
}

#[test]
fn refinement_agrees_with_binary_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let table = uniform_table(50_000, 2, 1 << 24, 43);
    let layout = Layout::new(vec![0, 1], vec![16], true);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let sort_col = index.table().column(1);
    for _ in 0..10_000 {
        let cell = rng.gen_range(0..16u64);
        let a = rng.gen_range(0..1u64 << 24);
        let b = a + rng.gen_range(0..1u64 << 22);
        let got = index.refine(cell, a, b);
        let (s, e) = index.cell_table().range(cell);
        let vals: Vec<u64> = (s..e).map(|i| sort_col.get(i)).collect();
        let lo = vals.partition_point(|&v| v < a);
        let hi = vals.partition_point(|&v| v <= b);
        let expect = if lo < hi {
            Some(PhysicalRange::new(s + lo, s + hi - 1, true))
        } else {
            None
        };
        assert_eq!(got, expect, "cell {cell} range [{a}, {b}]");
    }
}

#[test]
fn refinement_below_cell_minimum_is_empty() {
    let table = Table::from_columns(
        vec![Attribute::int("x"), Attribute::int("y")],
        vec![vec![5; 4], vec![2, 4, 6, 8]],
    );
    let layout = Layout::new(vec![0, 1], vec![1], false);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    assert_eq!(index.refine(0, 0, 1), None);
    let r = index.refine(0, 3, 7).unwrap();
    assert_eq!((r.start, r.end), (1, 2));
}

#[test]
fn execute_matches_full_scan_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let hi = 1u64 << 26;
    let table = uniform_table(60_000, 4, hi, 53);
    for (flattened, counts) in [(false, vec![4, 8, 3]), (true, vec![10, 5, 2])] {
        let layout = Layout::new(vec![1, 3, 0, 2], counts, flattened);
        let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
        for i in 0..300 {
            let q = random_query(&table, &mut rng, hi);
            let (got, stats) = index.execute(&q).unwrap();
            let expect = full_scan(&table, &q).unwrap();
            assert_eq!(got, expect, "query {i}");
            assert!(stats.points_scanned >= got.rows);
            if got.rows > 0 {
                assert!(stats.scan_overhead() >= 1.0);
            }
        }
    }
}

#[test]
fn execute_with_empty_filter_counts_all_rows() {
    let table = uniform_table(10_000, 3, 1000, 59);
    let layout = Layout::new(vec![0, 1, 2], vec![4, 4], true);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let q = Query::count(3);
    let (res, stats) = index.execute(&q).unwrap();
    assert_eq!(res.rows, 10_000);
    assert_eq!(res.value, 10_000);
    assert_eq!(stats.cells_visited, 16);
    assert_eq!(stats.points_scanned, 10_000);
}

#[test]
fn sort_dim_only_query_scans_exactly_the_matches() {
    // Filtering only the sort dimension means every scanned point
    // matches: refinement bounds are exact.
    let table = uniform_table(30_000, 3, 1 << 20, 61);
    let layout = Layout::new(vec![0, 1, 2], vec![5, 5], true);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let q = Query::count(3).with_range(2, 1 << 18, 1 << 19);
    let (res, stats) = index.execute(&q).unwrap();
    let expect = full_scan(&table, &q).unwrap();
    assert_eq!(res, expect);
    assert_eq!(stats.points_scanned, res.rows);
    assert_eq!(stats.exact_points, res.rows);
}

#[test]
fn out_of_domain_query_visits_nothing() {
    let table = uniform_table(5000, 2, 1000, 67);
    let layout = Layout::new(vec![0, 1], vec![8], false);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let q = Query::count(2).with_range(0, 5000, 6000);
    let (res, stats) = index.execute(&q).unwrap();
    assert_eq!(res.rows, 0);
    assert_eq!(stats.cells_visited, 0);
    assert_eq!(stats.points_scanned, 0);
}

#[test]
fn skewed_data_flattening_balances_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let dist = rand_distr::LogNormal::new(12.0, 1.8).unwrap();
    let n = 50_000;
    let cols: Vec<Vec<u64>> = (0..2)
        .map(|_| (0..n).map(|_| dist.sample(&mut rng) as u64).collect())
        .collect();
    let table = Table::from_columns(
        vec![Attribute::int("a"), Attribute::int("b")],
        cols,
    );
    let layout = Layout::new(vec![0, 1], vec![16], true);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let max_pop = (0..16).map(|c| index.cell_table().population(c)).max().unwrap();
    assert!(
        max_pop <= 2 * (n as u64 / 16),
        "flattened cells unbalanced: max {max_pop}"
    );
}

#[test]
fn snapshot_roundtrip_preserves_results_and_bytes() {
    let table = uniform_table(20_000, 3, 1 << 30, 73);
    let layout = Layout::new(vec![2, 0, 1], vec![8, 4], true);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.lgix");
    snapshot::save(&index, &path).unwrap();
    let loaded = snapshot::load(&path, &table).unwrap();
    assert_eq!(loaded.layout(), index.layout());
    assert_eq!(loaded.cell_table(), index.cell_table());
    assert_eq!(loaded.permutation(), index.permutation());
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    for _ in 0..50 {
        let q = random_query(&table, &mut rng, 1 << 30);
        let (a, _) = index.execute(&q).unwrap();
        let (b, _) = loaded.execute(&q).unwrap();
        assert_eq!(a, b);
    }
    // Same build, same bytes.
    let path2 = dir.path().join("again.lgix");
    let index2 = GridIndex::build(
        &table,
        Layout::new(vec![2, 0, 1], vec![8, 4], true),
        GridConfig::default(),
    )
    .unwrap();
    snapshot::save(&index2, &path2).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
}

#[test]
fn rejects_invalid_layouts() {
    let table = uniform_table(100, 2, 100, 83);
    for layout in [
        Layout::new(vec![0, 0], vec![4], false),
        Layout::new(vec![0], vec![], false),
        Layout::new(vec![0, 1], vec![0], false),
        Layout::new(vec![0, 1], vec![4, 4], false),
    ] {
        assert!(GridIndex::build(&table, layout, GridConfig::default()).is_err());
    }
}

#[test]
fn one_dimensional_layout_works() {
    let table = uniform_table(5000, 1, 1 << 16, 89);
    let layout = Layout::new(vec![0], vec![], false);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let q = Query::count(1).with_range(0, 1000, 30_000);
    let (res, stats) = index.execute(&q).unwrap();
    let expect = full_scan(&table, &q).unwrap();
    assert_eq!(res, expect);
    assert_eq!(stats.cells_visited, 1);
    assert_eq!(stats.points_scanned, res.rows);
}
