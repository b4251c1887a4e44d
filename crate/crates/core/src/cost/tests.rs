use super::*;
use crate::grid::GridIndex;
use crate::store::{Attribute, Table};
use rand::Rng;

fn uniform_table(n: usize, dims: usize, hi: u64, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<u64>> = (0..dims)
        .map(|_| (0..n).map(|_| rng.gen_range(0..hi)).collect())
        .collect();
    let attrs = (0..dims).map(|i| Attribute::int(format!("d{i}"))).collect();
    Table::from_columns(attrs, cols)
}

fn random_query(dims: usize, hi: u64, rng: &mut ChaCha8Rng) -> Query {
    let mut q = Query::count(dims);
    let filtered = rng.gen_range(1..=dims);
    let mut attrs: Vec<usize> = (0..dims).collect();
    attrs.shuffle(rng);
    for &attr in attrs.iter().take(filtered) {
        let width = rng.gen_range(hi / 100..hi / 4);
        let lo = rng.gen_range(0..hi - width);
        q = q.with_range(attr, lo, lo + width);
    }
    q
}

#[test]
fn decomposition_arithmetic() {
    // 1000 ns/cell projection + 2000 ns/cell refinement over 100 cells,
    // plus 10 ns/point over 1e5 points: 0.1 ms + 0.2 ms + 1 ms.
    let t = predicted_time_ns(1000.0, 2000.0, 10.0, 100, 100_000);
    assert_eq!(t, 1_300_000.0);
    // Doubling the scanned points doubles only the scan term.
    let t2 = predicted_time_ns(1000.0, 2000.0, 10.0, 100, 200_000);
    assert_eq!(t2 - t, 1_000_000.0);
}

#[test]
fn weight_extraction_identity() {
    let stats = QueryStats {
        cells_visited: 128,
        points_scanned: 5000,
        projection_ns: 64_000,
        refinement_ns: 128_000,
        scan_ns: 50_000,
        total_ns: 242_000,
        filters_sort_dim: true,
        ..Default::default()
    };
    let ex = TrainingExample::from_stats(&stats, 100);
    assert_eq!(ex.w_p, Some(500.0));
    assert_eq!(ex.w_r, Some(1000.0));
    assert_eq!(ex.w_s, Some(10.0));
    // Weights times their counts reproduce the phase times.
    assert_eq!(ex.w_s.unwrap() * 5000.0, 50_000.0);
}

#[test]
fn refinement_weight_absent_without_sort_filter() {
    let stats = QueryStats {
        cells_visited: 10,
        points_scanned: 10,
        projection_ns: 10_000,
        refinement_ns: 9_999,
        scan_ns: 10_000,
        filters_sort_dim: false,
        ..Default::default()
    };
    let ex = TrainingExample::from_stats(&stats, 100);
    assert!(ex.w_r.is_none());
}

#[test]
fn short_phases_are_dropped() {
    let stats = QueryStats {
        cells_visited: 10,
        points_scanned: 10,
        projection_ns: 50,
        refinement_ns: 0,
        scan_ns: 5000,
        filters_sort_dim: true,
        ..Default::default()
    };
    let ex = TrainingExample::from_stats(&stats, 100);
    assert!(ex.w_p.is_none());
    assert!(ex.w_r.is_none());
    assert_eq!(ex.w_s, Some(500.0));
}

fn synthetic_examples(n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let features: Vec<f64> = (0..FEATURE_NAMES.len())
                .map(|_| rng.gen_range(0.0..1000.0))
                .collect();
            TrainingExample {
                features,
                w_p: Some(700.0),
                w_r: Some(300.0),
                w_s: Some(5.0),
            }
        })
        .collect()
}

#[test]
fn constant_weights_are_learned_with_near_zero_error() {
    let examples = synthetic_examples(200, 5);
    let model = fit_weights(&examples, &ForestConfig::default()).unwrap();
    assert!(model.report.oob_rel_err_projection < 1e-9);
    assert!(model.report.oob_rel_err_scan < 1e-9);
    let (w_p, w_r, w_s) = model.weights(&examples[0].features, true);
    assert!((w_p - 700.0).abs() < 1e-6);
    assert!((w_r - 300.0).abs() < 1e-6);
    assert!((w_s - 5.0).abs() < 1e-6);
    // Refinement forced to zero when the sort dimension is unfiltered.
    let (_, w_r0, _) = model.weights(&examples[0].features, false);
    assert_eq!(w_r0, 0.0);
}

#[test]
fn too_few_examples_is_an_error() {
    let examples = synthetic_examples(10, 6);
    assert!(matches!(
        fit_weights(&examples, &ForestConfig::default()),
        Err(Error::InsufficientExamples { .. })
    ));
}

#[test]
fn random_layouts_have_sane_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let layout = random_layout(5, &mut rng);
        let mut sorted = layout.ordering.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        let total = layout.total_cells();
        assert!(total >= 1 && total <= 400_000, "total {total}");
    }
}

#[test]
fn training_data_produces_one_example_per_query_layout_pair() {
    let table = uniform_table(4000, 3, 1 << 20, 31);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let workload: Vec<Query> = (0..15)
        .map(|_| random_query(3, 1 << 20, &mut rng))
        .collect();
    let examples =
        generate_training_data(&table, &workload, 2, &GridConfig::default(), 7).unwrap();
    assert_eq!(examples.len(), 30);
    // A single-cell layout yields one visited cell per query; here just
    // sanity-check that features are populated.
    assert!(examples.iter().all(|e| e.features.len() == FEATURE_NAMES.len()));
}

#[test]
fn single_cell_layout_visits_one_cell_per_query() {
    let table = uniform_table(3000, 3, 1 << 16, 35);
    let layout = Layout::new(vec![0, 1, 2], vec![1, 1], false);
    let index = GridIndex::build(&table, layout, GridConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..20 {
        let q = random_query(3, 1 << 16, &mut rng);
        let (_, stats) = index.execute(&q).unwrap();
        assert_eq!(stats.cells_visited, 1);
    }
}

#[test]
fn full_sample_estimates_equal_measured_stats() {
    let hi = 1u64 << 24;
    let table = uniform_table(30_000, 4, hi, 39);
    let sample = SampledTable::sample(&table, 1.0, 41);
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for flattened in [true, false] {
        let layout = Layout::new(vec![3, 1, 0, 2], vec![8, 5, 3], flattened);
        let index = GridIndex::build(&table, layout.clone(), GridConfig::default()).unwrap();
        let evaluator = LayoutEvaluator::new(&sample, &layout);
        for i in 0..100 {
            let q = random_query(4, hi, &mut rng);
            let (_, measured) = index.execute(&q).unwrap();
            let est = evaluator.estimate(&q);
            assert_eq!(est.cells_visited, measured.cells_visited, "query {i}");
            assert_eq!(est.points_scanned, measured.points_scanned, "query {i}");
            assert_eq!(est.exact_points, measured.exact_points, "query {i}");
            assert_eq!(est.num_ranges, measured.num_ranges, "query {i}");
            assert_eq!(est.total_cells, measured.total_cells);
            assert!((est.cell_size_avg - measured.cell_size_avg).abs() < 1e-9);
            assert_eq!(est.cell_size_p50, measured.cell_size_p50);
            assert_eq!(est.cell_size_p90, measured.cell_size_p90);
            assert_eq!(est.cell_size_p99, measured.cell_size_p99);
        }
    }
}

#[test]
fn analytic_rectangle_count_on_uniform_grid() {
    // Equal-width grid on uniform data; a filter covering the lower half
    // of one dimension touches half the cells, up to rounding.
    let hi = 1u64 << 20;
    let table = uniform_table(20_000, 3, hi, 47);
    let layout = Layout::new(vec![0, 1, 2], vec![10, 8], false);
    let sample = SampledTable::sample(&table, 1.0, 49);
    let q = Query::count(3).with_range(0, 0, hi / 2 - 1);
    let est = estimate_stats(&sample, &layout, &q);
    let total = layout.total_cells();
    assert!(
        (est.cells_visited as i64 - (total / 2) as i64).abs() <= 8,
        "{} vs {}",
        est.cells_visited,
        total / 2
    );
}

#[test]
fn empty_rectangle_estimates_zero() {
    let table = uniform_table(5000, 2, 1000, 51);
    let layout = Layout::new(vec![0, 1], vec![8], true);
    let sample = SampledTable::sample(&table, 0.5, 53);
    let q = Query::count(2).with_range(0, 10_000, 20_000);
    let est = estimate_stats(&sample, &layout, &q);
    assert_eq!(est.cells_visited, 0);
    assert_eq!(est.points_scanned, 0);
}

#[test]
fn estimates_converge_with_sample_rate() {
    let hi = 1u64 << 22;
    let table = uniform_table(100_000, 3, hi, 57);
    let layout = Layout::new(vec![0, 1, 2], vec![12, 12], true);
    let index = GridIndex::build(&table, layout.clone(), GridConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let queries: Vec<Query> = (0..40)
        .map(|_| {
            // Around 2-5% selectivity per dimension pair.
            let mut q = Query::count(3);
            for attr in 0..2 {
                let width = hi / 6;
                let lo = rng.gen_range(0..hi - width);
                q = q.with_range(attr, lo, lo + width);
            }
            q
        })
        .collect();
    let mut last_median = f64::MAX;
    for rate in [0.01, 0.1, 1.0] {
        let sample = SampledTable::sample(&table, rate, 61);
        let evaluator = LayoutEvaluator::new(&sample, &layout);
        let mut rel = Vec::new();
        for q in &queries {
            let (_, measured) = index.execute(q).unwrap();
            let est = evaluator.estimate(q);
            if measured.points_scanned > 0 {
                rel.push(
                    (est.points_scanned as f64 - measured.points_scanned as f64).abs()
                        / measured.points_scanned as f64,
                );
            }
        }
        rel.sort_by(|a, b| a.total_cmp(b));
        let med = rel[rel.len() / 2];
        assert!(med <= last_median + 0.02, "rate {rate}: {med} vs {last_median}");
        last_median = med;
        if rate >= 1.0 {
            assert!(med < 1e-12);
        }
        if rate >= 0.01 {
            assert!(med < 0.25, "median rel err {med} at rate {rate}");
        }
    }
}

#[test]
fn save_and_load_calibration() {
    let examples = synthetic_examples(120, 63);
    let model = fit_weights(&examples, &ForestConfig { trees: 8, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calib.json");
    model.save(&path).unwrap();
    let back = WeightModel::load(&path).unwrap();
    assert_eq!(back.w_p, model.w_p);
    assert_eq!(back.feature_names, model.feature_names);
    let f = &examples[0].features;
    assert_eq!(
        back.weights(f, true),
        model.weights(f, true)
    );
}

#[test]
fn timer_resolution_is_positive_and_small() {
    let res = timer_resolution_ns();
    assert!(res >= 1);
    assert!(res < 1_000_000, "timer resolution {res} ns");
}
