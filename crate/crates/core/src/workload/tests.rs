use super::*;
use crate::store::full_scan;

fn uniform_spec(rows: usize, dims: usize, seed: u64) -> DatasetSpec {
    DatasetSpec {
        rows,
        distributions: (0..dims)
            .map(|_| ValueDistribution::Uniform { lo: 0, hi: 1_000_000 })
            .collect(),
        seed,
    }
}

#[test]
fn uniform_empirical_cdf_is_linear() {
    let table = generate_dataset(&uniform_spec(200_000, 1, 1)).unwrap();
    let mut values: Vec<u64> = table.column(0).iter().collect();
    values.sort_unstable();
    for i in (0..values.len()).step_by(1000) {
        let expect = values[i] as f64 / 1_000_000.0;
        let got = i as f64 / values.len() as f64;
        assert!((expect - got).abs() < 0.01, "at rank {i}: {expect} vs {got}");
    }
}

#[test]
fn zero_noise_correlation_copies_the_column() {
    let spec = DatasetSpec {
        rows: 5000,
        distributions: vec![
            ValueDistribution::Uniform { lo: 0, hi: 100_000 },
            ValueDistribution::Correlated { source: 0, noise: 0 },
        ],
        seed: 2,
    };
    let table = generate_dataset(&spec).unwrap();
    for row in 0..5000 {
        assert_eq!(table.value(0, row), table.value(1, row));
    }
}

#[test]
fn same_seed_same_table() {
    let spec = DatasetSpec {
        rows: 10_000,
        distributions: vec![
            ValueDistribution::Uniform { lo: 0, hi: 1 << 40 },
            ValueDistribution::Lognormal { mu: 12.0, sigma: 1.5 },
            ValueDistribution::Zipf { s: 1.2, k: 1000 },
            ValueDistribution::Gaussian { mean: 1e9, std: 1e7 },
        ],
        seed: 3,
    };
    let a = generate_dataset(&spec).unwrap();
    let b = generate_dataset(&spec).unwrap();
    for attr in 0..4 {
        for row in (0..10_000).step_by(97) {
            assert_eq!(a.value(attr, row), b.value(attr, row));
        }
    }
    let other = generate_dataset(&DatasetSpec { seed: 4, ..spec }).unwrap();
    let differs = (0..10_000).any(|row| a.value(0, row) != other.value(0, row));
    assert!(differs);
}

#[test]
fn correlated_forward_reference_is_rejected() {
    let spec = DatasetSpec {
        rows: 10,
        distributions: vec![ValueDistribution::Correlated { source: 0, noise: 1 }],
        seed: 5,
    };
    assert!(generate_dataset(&spec).is_err());
}

fn realized_selectivity(table: &Table, q: &Query) -> f64 {
    full_scan(table, q).unwrap().rows as f64 / table.row_count() as f64
}

#[test]
fn single_dimension_selectivity_hits_target() {
    let table = generate_dataset(&uniform_spec(100_000, 3, 7)).unwrap();
    let spec = WorkloadSpec {
        queries: 60,
        types: vec![QueryType {
            dims: vec![0],
            kinds: vec![],
            selectivity: 0.001,
            agg: AggregateKind::Count,
            agg_attr: None,
            weight: 1.0,
        }],
        seed: 8,
    };
    let queries = generate_workload(&spec, &table).unwrap();
    let mut realized: Vec<f64> = queries
        .iter()
        .map(|q| realized_selectivity(&table, q))
        .collect();
    realized.sort_by(|a, b| a.total_cmp(b));
    let median = realized[realized.len() / 2];
    assert!(
        (0.0005..=0.0015).contains(&median),
        "median realized selectivity {median}"
    );
    // The generated range covers about 0.1% of the quantiles.
    for q in &queries {
        assert!(q.filters[0].is_some());
        assert!(q.filters[1].is_none());
    }
}

#[test]
fn two_dimension_split_takes_square_root() {
    let table = generate_dataset(&uniform_spec(100_000, 2, 9)).unwrap();
    let spec = WorkloadSpec {
        queries: 60,
        types: vec![QueryType {
            dims: vec![0, 1],
            kinds: vec![],
            selectivity: 0.001,
            agg: AggregateKind::Count,
            agg_attr: None,
            weight: 1.0,
        }],
        seed: 10,
    };
    let queries = generate_workload(&spec, &table).unwrap();
    // Each per-dimension filter admits about sqrt(0.001) = 3.2% of rows.
    let mut fractions = Vec::new();
    for q in &queries {
        for attr in 0..2 {
            let (lo, hi) = q.filters[attr].unwrap();
            let pass = (0..table.row_count())
                .filter(|&r| {
                    let v = table.value(attr, r);
                    v >= lo && v <= hi
                })
                .count();
            fractions.push(pass as f64 / table.row_count() as f64);
        }
    }
    fractions.sort_by(|a, b| a.total_cmp(b));
    let median = fractions[fractions.len() / 2];
    assert!((median - 0.0316).abs() < 0.01, "per-dim fraction {median}");
    // Overall target within a factor of two at the median.
    let mut realized: Vec<f64> = queries
        .iter()
        .map(|q| realized_selectivity(&table, q))
        .collect();
    realized.sort_by(|a, b| a.total_cmp(b));
    let med = realized[realized.len() / 2];
    assert!((0.0005..=0.002).contains(&med), "overall realized {med}");
}

#[test]
fn equality_filters_pick_present_values() {
    let spec_data = DatasetSpec {
        rows: 50_000,
        distributions: vec![
            ValueDistribution::Zipf { s: 1.1, k: 100 },
            ValueDistribution::Uniform { lo: 0, hi: 1 << 30 },
        ],
        seed: 11,
    };
    let table = generate_dataset(&spec_data).unwrap();
    let spec = WorkloadSpec {
        queries: 40,
        types: vec![QueryType {
            dims: vec![0, 1],
            kinds: vec![FilterKind::Equality, FilterKind::Range],
            selectivity: 0.01,
            agg: AggregateKind::Sum,
            agg_attr: Some(1),
            weight: 1.0,
        }],
        seed: 12,
    };
    let queries = generate_workload(&spec, &table).unwrap();
    for q in &queries {
        let (lo, hi) = q.filters[0].unwrap();
        assert_eq!(lo, hi);
        let r = full_scan(&table, q).unwrap();
        assert!(r.rows > 0, "equality query should not be empty");
    }
}

#[test]
fn split_is_stratified_and_deterministic() {
    let table = generate_dataset(&uniform_spec(20_000, 3, 13)).unwrap();
    let spec = WorkloadSpec {
        queries: 1000,
        types: vec![
            QueryType {
                dims: vec![0],
                kinds: vec![],
                selectivity: 0.01,
                agg: AggregateKind::Count,
                agg_attr: None,
                weight: 2.0,
            },
            QueryType {
                dims: vec![1, 2],
                kinds: vec![],
                selectivity: 0.005,
                agg: AggregateKind::Count,
                agg_attr: None,
                weight: 1.0,
            },
        ],
        seed: 14,
    };
    let queries = generate_workload(&spec, &table).unwrap();
    let (train, test) = split_train_test(&queries, 15).unwrap();
    assert_eq!(train.len() + test.len(), 1000);
    assert!((train.len() as i64 - 500).abs() <= 1);
    for t in [0u32, 1] {
        assert!(train.iter().any(|q| q.type_id == Some(t)));
        assert!(test.iter().any(|q| q.type_id == Some(t)));
    }
    let (train2, test2) = split_train_test(&queries, 15).unwrap();
    assert_eq!(train, train2);
    assert_eq!(test, test2);
}

#[test]
fn workload_jsonl_roundtrip() {
    let table = generate_dataset(&uniform_spec(5000, 3, 16)).unwrap();
    let spec = WorkloadSpec {
        queries: 25,
        types: vec![QueryType {
            dims: vec![0, 2],
            kinds: vec![],
            selectivity: 0.01,
            agg: AggregateKind::Sum,
            agg_attr: Some(1),
            weight: 1.0,
        }],
        seed: 17,
    };
    let queries = generate_workload(&spec, &table).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.jsonl");
    write_workload(&path, &queries, &table).unwrap();
    let back = read_workload(&path, &table).unwrap();
    assert_eq!(back, queries);
    // The format uses attribute names.
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().next().unwrap().contains("\"d0\""));
}
