//! Query-time cost model.
//!
//! Query time decomposes as `w_p * N_c + w_r * N_c + w_s * N_s`: a
//! per-cell projection cost, a per-cell refinement cost (zero when the
//! query does not filter the sort dimension), and a per-point scan cost.
//! The weights vary with the dataset, query, and layout, so each is
//! predicted by a regression forest over statistics measured (or, inside
//! the optimizer, estimated from a sample) for the query/layout pair.
//! Calibration runs a workload over a handful of random layouts on
//! synthetic data, once per machine.

mod forest;

pub use forest::{ForestConfig, RandomForest, RegressionTree, TreeNode};

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridConfig, GridIndex, Layout};
use crate::store::{Query, ScanStats, Table};
use crate::Rmi64;

pub const FEATURE_NAMES: [&str; 11] = [
    "cells_visited",
    "points_scanned",
    "total_cells",
    "cell_size_avg",
    "cell_size_p50",
    "cell_size_p90",
    "cell_size_p99",
    "dims_filtered",
    "avg_visited_per_cell",
    "exact_points",
    "avg_run_len",
];

/// Everything observed about one query execution: the decomposition
/// counts, the weight-model features, and per-phase wall-clock times.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QueryStats {
    pub cells_visited: u64,
    pub points_scanned: u64,
    pub result_rows: u64,
    pub total_cells: u64,
    pub cell_size_avg: f64,
    pub cell_size_p50: f64,
    pub cell_size_p90: f64,
    pub cell_size_p99: f64,
    pub dims_filtered: u32,
    pub avg_visited_per_cell: f64,
    pub exact_points: u64,
    pub num_ranges: u64,
    pub avg_run_len: f64,
    pub filters_sort_dim: bool,
    pub projection_ns: u64,
    pub refinement_ns: u64,
    pub scan_ns: u64,
    pub total_ns: u64,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * p).floor() as usize;
    sorted[idx]
}

/// Quantile of `counts` (ascending) padded with `zeros` leading zeros.
fn quantile_with_zeros(counts_asc: &[f64], zeros: usize, total: usize, p: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let idx = ((total - 1) as f64 * p).floor() as usize;
    if idx < zeros {
        0.0
    } else {
        counts_asc[idx - zeros]
    }
}

impl QueryStats {
    /// Assemble from the three timed phases of a grid-index execution.
    #[allow(clippy::too_many_arguments)]
    pub fn from_phases(
        n_c: u64,
        scan: &ScanStats,
        result_rows: u64,
        total_cells: u64,
        sizes: &mut Vec<u64>,
        dims_filtered: u32,
        filters_sort_dim: bool,
        marks: [Instant; 4],
    ) -> Self {
        let [t0, t1, t2, t3] = marks;
        let mut stats = QueryStats {
            cells_visited: n_c,
            points_scanned: scan.points_scanned,
            result_rows,
            total_cells,
            dims_filtered,
            exact_points: scan.exact_points,
            num_ranges: scan.ranges,
            filters_sort_dim,
            projection_ns: (t1 - t0).as_nanos() as u64,
            refinement_ns: (t2 - t1).as_nanos() as u64,
            scan_ns: (t3 - t2).as_nanos() as u64,
            total_ns: (t3 - t0).as_nanos() as u64,
            ..Default::default()
        };
        stats.fill_cell_sizes(sizes);
        stats.fill_derived();
        stats
    }

    /// Assemble for an index with a single index phase followed by the
    /// scan (the baselines).
    pub fn from_index_scan(
        visited: u64,
        scan: &ScanStats,
        result_rows: u64,
        total_cells: u64,
        sizes: &mut Vec<u64>,
        dims_filtered: u32,
        marks: [Instant; 3],
    ) -> Self {
        let [t0, t1, t2] = marks;
        let mut stats = QueryStats {
            cells_visited: visited,
            points_scanned: scan.points_scanned,
            result_rows,
            total_cells,
            dims_filtered,
            exact_points: scan.exact_points,
            num_ranges: scan.ranges,
            filters_sort_dim: false,
            projection_ns: (t1 - t0).as_nanos() as u64,
            refinement_ns: 0,
            scan_ns: (t2 - t1).as_nanos() as u64,
            total_ns: (t2 - t0).as_nanos() as u64,
            ..Default::default()
        };
        stats.fill_cell_sizes(sizes);
        stats.fill_derived();
        stats
    }

    fn fill_cell_sizes(&mut self, sizes: &mut Vec<u64>) {
        if sizes.is_empty() {
            return;
        }
        sizes.sort_unstable();
        let total: u64 = sizes.iter().sum();
        let as_f: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
        self.cell_size_avg = total as f64 / sizes.len() as f64;
        self.cell_size_p50 = quantile_sorted(&as_f, 0.50);
        self.cell_size_p90 = quantile_sorted(&as_f, 0.90);
        self.cell_size_p99 = quantile_sorted(&as_f, 0.99);
    }

    fn fill_derived(&mut self) {
        self.avg_visited_per_cell = if self.cells_visited > 0 {
            self.points_scanned as f64 / self.cells_visited as f64
        } else {
            0.0
        };
        self.avg_run_len = if self.num_ranges > 0 {
            self.points_scanned as f64 / self.num_ranges as f64
        } else {
            0.0
        };
    }

    /// Index time: everything before the first data-column touch of the
    /// scan.
    pub fn index_ns(&self) -> u64 {
        self.projection_ns + self.refinement_ns
    }

    /// Scan overhead: points scanned per matching row.
    pub fn scan_overhead(&self) -> f64 {
        if self.result_rows == 0 {
            f64::NAN
        } else {
            self.points_scanned as f64 / self.result_rows as f64
        }
    }

    pub fn features(&self) -> [f64; FEATURE_NAMES.len()] {
        [
            self.cells_visited as f64,
            self.points_scanned as f64,
            self.total_cells as f64,
            self.cell_size_avg,
            self.cell_size_p50,
            self.cell_size_p90,
            self.cell_size_p99,
            self.dims_filtered as f64,
            self.avg_visited_per_cell,
            self.exact_points as f64,
            self.avg_run_len,
        ]
    }
}

/// One (query, layout) observation: features plus the measured weights.
/// A weight is absent when its denominator is zero, its phase did not
/// run, or the phase time was too close to the timer resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    pub w_p: Option<f64>,
    pub w_r: Option<f64>,
    pub w_s: Option<f64>,
}

impl TrainingExample {
    pub fn from_stats(stats: &QueryStats, timer_floor_ns: u64) -> Self {
        let usable = |ns: u64| ns >= timer_floor_ns;
        let w_p = (stats.cells_visited > 0 && usable(stats.projection_ns))
            .then(|| stats.projection_ns as f64 / stats.cells_visited as f64);
        let w_r = (stats.filters_sort_dim
            && stats.cells_visited > 0
            && usable(stats.refinement_ns))
        .then(|| stats.refinement_ns as f64 / stats.cells_visited as f64);
        let w_s = (stats.points_scanned > 0 && usable(stats.scan_ns))
            .then(|| stats.scan_ns as f64 / stats.points_scanned as f64);
        TrainingExample {
            features: stats.features().to_vec(),
            w_p,
            w_r,
            w_s,
        }
    }
}

/// Smallest observable interval of the monotonic clock, in nanoseconds.
pub fn timer_resolution_ns() -> u64 {
    let mut best = u64::MAX;
    for _ in 0..1000 {
        let a = Instant::now();
        let mut b = Instant::now();
        let mut spins = 0;
        while b <= a && spins < 10_000 {
            b = Instant::now();
            spins += 1;
        }
        if b > a {
            best = best.min((b - a).as_nanos() as u64);
        }
    }
    best.clamp(1, 1_000_000)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub examples_projection: usize,
    pub examples_refinement: usize,
    pub examples_scan: usize,
    pub oob_rel_err_projection: f64,
    pub oob_rel_err_refinement: f64,
    pub oob_rel_err_scan: f64,
    pub timer_resolution_ns: u64,
}

/// The calibrated cost model: one weight regressor per term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightModel {
    pub version: u32,
    pub feature_names: Vec<String>,
    pub w_p: RandomForest<f64>,
    pub w_r: RandomForest<f64>,
    pub w_s: RandomForest<f64>,
    pub report: CalibrationReport,
}

impl WeightModel {
    /// Predicted weights (ns/cell, ns/cell, ns/point), clamped to be
    /// non-negative; `w_r` is zero when the query skips refinement.
    pub fn weights(&self, features: &[f64], filters_sort_dim: bool) -> (f64, f64, f64) {
        let w_p = self.w_p.predict(features).max(0.0);
        let w_r = if filters_sort_dim {
            self.w_r.predict(features).max(0.0)
        } else {
            0.0
        };
        let w_s = self.w_s.predict(features).max(0.0);
        (w_p, w_r, w_s)
    }

    /// Predicted query time in nanoseconds for a stats vector.
    pub fn predict_ns(&self, stats: &QueryStats) -> f64 {
        let features = stats.features();
        let (w_p, w_r, w_s) = self.weights(&features, stats.filters_sort_dim);
        predicted_time_ns(w_p, w_r, w_s, stats.cells_visited, stats.points_scanned)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let model: WeightModel = serde_json::from_reader(std::io::BufReader::new(file))?;
        if model.version != 1 {
            return Err(Error::Format(format!(
                "unsupported calibration version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

/// The time decomposition itself.
pub fn predicted_time_ns(w_p: f64, w_r: f64, w_s: f64, n_c: u64, n_s: u64) -> f64 {
    w_p * n_c as f64 + w_r * n_c as f64 + w_s * n_s as f64
}

/// Random layout for calibration: a random attribute ordering and
/// column counts hitting a total-cell target drawn log-uniformly from
/// `[10, 10^5]`.
pub fn random_layout<R: Rng>(dims: usize, rng: &mut R) -> Layout {
    let mut ordering: Vec<usize> = (0..dims).collect();
    ordering.shuffle(rng);
    let g = dims - 1;
    if g == 0 {
        return Layout::new(ordering, Vec::new(), true);
    }
    let target_log10 = rng.gen_range(1.0..5.0f64);
    let mut weights: Vec<f64> = (0..g).map(|_| rng.gen_range(0.2..1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let counts: Vec<u64> = weights
        .iter()
        .map(|w| 10f64.powf(target_log10 * w).round().max(1.0) as u64)
        .collect();
    Layout::new(ordering, counts, true)
}

/// Run `workload` over `num_layouts` random layouts of `table`, one
/// training example per (query, layout) pair.
pub fn generate_training_data(
    table: &Table,
    workload: &[Query],
    num_layouts: usize,
    grid_cfg: &GridConfig,
    seed: u64,
) -> Result<Vec<TrainingExample>> {
    assert!(num_layouts >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = 2 * timer_resolution_ns();
    let mut examples = Vec::with_capacity(num_layouts * workload.len());
    for _ in 0..num_layouts {
        let layout = random_layout(table.attr_count(), &mut rng);
        let index = GridIndex::build(table, layout, grid_cfg.clone())?;
        // One untimed pass warms the caches.
        for q in workload {
            index.execute(q)?;
        }
        for q in workload {
            let (_, stats) = index.execute(q)?;
            examples.push(TrainingExample::from_stats(&stats, floor));
        }
    }
    Ok(examples)
}

pub const MIN_EXAMPLES_PER_TARGET: usize = 50;

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    xs[xs.len() / 2]
}

fn fit_one_target(
    examples: &[TrainingExample],
    pick: impl Fn(&TrainingExample) -> Option<f64>,
    name: &'static str,
    cfg: &ForestConfig,
) -> Result<(RandomForest<f64>, usize, f64)> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for ex in examples {
        if let Some(y) = pick(ex) {
            features.extend_from_slice(&ex.features);
            targets.push(y);
        }
    }
    let n = targets.len();
    if n < MIN_EXAMPLES_PER_TARGET {
        return Err(Error::InsufficientExamples {
            target: name,
            need: MIN_EXAMPLES_PER_TARGET,
            got: n,
        });
    }
    let (forest, bags) = RandomForest::fit(&features, FEATURE_NAMES.len(), &targets, cfg);
    // Out-of-bag relative error: predict each example with only the
    // trees whose bootstrap sample excluded it.
    let mut rel_errs = Vec::new();
    for i in 0..n {
        let x = &features[i * FEATURE_NAMES.len()..(i + 1) * FEATURE_NAMES.len()];
        let mut sum = 0.0;
        let mut count = 0usize;
        for (tree, bag) in forest.trees().iter().zip(&bags) {
            if bag[i] == 0 {
                sum += tree.predict(x);
                count += 1;
            }
        }
        if count > 0 && targets[i] > 0.0 {
            let pred = sum / count as f64;
            rel_errs.push((pred - targets[i]).abs() / targets[i]);
        }
    }
    Ok((forest, n, median(rel_errs)))
}

/// Fit the three weight regressors from calibration examples.
pub fn fit_weights(examples: &[TrainingExample], cfg: &ForestConfig) -> Result<WeightModel> {
    let (w_p, n_p, e_p) = fit_one_target(examples, |e| e.w_p, "w_p", cfg)?;
    let (w_r, n_r, e_r) = fit_one_target(examples, |e| e.w_r, "w_r", cfg)?;
    let (w_s, n_s, e_s) = fit_one_target(examples, |e| e.w_s, "w_s", cfg)?;
    Ok(WeightModel {
        version: 1,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        w_p,
        w_r,
        w_s,
        report: CalibrationReport {
            examples_projection: n_p,
            examples_refinement: n_r,
            examples_scan: n_s,
            oob_rel_err_projection: e_p,
            oob_rel_err_refinement: e_r,
            oob_rel_err_scan: e_s,
            timer_resolution_ns: timer_resolution_ns(),
        },
    })
}

/// Uniform sample of a table with per-dimension CDF models trained on
/// the sample, shared by every cost evaluation in the optimizer.
#[derive(Debug, Clone)]
pub struct SampledTable {
    /// Achieved sampling rate (sampled rows / total rows).
    pub rate: f64,
    pub raw: Vec<Vec<u64>>,
    pub cdf: Vec<Vec<f64>>,
    pub rmis: Vec<Rmi64>,
    pub total_rows: usize,
}

impl SampledTable {
    /// Uniform sample without replacement, kept in original row order.
    pub fn sample(table: &Table, rate: f64, seed: u64) -> Self {
        assert!(rate > 0.0 && rate <= 1.0);
        let n = table.row_count();
        let k = ((n as f64 * rate).round() as usize).clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<usize> = if k == n {
            (0..n).collect()
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            let (picked, _) = idx.partial_shuffle(&mut rng, k);
            let mut picked = picked.to_vec();
            picked.sort_unstable();
            picked
        };
        let d = table.attr_count();
        let mut raw = Vec::with_capacity(d);
        let mut cdf = Vec::with_capacity(d);
        let mut rmis = Vec::with_capacity(d);
        for attr in 0..d {
            let col = table.column(attr);
            let values: Vec<u64> = rows.iter().map(|&r| col.get(r)).collect();
            let mut sorted = values.clone();
            sorted.sort_unstable();
            let rmi = Rmi64::fit_sorted(&sorted);
            let evals: Vec<f64> = values.iter().map(|&v| rmi.eval(v)).collect();
            raw.push(values);
            cdf.push(evals);
            rmis.push(rmi);
        }
        SampledTable {
            rate: rows.len() as f64 / n as f64,
            raw,
            cdf,
            rmis,
            total_rows: n,
        }
    }

    pub fn len(&self) -> usize {
        self.raw.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-layout scratch for estimating stats of many queries against one
/// sampled table: each sample row's grid coordinates, computed once.
pub struct LayoutEvaluator<'a> {
    sample: &'a SampledTable,
    layout: &'a Layout,
    cols: Vec<Vec<u32>>,
    strides: Vec<u64>,
}

impl<'a> LayoutEvaluator<'a> {
    pub fn new(sample: &'a SampledTable, layout: &'a Layout) -> Self {
        let k = sample.len();
        let mut cols = Vec::with_capacity(layout.grid_dims().len());
        for (g, &attr) in layout.grid_dims().iter().enumerate() {
            let c = layout.column_counts[g];
            let mut v = Vec::with_capacity(k);
            if layout.flattened {
                for &f in &sample.cdf[attr] {
                    v.push(((f * c as f64) as u64).min(c - 1) as u32);
                }
            } else {
                let (min, max) = sample.rmis[attr].domain();
                let bucketing = crate::grid::Bucketing::EqualWidth { min, max };
                for &value in &sample.raw[attr] {
                    v.push(bucketing.bucket(value, c) as u32);
                }
            }
            cols.push(v);
        }
        LayoutEvaluator {
            sample,
            layout,
            cols,
            strides: layout.strides(),
        }
    }

    fn query_spans(&self, q: &Query) -> Option<Vec<(u64, u64, bool)>> {
        let mut spans = Vec::with_capacity(self.layout.grid_dims().len());
        for (g, &attr) in self.layout.grid_dims().iter().enumerate() {
            let c = self.layout.column_counts[g];
            match q.filters[attr] {
                None => spans.push((0, c - 1, false)),
                Some((lo, hi)) => {
                    let rmi = &self.sample.rmis[attr];
                    let (dom_min, dom_max) = rmi.domain();
                    if hi < dom_min || lo > dom_max {
                        return None;
                    }
                    let (col_lo, col_hi) = if self.layout.flattened {
                        (rmi.bucket(lo.max(dom_min), c), rmi.bucket(hi.min(dom_max), c))
                    } else {
                        let b = crate::grid::Bucketing::EqualWidth {
                            min: dom_min,
                            max: dom_max,
                        };
                        (b.bucket(lo.max(dom_min), c), b.bucket(hi.min(dom_max), c))
                    };
                    spans.push((col_lo, col_hi, true));
                }
            }
        }
        Some(spans)
    }

    /// Estimate the stats `execute` would measure, scaling sample counts
    /// by the inverse sampling rate. Phase times are zero.
    pub fn estimate(&self, q: &Query) -> QueryStats {
        let mut stats = QueryStats {
            total_cells: self.layout.total_cells(),
            dims_filtered: q.filtered_dims() as u32,
            ..Default::default()
        };
        let sort_attr = self.layout.sort_dim();
        let sort_filter = q.filters[sort_attr];
        stats.filters_sort_dim = sort_filter.is_some();
        let Some(spans) = self.query_spans(q) else {
            return stats;
        };
        let mut n_c = 1u64;
        for &(lo, hi, _) in &spans {
            n_c *= hi - lo + 1;
        }
        stats.cells_visited = n_c;

        let residual_free = q.filters.iter().enumerate().all(|(attr, f)| {
            f.is_none() || attr == sort_attr || self.layout.grid_dims().contains(&attr)
        });

        let g = spans.len();
        let k = self.sample.len();
        let inv_rate = 1.0 / self.sample.rate;
        let mut in_cells = 0u64;
        let mut exact = 0u64;
        // Per intersected cell: (population, rows surviving refinement).
        let mut per_cell: HashMap<u64, (u64, u64)> = HashMap::new();
        let sort_raw = &self.sample.raw[sort_attr];
        for row in 0..k {
            let mut inside = true;
            let mut interior = true;
            let mut linear = 0u64;
            for dim in 0..g {
                let col = self.cols[dim][row] as u64;
                let (lo, hi, filtered) = spans[dim];
                if col < lo || col > hi {
                    inside = false;
                    break;
                }
                if filtered && (col == lo || col == hi) {
                    interior = false;
                }
                linear += col * self.strides[dim];
            }
            if !inside {
                continue;
            }
            let entry = per_cell.entry(linear).or_insert((0, 0));
            entry.0 += 1;
            let sort_ok = match sort_filter {
                Some((a, b)) => {
                    let v = sort_raw[row];
                    v >= a && v <= b
                }
                None => true,
            };
            if sort_ok {
                entry.1 += 1;
                in_cells += 1;
                if interior && residual_free {
                    exact += 1;
                }
            }
        }

        stats.points_scanned = (in_cells as f64 * inv_rate).round() as u64;
        stats.exact_points = (exact as f64 * inv_rate).round() as u64;
        stats.num_ranges = per_cell.values().filter(|(_, m)| *m > 0).count() as u64;
        let mut counts: Vec<f64> = per_cell
            .values()
            .map(|&(pop, _)| pop as f64 * inv_rate)
            .collect();
        counts.sort_by(|a, b| a.total_cmp(b));
        let zeros = (n_c as usize).saturating_sub(counts.len());
        let total_pts: f64 = counts.iter().sum();
        stats.cell_size_avg = if n_c > 0 { total_pts / n_c as f64 } else { 0.0 };
        stats.cell_size_p50 = quantile_with_zeros(&counts, zeros, n_c as usize, 0.50);
        stats.cell_size_p90 = quantile_with_zeros(&counts, zeros, n_c as usize, 0.90);
        stats.cell_size_p99 = quantile_with_zeros(&counts, zeros, n_c as usize, 0.99);
        stats.fill_derived();
        stats
    }
}

/// One-off estimate for a (sample, layout, query) triple.
pub fn estimate_stats(sample: &SampledTable, layout: &Layout, q: &Query) -> QueryStats {
    LayoutEvaluator::new(sample, layout).estimate(q)
}

#[cfg(test)]
mod tests;
