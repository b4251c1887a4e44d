//! Benchmark harness: run workloads over indexes with warmups and
//! repetitions, cross-checking every query against a full scan before
//! anything is timed, and emit per-workload measurement rows.
//!
//! Reported statistics per (index, workload): scan overhead SO (points
//! scanned per matching row), TPS (scan nanoseconds per scanned point),
//! ST/IT/TT (mean scan, index, and total milliseconds per query), index
//! bytes, and build seconds. Timed regions are single-threaded.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    ClusteredIndex, FullScanIndex, GridFile, Hyperoctree, KdTree, MultiDimIndex, UbTree,
    ZOrderIndex,
};
use crate::cost::{SampledTable, WeightModel};
use crate::error::{Error, Result};
use crate::grid::{GridConfig, GridIndex, Layout};
use crate::optimizer::{avg_selectivity, find_optimal_layout, OptimizationConfig};
use crate::store::{full_scan, Query, Table};
use crate::workload::{
    generate_dataset, generate_workload, split_train_test, DatasetSpec, WorkloadSpec,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub repetitions: u32,
    pub warmup: u32,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repetitions: 3,
            warmup: 1,
            seed: 0xbe7c,
        }
    }
}

/// Which index to stand up; page sizes and expert counts are per-index
/// parameters, the learned grid takes a layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexSpec {
    FullScan,
    Clustered {
        #[serde(default)]
        leaf_experts: Option<usize>,
    },
    Zorder { page_size: usize },
    Ubtree { page_size: usize },
    Octree { page_size: usize },
    Kdtree { page_size: usize },
    Gridfile {
        page_size: usize,
        #[serde(default)]
        budget_s: Option<u64>,
    },
    Grid { layout: Layout },
}

/// One timed execution of one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: usize,
    pub rep: u32,
    pub result_rows: u64,
    pub points_scanned: u64,
    pub index_ns: u64,
    pub scan_ns: u64,
    pub total_ns: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchResult {
    pub index: String,
    pub workload: String,
    pub so: f64,
    pub tps_ns: f64,
    pub st_ms: f64,
    pub it_ms: f64,
    pub tt_ms: f64,
    pub bytes: u64,
    pub build_s: f64,
    pub raw: Vec<QueryRecord>,
}

impl BenchResult {
    fn from_records(
        index: &str,
        workload: &str,
        bytes: u64,
        build_s: f64,
        raw: Vec<QueryRecord>,
    ) -> Self {
        let runs = raw.len().max(1) as f64;
        let total_points: u64 = raw.iter().map(|r| r.points_scanned).sum();
        let total_rows: u64 = raw.iter().map(|r| r.result_rows).sum();
        let total_scan_ns: u64 = raw.iter().map(|r| r.scan_ns).sum();
        let total_index_ns: u64 = raw.iter().map(|r| r.index_ns).sum();
        let total_total_ns: u64 = raw.iter().map(|r| r.total_ns).sum();
        BenchResult {
            index: index.to_string(),
            workload: workload.to_string(),
            so: if total_rows > 0 {
                total_points as f64 / total_rows as f64
            } else {
                f64::NAN
            },
            tps_ns: if total_points > 0 {
                total_scan_ns as f64 / total_points as f64
            } else {
                0.0
            },
            st_ms: total_scan_ns as f64 / runs / 1e6,
            it_ms: total_index_ns as f64 / runs / 1e6,
            tt_ms: total_total_ns as f64 / runs / 1e6,
            bytes,
            build_s,
            raw,
        }
    }
}

/// Run every query through one index: correctness cross-check first,
/// then warmup passes, then timed repetitions.
pub fn bench_index(
    index: &dyn MultiDimIndex,
    oracle_table: &Table,
    queries: &[Query],
    cfg: &BenchConfig,
    workload_name: &str,
    build_stats_bytes: (u64, f64),
) -> Result<BenchResult> {
    for (qi, q) in queries.iter().enumerate() {
        let (got, _) = index.execute(q)?;
        let expect = full_scan(oracle_table, q)?;
        if got != expect {
            return Err(Error::ResultMismatch {
                query: qi,
                lhs: index.name().to_string(),
                rhs: "full_scan".to_string(),
                detail: format!("{got:?} vs {expect:?}"),
            });
        }
    }
    for _ in 0..cfg.warmup {
        for q in queries {
            index.execute(q)?;
        }
    }
    let mut raw = Vec::with_capacity(queries.len() * cfg.repetitions as usize);
    for rep in 0..cfg.repetitions.max(1) {
        for (qi, q) in queries.iter().enumerate() {
            let (res, stats) = index.execute(q)?;
            raw.push(QueryRecord {
                query: qi,
                rep,
                result_rows: res.rows,
                points_scanned: stats.points_scanned,
                index_ns: stats.index_ns(),
                scan_ns: stats.scan_ns,
                total_ns: stats.total_ns,
            });
        }
    }
    let (bytes, build_s) = build_stats_bytes;
    Ok(BenchResult::from_records(
        index.name(),
        workload_name,
        bytes,
        build_s,
        raw,
    ))
}

/// Bench several indexes over the same workload.
pub fn run_bench(
    indexes: &[Box<dyn MultiDimIndex>],
    oracle_table: &Table,
    queries: &[Query],
    cfg: &BenchConfig,
    workload_name: &str,
) -> Result<Vec<BenchResult>> {
    let mut out = Vec::with_capacity(indexes.len());
    for index in indexes {
        let stats = index.build_stats();
        out.push(bench_index(
            index.as_ref(),
            oracle_table,
            queries,
            cfg,
            workload_name,
            (index.index_size_bytes(), stats.build_seconds),
        )?);
    }
    Ok(out)
}

/// Attribute order for the baselines: most selective first, measured on
/// a sample against the tuning workload.
pub fn selectivity_order(table: &Table, queries: &[Query], seed: u64) -> Vec<usize> {
    let rate = (50_000.0 / table.row_count().max(1) as f64).clamp(0.001, 1.0);
    let sample = SampledTable::sample(table, rate, seed);
    let sel = avg_selectivity(queries, &sample);
    let mut dims: Vec<usize> = (0..table.attr_count()).collect();
    dims.sort_by(|&a, &b| sel[a].total_cmp(&sel[b]).then(a.cmp(&b)));
    dims
}

/// Stand up one index per its spec. `tuning` drives selectivity-based
/// choices (sort attribute, dimension orders).
pub fn build_index(
    table: &Table,
    spec: &IndexSpec,
    tuning: &[Query],
    grid_cfg: &GridConfig,
    seed: u64,
) -> Result<Box<dyn MultiDimIndex>> {
    let order = selectivity_order(table, tuning, seed);
    Ok(match spec {
        IndexSpec::FullScan => Box::new(FullScanIndex::new(table.clone())),
        IndexSpec::Clustered { leaf_experts } => {
            let experts = leaf_experts.unwrap_or_else(|| {
                ((table.row_count() as f64).sqrt() as usize).clamp(16, 1 << 16)
            });
            Box::new(ClusteredIndex::build(table, order[0], experts))
        }
        IndexSpec::Zorder { page_size } => {
            Box::new(ZOrderIndex::build(table, order, *page_size))
        }
        IndexSpec::Ubtree { page_size } => Box::new(UbTree::build(table, order, *page_size)),
        IndexSpec::Octree { page_size } => Box::new(Hyperoctree::build(table, *page_size)?),
        IndexSpec::Kdtree { page_size } => Box::new(KdTree::build(table, order, *page_size)),
        IndexSpec::Gridfile { page_size, budget_s } => Box::new(GridFile::build(
            table,
            *page_size,
            Duration::from_secs(budget_s.unwrap_or(300)),
        )?),
        IndexSpec::Grid { layout } => {
            Box::new(GridIndex::build(table, layout.clone(), grid_cfg.clone())?)
        }
    })
}

pub const PAGE_SWEEP: [usize; 9] = [256, 512, 1024, 2048, 4096, 8192, 16384, 32768, 65536];

/// Pick the page size minimizing mean total time on the tuning workload.
/// Returns the best (page size, mean total ms).
pub fn tune_page_size<F>(
    build: F,
    oracle_table: &Table,
    tuning: &[Query],
    cfg: &BenchConfig,
) -> Result<(usize, f64)>
where
    F: Fn(usize) -> Result<Box<dyn MultiDimIndex>>,
{
    let mut best: Option<(usize, f64)> = None;
    for &ps in &PAGE_SWEEP {
        let index = match build(ps) {
            Ok(i) => i,
            // A page size that blows the build budget is simply not a
            // candidate.
            Err(Error::BuildBudget(_)) => continue,
            Err(e) => return Err(e),
        };
        let result = bench_index(index.as_ref(), oracle_table, tuning, cfg, "tuning", (0, 0.0))?;
        if best.map_or(true, |(_, tt)| result.tt_ms < tt) {
            best = Some((ps, result.tt_ms));
        }
    }
    best.ok_or_else(|| Error::BuildBudget("no page size survived the build budget".into()))
}

/// The fixed results schema: one CSV row per (index, workload).
pub fn write_results_csv(path: &Path, results: &[BenchResult]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "index,workload,SO,TPS_ns,ST_ms,IT_ms,TT_ms,bytes,build_s")?;
    for r in results {
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6}",
            r.index, r.workload, r.so, r.tps_ns, r.st_ms, r.it_ms, r.tt_ms, r.bytes, r.build_s
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Full results including raw per-query rows, versioned.
pub fn write_results_json(path: &Path, results: &[BenchResult]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let payload = serde_json::json!({
        "version": 1,
        "results": results,
    });
    serde_json::to_writer(std::io::BufWriter::new(file), &payload)?;
    Ok(())
}

/// Which axis a sweep varies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "knob", rename_all = "snake_case")]
pub enum SweepKnob {
    DatasetSize { values: Vec<usize> },
    Selectivity { values: Vec<f64> },
    Dimensions { values: Vec<usize> },
    CellCount { values: Vec<u64> },
    SampleRate { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub knob_value: f64,
    pub result: BenchResult,
}

pub struct SweepContext<'a> {
    pub dataset: &'a DatasetSpec,
    pub workload: &'a WorkloadSpec,
    pub model: Option<&'a WeightModel>,
    /// Fixed layout whose columns the cell-count sweep scales.
    pub base_layout: Option<&'a Layout>,
    pub grid_cfg: GridConfig,
    pub opt_cfg: OptimizationConfig,
    pub bench: BenchConfig,
    pub seed: u64,
}

/// Proportionally rescale a layout's column counts to a total-cell
/// target.
pub fn scale_layout(base: &Layout, target_cells: u64) -> Layout {
    let g = base.column_counts.len();
    if g == 0 {
        return base.clone();
    }
    let current: f64 = base.column_counts.iter().map(|&c| c as f64).product();
    let factor = (target_cells as f64 / current).powf(1.0 / g as f64);
    let counts: Vec<u64> = base
        .column_counts
        .iter()
        .map(|&c| ((c as f64 * factor).round() as u64).max(1))
        .collect();
    Layout::new(base.ordering.clone(), counts, base.flattened)
}

fn optimize_or_base(
    table: &Table,
    train: &[Query],
    ctx: &SweepContext<'_>,
    opt_cfg: &OptimizationConfig,
) -> Result<Layout> {
    match (ctx.model, ctx.base_layout) {
        (Some(model), _) => Ok(find_optimal_layout(table, train, model, opt_cfg)?.layout),
        (None, Some(base)) => Ok(base.clone()),
        (None, None) => Err(Error::InvalidConfig(
            "sweep needs a calibration model or a base layout".into(),
        )),
    }
}

/// One measured grid-index point per knob value.
pub fn sweep(ctx: &SweepContext<'_>, knob: &SweepKnob) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    match knob {
        SweepKnob::DatasetSize { values } => {
            for &rows in values {
                let spec = DatasetSpec {
                    rows,
                    ..ctx.dataset.clone()
                };
                let table = generate_dataset(&spec)?;
                let queries = generate_workload(ctx.workload, &table)?;
                let (train, test) = split_train_test(&queries, ctx.seed)?;
                let layout = optimize_or_base(&table, &train, ctx, &ctx.opt_cfg)?;
                let index = GridIndex::build(&table, layout, ctx.grid_cfg.clone())?;
                let result = bench_index(
                    &index,
                    &table,
                    &test,
                    &ctx.bench,
                    &format!("n={rows}"),
                    (index.index_size_bytes(), index.build_seconds()),
                )?;
                points.push(SweepPoint {
                    knob_value: rows as f64,
                    result,
                });
            }
        }
        SweepKnob::Selectivity { values } => {
            let table = generate_dataset(ctx.dataset)?;
            for &sel in values {
                let mut wspec = ctx.workload.clone();
                for ty in &mut wspec.types {
                    ty.selectivity = sel;
                }
                let queries = generate_workload(&wspec, &table)?;
                let (train, test) = split_train_test(&queries, ctx.seed)?;
                let layout = optimize_or_base(&table, &train, ctx, &ctx.opt_cfg)?;
                let index = GridIndex::build(&table, layout, ctx.grid_cfg.clone())?;
                let result = bench_index(
                    &index,
                    &table,
                    &test,
                    &ctx.bench,
                    &format!("sel={sel}"),
                    (index.index_size_bytes(), index.build_seconds()),
                )?;
                points.push(SweepPoint {
                    knob_value: sel,
                    result,
                });
            }
        }
        SweepKnob::Dimensions { values } => {
            for &dims in values {
                if dims == 0 || dims > ctx.dataset.distributions.len() {
                    return Err(Error::InvalidConfig(format!(
                        "dimension sweep value {dims} outside the dataset spec"
                    )));
                }
                let spec = DatasetSpec {
                    rows: ctx.dataset.rows,
                    distributions: ctx.dataset.distributions[..dims].to_vec(),
                    seed: ctx.dataset.seed,
                };
                let table = generate_dataset(&spec)?;
                let mut wspec = ctx.workload.clone();
                wspec.types.retain(|t| t.dims.iter().all(|&a| a < dims));
                if wspec.types.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "no workload type fits {dims} dimensions"
                    )));
                }
                let queries = generate_workload(&wspec, &table)?;
                let (train, test) = split_train_test(&queries, ctx.seed)?;
                let layout = optimize_or_base(&table, &train, ctx, &ctx.opt_cfg)?;
                let index = GridIndex::build(&table, layout, ctx.grid_cfg.clone())?;
                let result = bench_index(
                    &index,
                    &table,
                    &test,
                    &ctx.bench,
                    &format!("d={dims}"),
                    (index.index_size_bytes(), index.build_seconds()),
                )?;
                points.push(SweepPoint {
                    knob_value: dims as f64,
                    result,
                });
            }
        }
        SweepKnob::CellCount { values } => {
            let base = ctx.base_layout.ok_or_else(|| {
                Error::InvalidConfig("cell-count sweep needs a base layout".into())
            })?;
            let table = generate_dataset(ctx.dataset)?;
            let queries = generate_workload(ctx.workload, &table)?;
            let (_, test) = split_train_test(&queries, ctx.seed)?;
            for &cells in values {
                let layout = scale_layout(base, cells);
                let actual: u64 = layout.total_cells();
                let index = GridIndex::build(&table, layout, ctx.grid_cfg.clone())?;
                let result = bench_index(
                    &index,
                    &table,
                    &test,
                    &ctx.bench,
                    &format!("cells={actual}"),
                    (index.index_size_bytes(), index.build_seconds()),
                )?;
                points.push(SweepPoint {
                    knob_value: actual as f64,
                    result,
                });
            }
        }
        SweepKnob::SampleRate { values } => {
            let model = ctx.model.ok_or_else(|| {
                Error::InvalidConfig("sample-rate sweep needs a calibration model".into())
            })?;
            let table = generate_dataset(ctx.dataset)?;
            let queries = generate_workload(ctx.workload, &table)?;
            let (train, test) = split_train_test(&queries, ctx.seed)?;
            for &rate in values {
                let opt_cfg = OptimizationConfig {
                    data_sample_rate: rate,
                    ..ctx.opt_cfg.clone()
                };
                let layout = find_optimal_layout(&table, &train, model, &opt_cfg)?.layout;
                let index = GridIndex::build(&table, layout, ctx.grid_cfg.clone())?;
                let result = bench_index(
                    &index,
                    &table,
                    &test,
                    &ctx.bench,
                    &format!("rate={rate}"),
                    (index.index_size_bytes(), index.build_seconds()),
                )?;
                points.push(SweepPoint {
                    knob_value: rate,
                    result,
                });
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests;
