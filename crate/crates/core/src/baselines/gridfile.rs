//! Grid file: an incrementally grown grid where buckets own one or more
//! adjacent blocks. Inserting into a full bucket splits it, preferring
//! an existing block boundary and otherwise cutting the bucket region at
//! its midpoint along a round-robin dimension. Bucket contents stay
//! unsorted, so a touched bucket is always scanned whole.

use std::time::{Duration, Instant};

use crate::baselines::{BuildStats, MultiDimIndex};
use crate::cost::QueryStats;
use crate::error::{Error, Result};
use crate::store::{scan, AggregateResult, PhysicalRange, Query, Table};

#[derive(Debug, Clone)]
struct Bucket {
    lo: Vec<u64>,
    hi: Vec<u64>,
    rows: Vec<u32>,
}

impl Bucket {
    fn contains(&self, point: &[u64]) -> bool {
        point
            .iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }
}

pub struct GridFile {
    table: Table,
    buckets: Vec<(Vec<u64>, Vec<u64>, usize, usize)>,
    scales_len: u64,
    page_size: usize,
    build: BuildStats,
}

impl GridFile {
    /// Incremental build. Heavily skewed data can make splitting
    /// degenerate, so construction aborts once `budget` elapses.
    pub fn build(table: &Table, page_size: usize, budget: Duration) -> Result<Self> {
        let t0 = Instant::now();
        let d = table.attr_count();
        let n = table.row_count();
        let page_size = page_size.max(1);
        let mut domain_lo = vec![0u64; d];
        let mut domain_hi = vec![u64::MAX; d];
        for attr in 0..d {
            let col = table.column(attr);
            let mut min = u64::MAX;
            let mut max = 0u64;
            for v in col.iter() {
                min = min.min(v);
                max = max.max(v);
            }
            domain_lo[attr] = if n == 0 { 0 } else { min };
            domain_hi[attr] = if n == 0 { 0 } else { max };
        }
        let mut buckets = vec![Bucket {
            lo: domain_lo,
            hi: domain_hi,
            rows: Vec::new(),
        }];
        let mut scales: Vec<Vec<u64>> = vec![Vec::new(); d];
        let mut split_cursor = 0usize;
        let mut point = vec![0u64; d];
        for row in 0..n {
            if row % 4096 == 0 && t0.elapsed() > budget {
                return Err(Error::BuildBudget(format!(
                    "grid file build passed {budget:?} after {row} of {n} rows \
                     ({} buckets); the data is likely too skewed for this page size",
                    buckets.len()
                )));
            }
            for (attr, p) in point.iter_mut().enumerate() {
                *p = table.value(attr, row);
            }
            let idx = buckets
                .iter()
                .position(|b| b.contains(&point))
                .expect("buckets tile the domain");
            buckets[idx].rows.push(row as u32);
            let mut overfull = idx;
            while buckets[overfull].rows.len() > page_size {
                match split_bucket(&mut buckets, overfull, &mut scales, &mut split_cursor, table) {
                    Some(new_idx) => {
                        // Continue with whichever side still overflows.
                        overfull = if buckets[overfull].rows.len() > page_size {
                            overfull
                        } else {
                            new_idx
                        };
                    }
                    None => break,
                }
            }
        }
        // Physical layout: buckets in box order, contents unsorted.
        let mut order: Vec<usize> = (0..buckets.len()).collect();
        order.sort_by(|&a, &b| buckets[a].lo.cmp(&buckets[b].lo));
        let mut gather = Vec::with_capacity(n);
        let mut finalized = Vec::with_capacity(buckets.len());
        for &b in &order {
            let start = gather.len();
            gather.extend_from_slice(&buckets[b].rows);
            finalized.push((
                buckets[b].lo.clone(),
                buckets[b].hi.clone(),
                start,
                gather.len(),
            ));
        }
        let reordered = table.reorder(&gather);
        let scales_len: u64 = scales.iter().map(|s| s.len() as u64).sum();
        let bytes = finalized.len() as u64 * (2 * d as u64 * 8 + 16) + scales_len * 8;
        Ok(GridFile {
            table: reordered,
            buckets: finalized,
            scales_len,
            page_size,
            build: BuildStats {
                build_seconds: t0.elapsed().as_secs_f64(),
                nodes: scales_len,
                pages: 0,
                depth: 0,
                bytes,
            },
        })
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn bucket_ranges(&self) -> Vec<(usize, usize)> {
        self.buckets.iter().map(|b| (b.2, b.3)).collect()
    }
}

/// Split `idx`, preferring an existing interior boundary in any
/// dimension, else a new midpoint cut along the round-robin dimension.
/// Returns the new bucket's index, or `None` when nothing can split.
fn split_bucket(
    buckets: &mut Vec<Bucket>,
    idx: usize,
    scales: &mut [Vec<u64>],
    split_cursor: &mut usize,
    table: &Table,
) -> Option<usize> {
    let d = scales.len();
    let (lo, hi) = (buckets[idx].lo.clone(), buckets[idx].hi.clone());
    // A cut at value b turns [lo, hi] into [lo, b-1] and [b, hi]; any
    // existing scale boundary strictly inside the box qualifies.
    let mut cut: Option<(usize, u64)> = None;
    for step in 0..d {
        let dim = (*split_cursor + step) % d;
        let interior: Vec<u64> = scales[dim]
            .iter()
            .copied()
            .filter(|&b| b > lo[dim] && b <= hi[dim])
            .collect();
        if !interior.is_empty() {
            let mid = lo[dim] / 2 + hi[dim] / 2;
            let best = interior
                .iter()
                .copied()
                .min_by_key(|&b| b.abs_diff(mid))
                .unwrap();
            cut = Some((dim, best));
            break;
        }
    }
    if cut.is_none() {
        for step in 0..d {
            let dim = (*split_cursor + step) % d;
            if hi[dim] > lo[dim] {
                let b = lo[dim] + (hi[dim] - lo[dim] + 1) / 2;
                scales[dim].push(b);
                scales[dim].sort_unstable();
                cut = Some((dim, b.max(lo[dim] + 1)));
                break;
            }
        }
    }
    let (dim, b) = cut?;
    *split_cursor = (*split_cursor + 1) % d;
    let rows = std::mem::take(&mut buckets[idx].rows);
    let (lower, upper): (Vec<u32>, Vec<u32>) = rows
        .iter()
        .partition(|&&r| table.value(dim, r as usize) < b);
    buckets[idx].rows = lower;
    buckets[idx].hi[dim] = b - 1;
    let mut new_lo = lo;
    new_lo[dim] = b;
    buckets.push(Bucket {
        lo: new_lo,
        hi,
        rows: upper,
    });
    Some(buckets.len() - 1)
}

impl MultiDimIndex for GridFile {
    fn name(&self) -> &'static str {
        "gridfile"
    }

    fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)> {
        let t0 = Instant::now();
        let mut ranges = Vec::new();
        let mut sizes = Vec::new();
        let mut visited = 0u64;
        for (lo, hi, start, end_excl) in &self.buckets {
            if *start == *end_excl {
                continue;
            }
            let overlap = q.filters.iter().enumerate().all(|(i, f)| match f {
                None => true,
                Some((ql, qh)) => hi[i] >= *ql && lo[i] <= *qh,
            });
            if !overlap {
                continue;
            }
            visited += 1;
            // The whole bucket is scanned; its box decides exactness.
            let exact = q.filters.iter().enumerate().all(|(i, f)| match f {
                None => true,
                Some((ql, qh)) => lo[i] >= *ql && hi[i] <= *qh,
            });
            sizes.push((end_excl - start) as u64);
            ranges.push(PhysicalRange::new(*start, *end_excl - 1, exact));
        }
        ranges.sort_by_key(|r| r.start);
        let t1 = Instant::now();
        let (res, stats) = scan(&self.table, &ranges, q)?;
        let t2 = Instant::now();
        Ok((
            res,
            QueryStats::from_index_scan(
                visited,
                &stats,
                res.rows,
                self.buckets.len() as u64,
                &mut sizes,
                q.filtered_dims() as u32,
                [t0, t1, t2],
            ),
        ))
    }

    fn build_stats(&self) -> BuildStats {
        let mut b = self.build.clone();
        b.pages = self.buckets.len() as u64;
        b.nodes = self.scales_len;
        b
    }

    fn index_size_bytes(&self) -> u64 {
        self.build.bytes
    }
}
