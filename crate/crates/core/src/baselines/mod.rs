//! Baseline multi-dimensional indexes, all speaking the same query
//! interface over the same column store: full scan, a clustered
//! single-dimension learned index, a Z-order index, a UB-tree, a
//! hyperoctree, a k-d tree, and a grid file.

mod clustered;
mod gridfile;
mod kdtree;
pub mod morton;
mod octree;
mod zorder;

pub use clustered::ClusteredIndex;
pub use gridfile::GridFile;
pub use kdtree::KdTree;
pub use octree::Hyperoctree;
pub use zorder::{UbTree, ZOrderIndex};

use std::time::Instant;

use crate::cost::QueryStats;
use crate::error::Result;
use crate::grid::GridIndex;
use crate::store::{scan, AggregateResult, PhysicalRange, Query, Table};

/// Structure counters reported by every build.
#[derive(Debug, Clone, Default)]
pub struct BuildStats {
    pub build_seconds: f64,
    pub nodes: u64,
    pub pages: u64,
    pub depth: u32,
    pub bytes: u64,
}

/// Common surface of every index in the benchmark, the learned grid
/// included.
pub trait MultiDimIndex {
    fn name(&self) -> &'static str;
    fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)>;
    fn build_stats(&self) -> BuildStats;
    fn index_size_bytes(&self) -> u64;
}

impl MultiDimIndex for GridIndex {
    fn name(&self) -> &'static str {
        "lgrid"
    }

    fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)> {
        GridIndex::execute(self, q)
    }

    fn build_stats(&self) -> BuildStats {
        BuildStats {
            build_seconds: self.build_seconds(),
            nodes: self.plms().len() as u64,
            pages: self.cell_table().cells(),
            depth: 1,
            bytes: self.index_size_bytes(),
        }
    }

    fn index_size_bytes(&self) -> u64 {
        GridIndex::index_size_bytes(self)
    }
}

/// The no-index baseline: visit every row, touching only the filtered
/// columns.
#[derive(Debug, Clone)]
pub struct FullScanIndex {
    table: Table,
}

impl FullScanIndex {
    pub fn new(table: Table) -> Self {
        FullScanIndex { table }
    }

    pub fn table(&self) -> &Table {
        &self.table
    }
}

impl MultiDimIndex for FullScanIndex {
    fn name(&self) -> &'static str {
        "full_scan"
    }

    fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)> {
        let t0 = Instant::now();
        let n = self.table.row_count();
        let ranges = if n == 0 {
            Vec::new()
        } else {
            vec![PhysicalRange::new(0, n - 1, q.filtered_dims() == 0)]
        };
        let t1 = Instant::now();
        let (res, stats) = scan(&self.table, &ranges, q)?;
        let t2 = Instant::now();
        let mut sizes = vec![n as u64];
        Ok((
            res,
            QueryStats::from_index_scan(
                1,
                &stats,
                res.rows,
                1,
                &mut sizes,
                q.filtered_dims() as u32,
                [t0, t1, t2],
            ),
        ))
    }

    fn build_stats(&self) -> BuildStats {
        BuildStats {
            pages: 1,
            ..Default::default()
        }
    }

    fn index_size_bytes(&self) -> u64 {
        0
    }
}

/// Equal-width quantization of raw values into `2^bits` buckets per
/// dimension, shared by the Z-value indexes.
#[derive(Debug, Clone)]
pub(crate) struct Quantizer {
    domains: Vec<(u64, u64)>,
    bits: u32,
}

impl Quantizer {
    pub(crate) fn fit(table: &Table, bits: u32) -> Self {
        let mut domains = Vec::with_capacity(table.attr_count());
        for attr in 0..table.attr_count() {
            let col = table.column(attr);
            let mut min = u64::MAX;
            let mut max = 0u64;
            for v in col.iter() {
                min = min.min(v);
                max = max.max(v);
            }
            if table.row_count() == 0 {
                min = 0;
                max = 0;
            }
            domains.push((min, max));
        }
        Quantizer { domains, bits }
    }

    fn top(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    #[inline]
    pub(crate) fn bucket(&self, attr: usize, v: u64) -> u64 {
        let (min, max) = self.domains[attr];
        if v <= min {
            return 0;
        }
        if v >= max {
            return self.top();
        }
        let span = (max - min) as u128 + 1;
        let scaled = ((v - min) as u128) << self.bits;
        ((scaled / span) as u64).min(self.top())
    }

    /// Per-attribute bucket ranges of a query, or `None` when a filtered
    /// attribute misses the domain entirely.
    pub(crate) fn query_buckets(&self, q: &Query) -> Option<Vec<(u64, u64)>> {
        let mut out = Vec::with_capacity(self.domains.len());
        for (attr, &(min, max)) in self.domains.iter().enumerate() {
            match q.filters[attr] {
                None => out.push((0, self.top())),
                Some((lo, hi)) => {
                    if hi < min || lo > max {
                        return None;
                    }
                    out.push((self.bucket(attr, lo.max(min)), self.bucket(attr, hi.min(max))));
                }
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests;
