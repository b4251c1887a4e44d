//! Z-value indexes: points sorted by the interleaving of the top
//! `64 / d` bits of every dimension, the most selective dimension at the
//! least significant bit.
//!
//! The Z-order index groups the sorted points into fixed pages with a
//! per-dimension min/max box each, and scans every page between the
//! query rectangle's corner codes whose box intersects the rectangle.
//! The UB-tree stores only each page's minimum Z-value and instead walks
//! the code range point by point, computing the next in-rectangle
//! Z-value whenever the curve exits the rectangle and skipping ahead.

use std::time::Instant;

use crate::baselines::morton::ZSpace;
use crate::baselines::{BuildStats, MultiDimIndex, Quantizer};
use crate::cost::QueryStats;
use crate::error::Result;
use crate::store::{scan, AggregateResult, PhysicalRange, Query, Table};

struct ZBase {
    table: Table,
    zvals: Vec<u64>,
    space: ZSpace,
    quantizer: Quantizer,
    /// Attribute consuming Z bit position `i` (position 0 = LSB).
    dim_order: Vec<usize>,
    page_size: usize,
    build: BuildStats,
}

fn build_base(table: &Table, dim_order: Vec<usize>, page_size: usize) -> ZBase {
    let t0 = Instant::now();
    let d = table.attr_count();
    assert_eq!(dim_order.len(), d);
    assert!(page_size >= 1);
    let bits = (64 / d as u32).max(1);
    let quantizer = Quantizer::fit(table, bits);
    let space = ZSpace::new(d, bits);
    let n = table.row_count();
    let mut keyed: Vec<(u64, u32)> = Vec::with_capacity(n);
    let mut coords = vec![0u64; d];
    for row in 0..n {
        for (pos, &attr) in dim_order.iter().enumerate() {
            coords[pos] = quantizer.bucket(attr, table.value(attr, row));
        }
        keyed.push((space.interleave(&coords), row as u32));
    }
    keyed.sort_unstable();
    let gather: Vec<u32> = keyed.iter().map(|k| k.1).collect();
    let table = table.reorder(&gather);
    let zvals: Vec<u64> = keyed.iter().map(|k| k.0).collect();
    let pages = n.div_ceil(page_size.max(1)) as u64;
    ZBase {
        table,
        zvals,
        space,
        quantizer,
        dim_order,
        page_size,
        build: BuildStats {
            build_seconds: t0.elapsed().as_secs_f64(),
            nodes: 0,
            pages,
            depth: 1,
            bytes: 0,
        },
    }
}

impl ZBase {
    /// Query rectangle as bucket ranges in Z-dimension order, plus the
    /// corner codes.
    fn query_rect(&self, q: &Query) -> Option<(Vec<(u64, u64)>, u64, u64)> {
        let by_attr = self.quantizer.query_buckets(q)?;
        let rect: Vec<(u64, u64)> = self.dim_order.iter().map(|&a| by_attr[a]).collect();
        let lo: Vec<u64> = rect.iter().map(|r| r.0).collect();
        let hi: Vec<u64> = rect.iter().map(|r| r.1).collect();
        Some((rect, self.space.interleave(&lo), self.space.interleave(&hi)))
    }
}

/// Z-ordered pages with per-dimension min/max boxes.
pub struct ZOrderIndex {
    base: ZBase,
    /// Per page, per Z dimension: quantized min and max.
    boxes: Vec<(Vec<u64>, Vec<u64>)>,
}

impl ZOrderIndex {
    pub fn build(table: &Table, dim_order: Vec<usize>, page_size: usize) -> Self {
        let mut base = build_base(table, dim_order, page_size);
        let d = base.space.dims;
        let n = base.zvals.len();
        let mut boxes = Vec::with_capacity(n.div_ceil(page_size));
        for page in base.zvals.chunks(page_size) {
            let mut lo = vec![u64::MAX; d];
            let mut hi = vec![0u64; d];
            for &z in page {
                let coords = base.space.deinterleave(z);
                for i in 0..d {
                    lo[i] = lo[i].min(coords[i]);
                    hi[i] = hi[i].max(coords[i]);
                }
            }
            boxes.push((lo, hi));
        }
        base.build.bytes =
            (base.zvals.len() * 8 + boxes.len() * d * 16 + boxes.len() * 8) as u64;
        ZOrderIndex { base, boxes }
    }

    pub fn table(&self) -> &Table {
        &self.base.table
    }
}

impl MultiDimIndex for ZOrderIndex {
    fn name(&self) -> &'static str {
        "zorder"
    }

    fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)> {
        let t0 = Instant::now();
        let mut ranges = Vec::new();
        let mut sizes = Vec::new();
        let mut visited = 0u64;
        if let Some((rect, zmin, zmax)) = self.base.query_rect(q) {
            let lo_pos = self.base.zvals.partition_point(|&z| z < zmin);
            let hi_pos = self.base.zvals.partition_point(|&z| z <= zmax);
            if lo_pos < hi_pos {
                let ps = self.base.page_size;
                let first_page = lo_pos / ps;
                let last_page = (hi_pos - 1) / ps;
                for page in first_page..=last_page {
                    visited += 1;
                    let (box_lo, box_hi) = &self.boxes[page];
                    let overlaps = rect
                        .iter()
                        .enumerate()
                        .all(|(i, &(rl, rh))| box_hi[i] >= rl && box_lo[i] <= rh);
                    if !overlaps {
                        continue;
                    }
                    // Strictly inside the filtered bucket ranges means
                    // every raw value matches too.
                    let exact = rect.iter().enumerate().all(|(i, &(rl, rh))| {
                        let attr = self.base.dim_order[i];
                        q.filters[attr].is_none() || (box_lo[i] > rl && box_hi[i] < rh)
                    });
                    let start = (page * ps).max(lo_pos);
                    let end = ((page + 1) * ps).min(hi_pos) - 1;
                    sizes.push((end - start + 1) as u64);
                    ranges.push(PhysicalRange::new(start, end, exact));
                }
            }
        }
        let t1 = Instant::now();
        let (res, stats) = scan(&self.base.table, &ranges, q)?;
        let t2 = Instant::now();
        Ok((
            res,
            QueryStats::from_index_scan(
                visited,
                &stats,
                res.rows,
                self.base.build.pages,
                &mut sizes,
                q.filtered_dims() as u32,
                [t0, t1, t2],
            ),
        ))
    }

    fn build_stats(&self) -> BuildStats {
        self.base.build.clone()
    }

    fn index_size_bytes(&self) -> u64 {
        self.base.build.bytes
    }
}

/// Z-ordered pages with minimum Z-values and skip-ahead scanning.
pub struct UbTree {
    base: ZBase,
    page_min_z: Vec<u64>,
}

impl UbTree {
    pub fn build(table: &Table, dim_order: Vec<usize>, page_size: usize) -> Self {
        let mut base = build_base(table, dim_order, page_size);
        let page_min_z: Vec<u64> = base
            .zvals
            .chunks(page_size)
            .map(|page| page[0])
            .collect();
        base.build.bytes = (base.zvals.len() * 8 + page_min_z.len() * 8) as u64;
        UbTree { base, page_min_z }
    }

    pub fn table(&self) -> &Table {
        &self.base.table
    }

    pub fn page_min_z(&self) -> &[u64] {
        &self.page_min_z
    }
}

impl MultiDimIndex for UbTree {
    fn name(&self) -> &'static str {
        "ubtree"
    }

    fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)> {
        let t0 = Instant::now();
        let mut ranges: Vec<PhysicalRange> = Vec::new();
        let mut sizes = Vec::new();
        let mut jumps = 0u64;
        if let Some((_, zmin, zmax)) = self.base.query_rect(q) {
            let zvals = &self.base.zvals;
            let mut pos = zvals.partition_point(|&z| z < zmin);
            let end = zvals.partition_point(|&z| z <= zmax);
            let mut run_start: Option<usize> = None;
            while pos < end {
                let z = zvals[pos];
                if self.base.space.in_rect(z, zmin, zmax) {
                    if run_start.is_none() {
                        run_start = Some(pos);
                    }
                    pos += 1;
                    continue;
                }
                if let Some(s) = run_start.take() {
                    sizes.push((pos - s) as u64);
                    ranges.push(PhysicalRange::new(s, pos - 1, false));
                }
                // The curve left the rectangle: find the next code
                // inside it, locate the page holding that code by its
                // minimum Z-value, then the position within the page.
                jumps += 1;
                match self.base.space.next_in_rect(z, zmin, zmax) {
                    Some(target) => {
                        debug_assert!(target > z, "skip-ahead must advance");
                        let page = self
                            .page_min_z
                            .partition_point(|&m| m <= target)
                            .max(1)
                            - 1;
                        let pstart = page * self.base.page_size;
                        let pend = (pstart + self.base.page_size).min(zvals.len());
                        let next =
                            pstart + zvals[pstart..pend].partition_point(|&v| v < target);
                        debug_assert!(next > pos);
                        pos = next;
                    }
                    None => break,
                }
            }
            if let Some(s) = run_start.take() {
                sizes.push((end - s) as u64);
                ranges.push(PhysicalRange::new(s, end - 1, false));
            }
        }
        let t1 = Instant::now();
        let (res, stats) = scan(&self.base.table, &ranges, q)?;
        let t2 = Instant::now();
        Ok((
            res,
            QueryStats::from_index_scan(
                ranges.len() as u64 + jumps,
                &stats,
                res.rows,
                self.base.build.pages,
                &mut sizes,
                q.filtered_dims() as u32,
                [t0, t1, t2],
            ),
        ))
    }

    fn build_stats(&self) -> BuildStats {
        self.base.build.clone()
    }

    fn index_size_bytes(&self) -> u64 {
        self.base.build.bytes
    }
}
