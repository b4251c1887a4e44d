//! k-d tree: recursive median splits, dimensions cycled round-robin in
//! decreasing-selectivity order. A dimension whose remaining points all
//! share one value stops being used below that node. Leaves hold at most
//! a page of points, laid out contiguously in depth-first order.

use std::time::Instant;

use crate::baselines::{BuildStats, MultiDimIndex};
use crate::cost::QueryStats;
use crate::error::Result;
use crate::store::{scan, AggregateResult, PhysicalRange, Query, Table};

#[derive(Debug)]
enum Node {
    Internal {
        dim: usize,
        split: u64,
        left: u32,
        right: u32,
    },
    Leaf {
        start: usize,
        end_excl: usize,
        point_lo: Vec<u64>,
        point_hi: Vec<u64>,
    },
}

pub struct KdTree {
    table: Table,
    nodes: Vec<Node>,
    page_size: usize,
    build: BuildStats,
}

struct Builder<'a> {
    table: &'a Table,
    page_size: usize,
    nodes: Vec<Node>,
    order: Vec<u32>,
    depth_seen: u32,
}

impl<'a> Builder<'a> {
    fn leaf(&mut self, mut rows: Vec<u32>) -> u32 {
        let d = self.table.attr_count();
        let mut point_lo = vec![u64::MAX; d];
        let mut point_hi = vec![0u64; d];
        for &r in &rows {
            for i in 0..d {
                let v = self.table.value(i, r as usize);
                point_lo[i] = point_lo[i].min(v);
                point_hi[i] = point_hi[i].max(v);
            }
        }
        let start = self.order.len();
        self.order.append(&mut rows);
        self.nodes.push(Node::Leaf {
            start,
            end_excl: self.order.len(),
            point_lo,
            point_hi,
        });
        (self.nodes.len() - 1) as u32
    }

    /// `dims` is the usable dimension cycle for this subtree; `cursor`
    /// rotates through it.
    fn grow(&mut self, rows: Vec<u32>, dims: &[usize], cursor: usize, depth: u32) -> u32 {
        self.depth_seen = self.depth_seen.max(depth);
        if rows.len() <= self.page_size || dims.is_empty() {
            return self.leaf(rows);
        }
        // Find the next usable dimension, dropping any whose values are
        // all equal within this subtree.
        let mut dims = dims.to_vec();
        let mut cursor = cursor % dims.len();
        let mut split_dim = None;
        for _ in 0..dims.len() {
            let dim = dims[cursor];
            let mut values: Vec<u64> = rows
                .iter()
                .map(|&r| self.table.value(dim, r as usize))
                .collect();
            values.sort_unstable();
            if values[0] == values[values.len() - 1] {
                dims.remove(cursor);
                if dims.is_empty() {
                    break;
                }
                cursor %= dims.len();
                continue;
            }
            // Median value; when duplicates push it to the maximum, back
            // off to the largest value below it so both sides are
            // non-empty.
            let mut split = values[(values.len() / 2).saturating_sub(1).max(0)];
            let max = values[values.len() - 1];
            if split == max {
                let pos = values.partition_point(|&v| v < max);
                split = values[pos - 1];
            }
            split_dim = Some((dim, split));
            break;
        }
        let Some((dim, split)) = split_dim else {
            return self.leaf(rows);
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| self.table.value(dim, r as usize) <= split);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node::Internal {
            dim,
            split,
            left: 0,
            right: 0,
        });
        let next = (cursor + 1) % dims.len();
        let left = self.grow(left_rows, &dims, next, depth + 1);
        let right = self.grow(right_rows, &dims, next, depth + 1);
        match &mut self.nodes[idx as usize] {
            Node::Internal { left: l, right: r, .. } => {
                *l = left;
                *r = right;
            }
            Node::Leaf { .. } => unreachable!(),
        }
        idx
    }
}

impl KdTree {
    /// `dim_order`: dimensions in decreasing selectivity, the round-robin
    /// cycle for split choices.
    pub fn build(table: &Table, dim_order: Vec<usize>, page_size: usize) -> Self {
        let t0 = Instant::now();
        assert_eq!(dim_order.len(), table.attr_count());
        let n = table.row_count();
        let mut builder = Builder {
            table,
            page_size: page_size.max(1),
            nodes: Vec::new(),
            order: Vec::new(),
            depth_seen: 0,
        };
        builder.grow((0..n as u32).collect(), &dim_order, 0, 0);
        let reordered = table.reorder(&builder.order);
        let d = table.attr_count() as u64;
        let mut pages = 0u64;
        let mut bytes = 0u64;
        for node in &builder.nodes {
            match node {
                Node::Internal { .. } => bytes += 24,
                Node::Leaf { .. } => {
                    pages += 1;
                    bytes += 2 * d * 8 + 16;
                }
            }
        }
        KdTree {
            table: reordered,
            nodes: builder.nodes,
            page_size,
            build: BuildStats {
                build_seconds: t0.elapsed().as_secs_f64(),
                nodes: 0,
                pages,
                depth: builder.depth_seen,
                bytes,
            },
        }
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn depth(&self) -> u32 {
        self.build.depth
    }

    pub fn leaf_ranges(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { start, end_excl, .. } => Some((*start, *end_excl)),
                _ => None,
            })
            .collect()
    }
}

impl MultiDimIndex for KdTree {
    fn name(&self) -> &'static str {
        "kdtree"
    }

    fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)> {
        let t0 = Instant::now();
        let mut ranges = Vec::new();
        let mut sizes = Vec::new();
        let mut visited = 0u64;
        let mut stack: Vec<u32> = if self.table.row_count() == 0 {
            Vec::new()
        } else {
            vec![0]
        };
        while let Some(idx) = stack.pop() {
            visited += 1;
            match &self.nodes[idx as usize] {
                Node::Internal {
                    dim,
                    split,
                    left,
                    right,
                } => match q.filters[*dim] {
                    None => {
                        stack.push(*right);
                        stack.push(*left);
                    }
                    Some((lo, hi)) => {
                        if hi > *split {
                            stack.push(*right);
                        }
                        if lo <= *split {
                            stack.push(*left);
                        }
                    }
                },
                Node::Leaf {
                    start,
                    end_excl,
                    point_lo,
                    point_hi,
                } => {
                    if *start == *end_excl {
                        continue;
                    }
                    let overlap = q.filters.iter().enumerate().all(|(i, f)| match f {
                        None => true,
                        Some((ql, qh)) => point_hi[i] >= *ql && point_lo[i] <= *qh,
                    });
                    if !overlap {
                        continue;
                    }
                    let exact = q.filters.iter().enumerate().all(|(i, f)| match f {
                        None => true,
                        Some((ql, qh)) => point_lo[i] >= *ql && point_hi[i] <= *qh,
                    });
                    sizes.push((end_excl - start) as u64);
                    ranges.push(PhysicalRange::new(*start, *end_excl - 1, exact));
                }
            }
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
                self.build.pages,
                &mut sizes,
                q.filtered_dims() as u32,
                [t0, t1, t2],
            ),
        ))
    }

    fn build_stats(&self) -> BuildStats {
        let mut b = self.build.clone();
        b.nodes = self.nodes.len() as u64;
        b
    }

    fn index_size_bytes(&self) -> u64 {
        self.build.bytes
    }
}
